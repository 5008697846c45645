// Typed client for the engine's JSON API. The UI only ever reads state
// (GET /docs, /config, /page/...) and submits queries (POST /query); it
// never mutates anything on the server.

import { Box, boxToList } from "./geometry.js"

export interface RankedHit {
  rank: number
  doc_id: string
  box: [number, number, number, number]
  score: number
}

export interface QueryTimings {
  embed_ms: number
  scan_ms: number
  postproc_ms: number
}

export interface QueryResponse {
  hits: RankedHit[]
  timings: QueryTimings
  mode: string
  metric: string
  top_k: number
}

export interface DocSummary {
  doc_id: string
  width: number
  height: number
}

export interface GroundTruthBox {
  category: string
  box: [number, number, number, number]
  junk: boolean
}

export interface PageBoxes {
  doc_id: string
  width: number
  height: number
  ground_truth: GroundTruthBox[]
}

export interface EngineInfo {
  dim: number
  candidates: number
  documents: number
  queries: number
  mode: string
  top_k: number
  metric: string
  metrics: string[]
}

export interface QueryParams {
  docId: string
  box: Box
  mode: string
  topK: number
  metric: string
  postprocess: boolean
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message)
  }
}

/** The exact JSON body for POST /query; parameters shown in the UI
 *  round-trip into this payload unchanged. */
export function buildQueryPayload(params: QueryParams): Record<string, unknown> {
  return {
    doc_id: params.docId,
    box: boxToList(params.box),
    mode: params.mode,
    top_k: params.topK,
    metric: params.metric,
    postprocess: params.postprocess,
  }
}

function isHit(raw: unknown): raw is RankedHit {
  if (typeof raw !== "object" || raw === null) return false
  const h = raw as Record<string, unknown>
  return typeof h.rank === "number" && typeof h.doc_id === "string"
    && Array.isArray(h.box) && h.box.length === 4
    && h.box.every((v) => typeof v === "number")
    && typeof h.score === "number"
}

export function parseQueryResponse(raw: unknown): QueryResponse {
  if (typeof raw !== "object" || raw === null) {
    throw new ApiError("query response is not an object", 0)
  }
  const r = raw as Record<string, unknown>
  if (!Array.isArray(r.hits) || !r.hits.every(isHit)) {
    throw new ApiError("query response has malformed hits", 0)
  }
  const t = r.timings as Record<string, unknown> | undefined
  if (!t || ["embed_ms", "scan_ms", "postproc_ms"]
      .some((k) => typeof t[k] !== "number")) {
    throw new ApiError("query response has malformed timings", 0)
  }
  return {
    hits: r.hits as RankedHit[],
    timings: r.timings as unknown as QueryTimings,
    mode: String(r.mode),
    metric: String(r.metric),
    top_k: Number(r.top_k),
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class ApiClient {
  constructor(private readonly base: string = "",
              private readonly fetchFn: FetchLike = (input, init) => fetch(input, init)) {}

  pageUrl(docId: string): string {
    return `${this.base}/page/${encodeURIComponent(docId)}`
  }

  private async getJson(path: string): Promise<unknown> {
    const resp = await this.fetchFn(`${this.base}${path}`)
    if (!resp.ok) {
      throw new ApiError(await describeError(resp), resp.status)
    }
    return resp.json()
  }

  async docs(): Promise<DocSummary[]> {
    const raw = await this.getJson("/docs") as { docs: DocSummary[] }
    return raw.docs
  }

  async config(): Promise<EngineInfo> {
    return await this.getJson("/config") as EngineInfo
  }

  async pageBoxes(docId: string): Promise<PageBoxes> {
    return await this.getJson(`/page/${encodeURIComponent(docId)}/boxes`) as PageBoxes
  }

  async query(params: QueryParams): Promise<QueryResponse> {
    const resp = await this.fetchFn(`${this.base}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(buildQueryPayload(params)),
    })
    if (!resp.ok) {
      throw new ApiError(await describeError(resp), resp.status)
    }
    return parseQueryResponse(await resp.json())
  }
}

async function describeError(resp: Response): Promise<string> {
  try {
    const body = await resp.json() as { detail?: unknown }
    if (body && body.detail) return String(body.detail)
  } catch {
    // fall through to the status line
  }
  return `request failed with status ${resp.status}`
}
