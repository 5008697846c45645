// DOM rendering: the page viewer with box overlays, and the ranked result
// grid. Layout math lives in geometry.ts; these functions only build nodes.

import { QueryResponse, RankedHit } from "./api.js"
import { Box, boxFromList, overlayRect } from "./geometry.js"

export interface OverlaySpec {
  box: Box
  cssClass: string
  label?: string
}

/** Absolutely positioned overlay node for one image-space box. */
export function overlayNode(doc: Document, spec: OverlaySpec, zoom: number): HTMLElement {
  const rect = overlayRect(spec.box, zoom)
  const node = doc.createElement("div")
  node.className = `overlay-box ${spec.cssClass}`
  node.style.left = `${rect.left}px`
  node.style.top = `${rect.top}px`
  node.style.width = `${rect.width}px`
  node.style.height = `${rect.height}px`
  if (spec.label) {
    node.title = spec.label
  }
  return node
}

/** Redraw the overlay layer of the page viewer. */
export function renderOverlays(layer: HTMLElement, specs: OverlaySpec[],
                               zoom: number): void {
  layer.textContent = ""
  for (const spec of specs) {
    layer.appendChild(overlayNode(layer.ownerDocument, spec, zoom))
  }
}

export interface ResultGridOptions {
  pageUrl: (docId: string) => string
  docSize?: (docId: string) => { width: number, height: number } | undefined
  onOpen?: (hit: RankedHit) => void
}

/** Percent-positioned overlay for CSS-scaled thumbnails: alignment is
 *  preserved at any rendered size. */
export function thumbOverlayNode(doc: Document, box: Box,
                                 pageWidth: number, pageHeight: number): HTMLElement {
  const node = doc.createElement("div")
  node.className = "overlay-box hit"
  node.style.left = `${(box.x / pageWidth) * 100}%`
  node.style.top = `${(box.y / pageHeight) * 100}%`
  node.style.width = `${(box.w / pageWidth) * 100}%`
  node.style.height = `${(box.h / pageHeight) * 100}%`
  return node
}

function resultCard(doc: Document, hit: RankedHit,
                    opts: ResultGridOptions): HTMLElement {
  const card = doc.createElement("article")
  card.className = "result-card"
  card.dataset.rank = String(hit.rank)
  card.dataset.docId = hit.doc_id

  const title = doc.createElement("header")
  title.textContent = `#${hit.rank}  ${hit.doc_id}`
  card.appendChild(title)

  const thumb = doc.createElement("div")
  thumb.className = "thumb"
  const img = doc.createElement("img")
  img.src = opts.pageUrl(hit.doc_id)
  img.alt = hit.doc_id
  img.loading = "lazy"
  thumb.appendChild(img)
  const size = opts.docSize?.(hit.doc_id)
  if (size) {
    thumb.appendChild(thumbOverlayNode(doc, boxFromList(hit.box),
                                       size.width, size.height))
  }
  card.appendChild(thumb)

  const score = doc.createElement("footer")
  score.className = "score"
  score.textContent = `score ${hit.score.toFixed(6)}  box [${hit.box.join(", ")}]`
  card.appendChild(score)

  if (opts.onOpen) {
    card.addEventListener("click", () => opts.onOpen!(hit))
  }
  return card
}

/** Ranked result grid; an empty hit list renders an explicit empty state. */
export function renderResults(container: HTMLElement,
                              response: QueryResponse | null,
                              opts: ResultGridOptions): void {
  container.textContent = ""
  const doc = container.ownerDocument
  if (!response) {
    return
  }
  const status = doc.createElement("p")
  status.className = "status-line"
  const t = response.timings
  status.textContent =
    `${response.hits.length} hit(s) — embed ${t.embed_ms.toFixed(1)}ms, ` +
    `scan ${t.scan_ms.toFixed(1)}ms, postproc ${t.postproc_ms.toFixed(1)}ms`
  container.appendChild(status)

  if (response.hits.length === 0) {
    const empty = doc.createElement("p")
    empty.className = "empty-state"
    empty.textContent = "no results"
    container.appendChild(empty)
    return
  }
  const grid = doc.createElement("div")
  grid.className = "result-grid"
  for (const hit of response.hits) {
    grid.appendChild(resultCard(doc, hit, opts))
  }
  container.appendChild(grid)
}

/** Inline error state with a retry hook. */
export function renderError(container: HTMLElement, message: string,
                            onRetry: () => void): void {
  container.textContent = ""
  const doc = container.ownerDocument
  const panel = doc.createElement("div")
  panel.className = "error-panel"
  const text = doc.createElement("p")
  text.textContent = message
  panel.appendChild(text)
  const retry = doc.createElement("button")
  retry.className = "retry"
  retry.textContent = "retry"
  retry.addEventListener("click", onRetry)
  panel.appendChild(retry)
  container.appendChild(panel)
}
