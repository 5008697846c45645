// The full interaction loop against a mocked engine: drag a region,
// submit, render the ranked hits, verify overlay alignment, and check
// that stale responses are dropped.

import { readFileSync } from "node:fs"
import { describe, expect, it } from "vitest"

import { ApiClient } from "../src/api.js"
import { renderResults } from "../src/render.js"
import { QuerySequencer, applyDrag, canSubmit, initialState } from "../src/state.js"

const fixtureRaw = JSON.parse(readFileSync(
  "fixtures/query-response.json",
  "utf-8"))

describe("query loop", () => {
  it("drag -> /query -> rank-ordered cards", async () => {
    const requests: Array<Record<string, unknown>> = []
    const client = new ApiClient("", async (url, init) => {
      if (url === "/query") {
        requests.push(JSON.parse(String(init?.body)))
        return new Response(JSON.stringify(fixtureRaw), { status: 200 })
      }
      throw new Error(`unexpected request ${url}`)
    })

    // select a region on page000 with a pointer drag at zoom 2
    let state = { ...initialState(), selectedDoc: "page000",
                  docWidth: 360, docHeight: 360, zoom: 2 }
    state = applyDrag(state, { x: 80, y: 112 }, { x: 144, y: 176 })
    expect(state.selection).toEqual({ x: 40, y: 56, w: 32, h: 32 })
    expect(canSubmit(state)).toBe(true)

    const response = await client.query({
      docId: state.selectedDoc!, box: state.selection!,
      mode: state.mode, topK: state.topK, metric: state.metric,
      postprocess: state.postprocess,
    })

    // the request carried the UI parameters exactly
    expect(requests).toEqual([{
      doc_id: "page000", box: [40, 56, 32, 32], mode: "ps", top_k: 10,
      metric: "cosine", postprocess: false,
    }])

    const pane = document.createElement("div")
    document.body.appendChild(pane)
    renderResults(pane, response, { pageUrl: (d) => `/page/${d}` })
    const ranks = [...pane.querySelectorAll<HTMLElement>(".result-card")]
      .map((c) => Number(c.dataset.rank))
    expect(ranks).toEqual([1, 2])
  })

  it("stale responses are discarded by sequence number", async () => {
    const sequencer = new QuerySequencer()
    const rendered: string[] = []

    const finish = (seq: number, tag: string) => {
      if (sequencer.isCurrent(seq)) rendered.push(tag)
    }
    const first = sequencer.begin()
    const second = sequencer.begin()   // user re-queried before first returned
    finish(first, "first")
    finish(second, "second")
    expect(rendered).toEqual(["second"])
  })
})
