import { readFileSync } from "node:fs"
import { describe, expect, it } from "vitest"

import { parseQueryResponse, QueryResponse } from "../src/api.js"
import { boxFromList, overlayRect } from "../src/geometry.js"
import { overlayNode, renderError, renderOverlays, renderResults,
         thumbOverlayNode } from "../src/render.js"

const fixture = parseQueryResponse(JSON.parse(readFileSync(
  "fixtures/query-response.json",
  "utf-8")))

function container(): HTMLElement {
  const node = document.createElement("div")
  document.body.appendChild(node)
  return node
}

function manyHits(n: number): QueryResponse {
  return {
    hits: Array.from({ length: n }, (_, i) => ({
      rank: i + 1, doc_id: `page${String(i).padStart(3, "0")}`,
      box: [10 * i, 5 * i, 20, 16] as [number, number, number, number],
      score: 0.01 * (i + 1),
    })),
    timings: { embed_ms: 1, scan_ms: 2, postproc_ms: 0 },
    mode: "ps", metric: "cosine", top_k: n,
  }
}

describe("renderResults", () => {
  it("renders an explicit empty state for zero hits", () => {
    const pane = container()
    renderResults(pane, { ...fixture, hits: [] }, { pageUrl: (d) => `/page/${d}` })
    expect(pane.querySelector(".empty-state")?.textContent).toBe("no results")
    expect(pane.querySelectorAll(".result-card").length).toBe(0)
  })

  it("renders ten hits as ten cards in rank order", () => {
    const pane = container()
    renderResults(pane, manyHits(10), { pageUrl: (d) => `/page/${d}` })
    const cards = [...pane.querySelectorAll<HTMLElement>(".result-card")]
    expect(cards.length).toBe(10)
    expect(cards.map((c) => Number(c.dataset.rank)))
      .toEqual([1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
    const header = cards[0]!.querySelector("header")
    expect(header?.textContent).toContain("#1")
  })

  it("shows per-stage timings", () => {
    const pane = container()
    renderResults(pane, fixture, { pageUrl: (d) => `/page/${d}` })
    const status = pane.querySelector(".status-line")?.textContent ?? ""
    expect(status).toContain("embed")
    expect(status).toContain("scan")
    expect(status).toContain("postproc")
  })

  it("opens the clicked hit", () => {
    const pane = container()
    const opened: string[] = []
    renderResults(pane, manyHits(3), {
      pageUrl: (d) => `/page/${d}`,
      onOpen: (hit) => opened.push(hit.doc_id),
    })
    const card = pane.querySelectorAll<HTMLElement>(".result-card")[1]!
    card.click()
    expect(opened).toEqual(["page001"])
  })
})

describe("renderError", () => {
  it("renders inline with a retry hook", () => {
    const pane = container()
    let retries = 0
    renderError(pane, "dim mismatch", () => { retries += 1 })
    expect(pane.querySelector(".error-panel")?.textContent).toContain("dim mismatch")
    pane.querySelector<HTMLButtonElement>("button.retry")!.click()
    pane.querySelector<HTMLButtonElement>("button.retry")!.click()
    expect(retries).toBe(2)
  })
})

describe("overlay geometry in the DOM", () => {
  it("viewer overlays land within 1px of the exact box at zooms 0.5/1/2", () => {
    const serverBoxes = [
      boxFromList([40, 56, 32, 32]),
      boxFromList([121, 17, 45, 63]),
      boxFromList([3, 207, 150, 9]),
    ]
    for (const zoom of [0.5, 1, 2]) {
      for (const box of serverBoxes) {
        const node = overlayNode(document, { box, cssClass: "gt" }, zoom)
        const left = parseFloat(node.style.left)
        const top = parseFloat(node.style.top)
        const width = parseFloat(node.style.width)
        const height = parseFloat(node.style.height)
        expect(Math.abs(left - box.x * zoom)).toBeLessThanOrEqual(1)
        expect(Math.abs(top - box.y * zoom)).toBeLessThanOrEqual(1)
        expect(Math.abs(left + width - (box.x + box.w) * zoom))
          .toBeLessThanOrEqual(1)
        expect(Math.abs(top + height - (box.y + box.h) * zoom))
          .toBeLessThanOrEqual(1)
        // agrees exactly with the shared layout function
        const rect = overlayRect(box, zoom)
        expect({ left, top, width, height }).toEqual({
          left: rect.left, top: rect.top,
          width: rect.width, height: rect.height,
        })
      }
    }
  })

  it("renderOverlays replaces the layer content", () => {
    const layer = container()
    renderOverlays(layer, [
      { box: boxFromList([0, 0, 10, 10]), cssClass: "gt" },
      { box: boxFromList([5, 5, 10, 10]), cssClass: "selection" },
    ], 1)
    expect(layer.querySelectorAll(".overlay-box").length).toBe(2)
    renderOverlays(layer, [], 1)
    expect(layer.querySelectorAll(".overlay-box").length).toBe(0)
  })

  it("thumbnail overlays use scale-free percentages", () => {
    const node = thumbOverlayNode(document, boxFromList([30, 60, 60, 30]),
                                  300, 300)
    expect(node.style.left).toBe("10%")
    expect(node.style.top).toBe("20%")
    expect(node.style.width).toBe("20%")
    expect(node.style.height).toBe("10%")
  })
})
