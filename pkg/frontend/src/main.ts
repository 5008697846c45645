// Application wiring: browse pages, drag a query box, run searches,
// inspect ranked hits. All engine interaction goes through ApiClient.

import { ApiClient, RankedHit } from "./api.js"
import { Point, boxFromList } from "./geometry.js"
import { OverlaySpec, renderError, renderOverlays, renderResults } from "./render.js"
import { QuerySequencer, UiQueryState, applyDrag, canSubmit, initialState } from "./state.js"

const api = new ApiClient("")
const sequencer = new QuerySequencer()
let state: UiQueryState = initialState()
let gtBoxes: OverlaySpec[] = []
let showGroundTruth = false
const docSizes = new Map<string, { width: number, height: number }>()

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing #${id}`)
  return node as T
}

const docSelect = byId<HTMLSelectElement>("doc-select")
const zoomSelect = byId<HTMLSelectElement>("zoom-select")
const modeSelect = byId<HTMLSelectElement>("mode-select")
const metricSelect = byId<HTMLSelectElement>("metric-select")
const topKInput = byId<HTMLInputElement>("topk-input")
const postprocToggle = byId<HTMLInputElement>("postproc-toggle")
const gtToggle = byId<HTMLInputElement>("gt-toggle")
const submitButton = byId<HTMLButtonElement>("submit-btn")
const pageImage = byId<HTMLImageElement>("page-image")
const overlayLayer = byId<HTMLElement>("overlay-layer")
const pageViewport = byId<HTMLElement>("page-viewport")
const resultsPane = byId<HTMLElement>("results")
const selectionReadout = byId<HTMLElement>("selection-readout")

function syncControls(): void {
  submitButton.disabled = !canSubmit(state)
  selectionReadout.textContent = state.selection
    ? `[${state.selection.x}, ${state.selection.y}, ` +
      `${state.selection.w}, ${state.selection.h}]`
    : "none"
}

function redrawOverlays(): void {
  const specs: OverlaySpec[] = []
  if (showGroundTruth) {
    specs.push(...gtBoxes)
  }
  if (state.selection) {
    specs.push({ box: state.selection, cssClass: "selection" })
  }
  renderOverlays(overlayLayer, specs, state.zoom)
}

async function showDocument(docId: string, focus?: RankedHit): Promise<void> {
  const info = await api.pageBoxes(docId)
  state = { ...state, selectedDoc: docId, docWidth: info.width,
            docHeight: info.height, selection: null }
  gtBoxes = info.ground_truth.map((g) => ({
    box: boxFromList(g.box),
    cssClass: g.junk ? "gt junk" : "gt",
    label: g.category,
  }))
  pageImage.src = api.pageUrl(docId)
  applyZoom()
  if (focus) {
    state = { ...state, selection: boxFromList(focus.box) }
    const rect = state.selection!
    pageViewport.scrollLeft = Math.max(0, (rect.x + rect.w / 2) * state.zoom
                                          - pageViewport.clientWidth / 2)
    pageViewport.scrollTop = Math.max(0, (rect.y + rect.h / 2) * state.zoom
                                         - pageViewport.clientHeight / 2)
  }
  docSelect.value = docId
  redrawOverlays()
  syncControls()
}

function applyZoom(): void {
  state = { ...state, zoom: Number(zoomSelect.value) }
  pageImage.style.width = `${state.docWidth * state.zoom}px`
  pageImage.style.height = `${state.docHeight * state.zoom}px`
  redrawOverlays()
}

// -- pointer drag selection ------------------------------------------------

let dragStart: Point | null = null

function pointerPoint(ev: PointerEvent): Point {
  const bounds = overlayLayer.getBoundingClientRect()
  return { x: ev.clientX - bounds.left, y: ev.clientY - bounds.top }
}

overlayLayer.addEventListener("pointerdown", (ev) => {
  if (!state.selectedDoc) return
  dragStart = pointerPoint(ev)
  overlayLayer.setPointerCapture(ev.pointerId)
})

overlayLayer.addEventListener("pointermove", (ev) => {
  if (!dragStart) return
  state = applyDrag(state, dragStart, pointerPoint(ev))
  redrawOverlays()
  syncControls()
})

overlayLayer.addEventListener("pointerup", (ev) => {
  if (!dragStart) return
  state = applyDrag(state, dragStart, pointerPoint(ev))
  dragStart = null
  redrawOverlays()
  syncControls()
})

// -- query submission --------------------------------------------------------

async function submitQuery(): Promise<void> {
  if (!canSubmit(state)) return
  const seq = sequencer.begin()
  state = { ...state, inFlight: true, error: null }
  syncControls()
  try {
    const response = await api.query({
      docId: state.selectedDoc!,
      box: state.selection!,
      mode: state.mode,
      topK: state.topK,
      metric: state.metric,
      postprocess: state.postprocess,
    })
    if (!sequencer.isCurrent(seq)) return   // superseded by a newer query
    state = { ...state, inFlight: false, lastResponse: response }
    renderResults(resultsPane, response, {
      pageUrl: (d) => api.pageUrl(d),
      docSize: (d) => docSizes.get(d),
      onOpen: (hit) => { void showDocument(hit.doc_id, hit) },
    })
  } catch (err) {
    if (!sequencer.isCurrent(seq)) return
    state = { ...state, inFlight: false, error: String(err) }
    renderError(resultsPane, String(err), () => { void submitQuery() })
  }
  syncControls()
}

// -- bootstrap ----------------------------------------------------------------

async function start(): Promise<void> {
  const docs = await api.docs()
  docSelect.textContent = ""
  for (const doc of docs) {
    docSizes.set(doc.doc_id, { width: doc.width, height: doc.height })
    const option = document.createElement("option")
    option.value = doc.doc_id
    option.textContent = `${doc.doc_id} (${doc.width}x${doc.height})`
    docSelect.appendChild(option)
  }
  docSelect.addEventListener("change", () => { void showDocument(docSelect.value) })
  zoomSelect.addEventListener("change", applyZoom)
  modeSelect.addEventListener("change", () => {
    state = { ...state, mode: modeSelect.value }
  })
  metricSelect.addEventListener("change", () => {
    state = { ...state, metric: metricSelect.value }
  })
  topKInput.addEventListener("change", () => {
    state = { ...state, topK: Math.max(1, Number(topKInput.value) || 10) }
  })
  postprocToggle.addEventListener("change", () => {
    state = { ...state, postprocess: postprocToggle.checked }
  })
  gtToggle.addEventListener("change", () => {
    showGroundTruth = gtToggle.checked
    redrawOverlays()
  })
  submitButton.addEventListener("click", () => { void submitQuery() })

  const info = await api.config()
  metricSelect.textContent = ""
  for (const metric of info.metrics) {
    const option = document.createElement("option")
    option.value = metric
    option.textContent = metric
    metricSelect.appendChild(option)
  }
  metricSelect.value = info.metric
  state = { ...state, mode: info.mode, topK: info.top_k, metric: info.metric }
  modeSelect.value = info.mode
  topKInput.value = String(info.top_k)

  if (docs.length > 0) {
    await showDocument(docs[0]!.doc_id)
  }
}

void start()
