// UI state: the current selection, search knobs, and the last response.
// One query may be in flight per tab; responses superseded by a newer
// query are discarded via a monotonically increasing sequence number.

import { QueryResponse } from "./api.js"
import { Box, Point, dragToImageBox } from "./geometry.js"

export interface UiQueryState {
  selectedDoc: string | null
  docWidth: number
  docHeight: number
  selection: Box | null          // image coordinates, clamped
  zoom: number
  mode: string
  topK: number
  metric: string
  postprocess: boolean
  lastResponse: QueryResponse | null
  error: string | null
  inFlight: boolean
}

export function initialState(): UiQueryState {
  return {
    selectedDoc: null,
    docWidth: 0,
    docHeight: 0,
    selection: null,
    zoom: 1,
    mode: "ps",
    topK: 10,
    metric: "cosine",
    postprocess: false,
    lastResponse: null,
    error: null,
    inFlight: false,
  }
}

/** Apply a finished pointer drag (display coordinates) to the state.
 *  Zero-area drags clear the selection. */
export function applyDrag(state: UiQueryState, start: Point, end: Point): UiQueryState {
  const selection = dragToImageBox(start, end, state.zoom,
                                   state.docWidth, state.docHeight)
  return { ...state, selection }
}

export function canSubmit(state: UiQueryState): boolean {
  return state.selectedDoc !== null && state.selection !== null && !state.inFlight
}

/** Discards stale responses: only the most recently started query wins. */
export class QuerySequencer {
  private latest = 0

  begin(): number {
    this.latest += 1
    return this.latest
  }

  isCurrent(seq: number): boolean {
    return seq === this.latest
  }
}
