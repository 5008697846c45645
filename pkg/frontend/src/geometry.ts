// Coordinate math between display space (CSS pixels at the current zoom)
// and image space (integer pixels). Image-space boxes are the unit the
// engine understands; display space only exists for drawing and pointers.

export interface Point {
  x: number
  y: number
}

export interface Box {
  x: number
  y: number
  w: number
  h: number
}

export interface OverlayRect {
  left: number
  top: number
  width: number
  height: number
}

export function displayToImage(p: Point, zoom: number): Point {
  return { x: Math.round(p.x / zoom), y: Math.round(p.y / zoom) }
}

export function imageToDisplay(p: Point, zoom: number): Point {
  return { x: p.x * zoom, y: p.y * zoom }
}

/** CSS rect for an image-space box at `zoom`; each edge rounds
 *  independently so the drawn rectangle is within 1px of the exact
 *  position at any zoom. */
export function overlayRect(box: Box, zoom: number): OverlayRect {
  const left = Math.round(box.x * zoom)
  const top = Math.round(box.y * zoom)
  const right = Math.round((box.x + box.w) * zoom)
  const bottom = Math.round((box.y + box.h) * zoom)
  return { left, top, width: right - left, height: bottom - top }
}

/** Convert a pointer drag (display space) into a clamped image-space box.
 *  Reverse drags normalize to positive width/height; drags that collapse
 *  to zero area return null (selection cleared). */
export function dragToImageBox(a: Point, b: Point, zoom: number,
                               imageWidth: number, imageHeight: number): Box | null {
  const p1 = displayToImage(a, zoom)
  const p2 = displayToImage(b, zoom)
  const clampX = (v: number) => Math.min(Math.max(v, 0), imageWidth)
  const clampY = (v: number) => Math.min(Math.max(v, 0), imageHeight)
  const x1 = clampX(Math.min(p1.x, p2.x))
  const x2 = clampX(Math.max(p1.x, p2.x))
  const y1 = clampY(Math.min(p1.y, p2.y))
  const y2 = clampY(Math.max(p1.y, p2.y))
  if (x2 - x1 < 1 || y2 - y1 < 1) {
    return null
  }
  return { x: x1, y: y1, w: x2 - x1, h: y2 - y1 }
}

export function boxToList(box: Box): [number, number, number, number] {
  return [box.x, box.y, box.w, box.h]
}

export function boxFromList(raw: [number, number, number, number]): Box {
  return { x: raw[0], y: raw[1], w: raw[2], h: raw[3] }
}
