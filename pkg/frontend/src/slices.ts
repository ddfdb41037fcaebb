import type { SliceAxis } from './types.js';

export interface GridGeometry {
  dims: [number, number, number];
  spacing: [number, number, number];
  origin: [number, number, number];
}

const AXIS_INDEX: Record<SliceAxis, number> = { x: 0, y: 1, z: 2 };

/** The two in-plane axes for a slice normal to `axis`, in plane-pixel order. */
export function planeAxes(axis: SliceAxis): [number, number] {
  const a = AXIS_INDEX[axis];
  const others = [0, 1, 2].filter((v) => v !== a);
  return [others[0], others[1]];
}

export function sliceCount(geom: GridGeometry, axis: SliceAxis): number {
  return geom.dims[AXIS_INDEX[axis]];
}

export function worldToIndex(geom: GridGeometry, axisIdx: number, world: number): number {
  return Math.round((world - geom.origin[axisIdx]) / geom.spacing[axisIdx]);
}

export function indexToWorld(geom: GridGeometry, axisIdx: number, index: number): number {
  return geom.origin[axisIdx] + index * geom.spacing[axisIdx];
}

/** World coordinates of a pixel (px, py) of the slice `index` along `axis`. */
export function pixelToWorld(geom: GridGeometry, axis: SliceAxis, index: number,
                             px: number, py: number): [number, number, number] {
  const [u, v] = planeAxes(axis);
  const out: [number, number, number] = [0, 0, 0];
  out[AXIS_INDEX[axis]] = indexToWorld(geom, AXIS_INDEX[axis], index);
  out[u] = indexToWorld(geom, u, px);
  out[v] = indexToWorld(geom, v, py);
  return out;
}

/** Pixel position of a world point within the slice plane along `axis`. */
export function worldToPixel(geom: GridGeometry, axis: SliceAxis,
                             world: [number, number, number]): { px: number; py: number; index: number } {
  const [u, v] = planeAxes(axis);
  return {
    px: worldToIndex(geom, u, world[u]),
    py: worldToIndex(geom, v, world[v]),
    index: worldToIndex(geom, AXIS_INDEX[axis], world[AXIS_INDEX[axis]]),
  };
}

export function centerIndex(geom: GridGeometry, axis: SliceAxis): number {
  return Math.floor(geom.dims[AXIS_INDEX[axis]] / 2);
}
