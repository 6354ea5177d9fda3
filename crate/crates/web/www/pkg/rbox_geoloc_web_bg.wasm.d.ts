/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_overlap_free: (a: number, b: number) => void;
export const click_map: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const fit_trajectory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const overlap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const overlap_angle_term: (a: number) => number;
export const overlap_corners_a: (a: number) => [number, number];
export const overlap_corners_b: (a: number) => [number, number];
export const overlap_distance_term: (a: number) => number;
export const overlap_hbox_iou: (a: number) => number;
export const overlap_hull_a: (a: number) => [number, number];
export const overlap_hull_b: (a: number) => [number, number];
export const overlap_intersection: (a: number) => [number, number];
export const overlap_iou: (a: number) => number;
export const overlap_iou_term: (a: number) => number;
export const overlap_loss: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
