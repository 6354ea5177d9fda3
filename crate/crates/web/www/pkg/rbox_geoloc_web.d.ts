/* tslint:disable */
/* eslint-disable */

/**
 * Overlap of two boxes under both criteria, plus the OS-loss of `a` against `b`.
 */
export class Overlap {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly angle_term: number;
    /**
     * `x0, y0, x1, y1, ...`
     */
    readonly corners_a: Float64Array;
    readonly corners_b: Float64Array;
    readonly distance_term: number;
    readonly hbox_iou: number;
    /**
     * `xmin, ymin, xmax, ymax`
     */
    readonly hull_a: Float64Array;
    readonly hull_b: Float64Array;
    /**
     * Vertices of the intersection polygon; empty when the boxes are apart.
     */
    readonly intersection: Float64Array;
    readonly iou: number;
    readonly iou_term: number;
    readonly loss: number;
}

/**
 * Row-major click representation map.
 */
export function click_map(height: number, width: number, x: number, y: number): Float32Array;

/**
 * Six numbers per step: `cx, cy, w, h, theta_deg, loss`.
 */
export function fit_trajectory(init: Float64Array, gt: Float64Array, alpha: number, beta: number, lr: number, steps: number): Float64Array;

export function overlap(a: Float64Array, b: Float64Array, alpha: number, beta: number): Overlap;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_overlap_free: (a: number, b: number) => void;
    readonly click_map: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly fit_trajectory: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly overlap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly overlap_angle_term: (a: number) => number;
    readonly overlap_corners_a: (a: number) => [number, number];
    readonly overlap_corners_b: (a: number) => [number, number];
    readonly overlap_distance_term: (a: number) => number;
    readonly overlap_hbox_iou: (a: number) => number;
    readonly overlap_hull_a: (a: number) => [number, number];
    readonly overlap_hull_b: (a: number) => [number, number];
    readonly overlap_intersection: (a: number) => [number, number];
    readonly overlap_iou: (a: number) => number;
    readonly overlap_iou_term: (a: number) => number;
    readonly overlap_loss: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
