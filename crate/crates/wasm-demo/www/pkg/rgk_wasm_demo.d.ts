/* tslint:disable */
/* eslint-disable */

export class SceneView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly encodedPixels: number;
    /**
     * RGBA of the selected encoder channel.
     */
    readonly encoded: Uint8Array;
    readonly height: number;
    readonly pillarPixels: number;
    /**
     * RGBA of the pillar baseline occupancy.
     */
    readonly pillar: Uint8Array;
    readonly width: number;
}

/**
 * Two isotropic splats on a 96×96 canvas, red at the center and blue
 * shifted right by `offset` pixels. Returns the RGBA image followed by the
 * three channel values at the red splat's center pixel, as `f32` bytes.
 */
export function blendSplats(sigma: number, offset: number, opacity_red: number, opacity_blue: number, red_in_front: boolean): Uint8Array;

/**
 * KL components of a predicted box against a target box, both given as
 * `[x, y, z, l, w, h, θ]`: `[mahalanobis, trace, logdet, total]` followed by
 * the seven derivatives of the total with respect to the prediction.
 */
export function boxKl(pred: Float64Array, gt: Float64Array, a: number): Float64Array;

/**
 * Generates a clustered scene, encodes it with seeded weights and renders
 * one output channel and the pillar baseline.
 */
export function encodeScene(seed: number, n_points: number, channel: number, radius: number): SceneView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_sceneview_free: (a: number, b: number) => void;
    readonly blendSplats: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly boxKl: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly encodeScene: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly sceneview_encoded: (a: number) => [number, number];
    readonly sceneview_encodedPixels: (a: number) => number;
    readonly sceneview_height: (a: number) => number;
    readonly sceneview_pillar: (a: number) => [number, number];
    readonly sceneview_pillarPixels: (a: number) => number;
    readonly sceneview_width: (a: number) => number;
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
