/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_sceneview_free: (a: number, b: number) => void;
export const blendSplats: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const boxKl: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const encodeScene: (a: number, b: number, c: number, d: number) => [number, number, number];
export const sceneview_encoded: (a: number) => [number, number];
export const sceneview_encodedPixels: (a: number) => number;
export const sceneview_height: (a: number) => number;
export const sceneview_pillar: (a: number) => [number, number];
export const sceneview_pillarPixels: (a: number) => number;
export const sceneview_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
