/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_synth_free: (a: number, b: number) => void;
export const synth_active_harmonics: (a: number, b: number) => number;
export const synth_channels: (a: number) => number;
export const synth_exciter_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
export const synth_from_bytes: (a: number, b: number) => [number, number, number];
export const synth_harmonics: (a: number) => number;
export const synth_has_mlp: (a: number) => number;
export const synth_new: (a: bigint) => [number, number, number];
export const synth_render: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
export const synth_sample_rate: (a: number) => number;
export const synth_shaper_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;
