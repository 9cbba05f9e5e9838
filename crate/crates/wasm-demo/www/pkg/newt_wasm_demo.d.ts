/* tslint:disable */
/* eslint-disable */

export class Synth {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Highest harmonic index the exciter keeps at `f0`.
     */
    active_harmonics(f0: number): number;
    channels(): number;
    /**
     * Mean magnitude spectrum in dB of one exciter channel driven at a constant `f0`.
     * Bin `i` sits at `i * sample_rate / 2048` Hz.
     */
    exciter_spectrum(channel: number, f0: number): Float32Array;
    /**
     * Loads a `.newt` file picked by the user.
     */
    static from_bytes(bytes: Uint8Array): Synth;
    harmonics(): number;
    has_mlp(): boolean;
    /**
     * Untrained model with a seeded random initialization.
     */
    constructor(seed: bigint);
    /**
     * Renders a note gliding from `f0_start` to `f0_end` with a fixed loudness.
     */
    render(f0_start: number, f0_end: number, loudness_db: number, seconds: number, fastnewt: boolean, reverb: boolean, seed: bigint): Float32Array;
    sample_rate(): number;
    /**
     * `points` evenly spaced samples of one channel's shaper over the table domain.
     * Falls back to the lookup table when `table` is set or the MLP was stripped.
     */
    shaper_curve(channel: number, points: number, table: boolean): Float32Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_synth_free: (a: number, b: number) => void;
    readonly synth_active_harmonics: (a: number, b: number) => number;
    readonly synth_channels: (a: number) => number;
    readonly synth_exciter_spectrum: (a: number, b: number, c: number) => [number, number, number, number];
    readonly synth_from_bytes: (a: number, b: number) => [number, number, number];
    readonly synth_harmonics: (a: number) => number;
    readonly synth_has_mlp: (a: number) => number;
    readonly synth_new: (a: bigint) => [number, number, number];
    readonly synth_render: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
    readonly synth_sample_rate: (a: number) => number;
    readonly synth_shaper_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
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
