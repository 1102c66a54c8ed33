/* tslint:disable */
/* eslint-disable */

/**
 * Anneals `I_n` for levels `[0, 1, 1 + delta_eps U[0,1) ...]` drawn from
 * `seed`; `delta_eps = 0` gives the Grover problem.
 */
export function evolve_search(n_dim: number, n: number, delta: number, delta_eps: number, seed: bigint, steps: number): string;

/**
 * `s(t)`, `ds/dt` and the closed-form Grover gap on `points` uniform times.
 */
export function schedule_curves(n: number, delta: number, points: number): string;

/**
 * Eigenvalues of `I_power` for uniform weights over a grid of couplings.
 * Grid points where `x` is zero are skipped.
 */
export function spectrum_scan(epsilon: Float64Array, x_min: number, x_max: number, points: number, power: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly evolve_search: (a: number, b: number, c: number, d: number, e: bigint, f: number) => [number, number, number, number];
    readonly schedule_curves: (a: number, b: number, c: number) => [number, number, number, number];
    readonly spectrum_scan: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
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
