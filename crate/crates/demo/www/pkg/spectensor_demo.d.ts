/* tslint:disable */
/* eslint-disable */

/**
 * Plants a rank-one response, refits it with all four κ set to `kappa`,
 * and plots fitted against actual responses.
 */
export function rank_one_svg(kappa: number, snr_db: number, seed: number): string;

/**
 * Scores every wavenumber over a small synthetic batch and marks the
 * `keep` highest.
 */
export function selection_svg(keep: number, width: number, seed: number): string;

/**
 * Fits one synthetic spectrum on 950–1700 cm⁻¹ and plots data, fit and
 * coefficients.
 */
export function sparse_fit_svg(width: number, lambda_h: number, lambda_1: number, noise: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly rank_one_svg: (a: number, b: number, c: number) => [number, number];
    readonly selection_svg: (a: number, b: number, c: number) => [number, number];
    readonly sparse_fit_svg: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
