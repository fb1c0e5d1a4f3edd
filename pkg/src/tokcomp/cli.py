"""Batch command-line interface.

Subcommands: spectrum (spectral pruning of a grid), merge (orthogonal 2D
merging), simulate (full pipeline run from a schedule JSON), baseline
(reference compressors), theory (smoothing-trace CSV), bench (similarity-op
scaling sweep).  Exit codes: 0 success, 1 usage error, 2 data error.

Inputs are sniffed by magic bytes: LUVC1 binary grids, JSON grid fixtures,
or PGM/PPM images (featurized on the fly with --patch/--feat).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import images, merging, pipeline, spectral, theory
from .errors import FormatError
from .metrics import LayerCount, reduction_ratio
from .tokens import (LUVC1_MAGIC, TokenGrid, read_grid_json, read_luvc1,
                     sequence_from_grid, write_luvc1)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_grid_arg(args) -> TokenGrid:
    with open(args.input, "rb") as f:
        head = f.read(2)
    if head == LUVC1_MAGIC[:2]:
        return read_luvc1(args.input)
    if head in (b"P2", b"P3", b"P5", b"P6"):
        img = images.read_image(args.input)
        return images.featurize_image(img, args.patch, args.feat)
    return read_grid_json(args.input)


def _emit_json(doc, out_path) -> None:
    text = json.dumps(doc, indent=2)
    if out_path is None:
        print(text)
    else:
        with open(out_path, "w") as f:
            f.write(text + "\n")


def _emit_text(text, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as f:
            f.write(text)


def _add_input(sub) -> None:
    sub.add_argument("input", help="LUVC1 grid, JSON grid, or PGM/PPM image")
    sub.add_argument("--patch", type=int, default=8,
                     help="patch size when the input is an image")
    sub.add_argument("--feat", choices=images.FEATURE_MODES, default="raw",
                     help="featurizer when the input is an image")


def _cmd_spectrum(args) -> int:
    grid = _load_grid_arg(args)
    seq = sequence_from_grid(grid)
    keep = args.keep if args.keep is not None else seq.n // 2
    pruned, ranking = spectral.spectral_prune(seq, args.sigma_ratio, keep, args.filter_mode)
    doc = {
        "schema": 1,
        "n": seq.n,
        "keep": keep,
        "sigma_t": spectral.cutoff_from_ratio(seq.n, args.sigma_ratio) if seq.n else 0,
        "filter_mode": args.filter_mode,
        "kept": ranking.kept.tolist(),
        "energies": ranking.energies.tolist(),
    }
    _emit_json(doc, args.out)
    if args.heatmap is not None:
        images.emit_energy_heatmap(grid.h, grid.w, ranking, args.heatmap, args.mask)
    return 0


def _cmd_merge(args) -> int:
    grid = _load_grid_arg(args)
    before = grid.n_tokens
    for _ in range(args.oim_steps):
        grid = merging.merge_step(grid, args.m)
    write_luvc1(grid, args.out)
    retained = grid.n_tokens / before if before else 1.0
    _emit_json({"schema": 1, "h": grid.h, "w": grid.w, "tokens_before": before,
                "tokens_after": grid.n_tokens, "retained_fraction": retained,
                "removed_fraction": 1.0 - retained}, None)
    return 0


def _cmd_simulate(args) -> int:
    cfg, sched = pipeline.load_run_config(args.schedule)
    if args.seed is not None:
        cfg = pipeline.ToyModelConfig(cfg.d, cfg.heads, args.seed, cfg.text_len)
    overrides = {}
    for field in ("l0", "l_delta", "m", "sigma_ratio", "filter_mode"):
        value = getattr(args, field)
        if value is not None:
            overrides[field] = value
    if "l0" in overrides or "l_delta" in overrides:
        # the pruning-layer set changed, so any explicit ladder is stale
        overrides.setdefault("keep_ladder", None)
    if overrides:
        sched = replace(sched, **overrides)
    grid = _load_grid_arg(args)
    report = pipeline.run_experiment(grid, args.text_len, cfg, sched)
    _emit_json(report.to_doc(), args.out)
    return 0


def _cmd_baseline(args) -> int:
    grid = _load_grid_arg(args)
    out = pipeline.baseline_compress(grid, args.kind, args.target_h, args.target_w, args.seed)
    write_luvc1(out, args.out)
    # single-stage summary so ratios are comparable with simulate runs
    trace = [LayerCount("encoder", 0, out.n_tokens, 0, grid.n_tokens)]
    retention, pruning = reduction_ratio(trace)
    _emit_json({"schema": 1, "kind": args.kind, "h": out.h, "w": out.w,
                "retention_ratio": retention, "pruning_ratio": pruning}, None)
    return 0


def _cmd_theory(args) -> int:
    rng = np.random.default_rng(args.seed)
    attn = rng.uniform(0.05, 1.0, size=(args.n, args.n))
    attn /= attn.sum(axis=1, keepdims=True)
    z = rng.normal(size=args.n)
    if abs(z.mean()) < 1e-6:
        z = z + 1.0
    trace = theory.smoothing_trace(attn, z, args.t)
    lines = ["t,ratio"] + [f"{t},{r:.17g}" for t, r in enumerate(trace.ratios)]
    _emit_text("\n".join(lines) + "\n", args.out)
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    ops2d = [merging.similarity_op_count(n, "2d", args.m) for n in sizes]
    ops1d = [merging.similarity_op_count(n, "1d") for n in sizes]

    def slope(counts):
        return float(np.polyfit(np.log(sizes), np.log(counts), 1)[0])

    _emit_json({"schema": 1, "sizes": sizes, "ops_2d": ops2d, "ops_1d": ops1d,
                "exponent_2d": slope(ops2d), "exponent_1d": slope(ops1d)}, args.out)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tokcomp", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("spectrum", help="prune a grid's tokens by spectral energy")
    _add_input(p)
    p.add_argument("--sigma-ratio", type=float, default=0.25)
    p.add_argument("--keep", type=int, default=None, help="tokens to keep (default n//2)")
    p.add_argument("--filter-mode", choices=spectral.FILTER_MODES, default="as-written")
    p.add_argument("--out", default=None, help="kept-indices JSON (default stdout)")
    p.add_argument("--heatmap", default=None, help="write energy heatmap PGM here")
    p.add_argument("--mask", default=None, help="write kept-token mask PGM here")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("merge", help="run orthogonal merge steps on a grid")
    _add_input(p)
    p.add_argument("--m", type=int, default=2, help="merges per axis per step")
    p.add_argument("--oim-steps", type=int, default=1, help="width+height step count")
    p.add_argument("--out", required=True, help="output LUVC1 grid")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("simulate", help="full pipeline run from a schedule JSON")
    _add_input(p)
    p.add_argument("--schedule", required=True, help="run-config JSON path")
    p.add_argument("--text-len", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override the model seed")
    p.add_argument("--l0", type=int, default=None, help="override first pruning layer")
    p.add_argument("--l-delta", type=int, default=None, help="override pruning interval")
    p.add_argument("--m", type=int, default=None, help="override merges per axis")
    p.add_argument("--sigma-ratio", type=float, default=None)
    p.add_argument("--filter-mode", choices=spectral.FILTER_MODES, default=None)
    p.add_argument("--out", default=None, help="report JSON (default stdout)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("baseline", help="run a reference compressor on a grid")
    _add_input(p)
    p.add_argument("--kind", choices=pipeline.BASELINE_KINDS, required=True)
    p.add_argument("--target-h", type=int, default=0)
    p.add_argument("--target-w", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output LUVC1 grid")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("theory", help="emit an HC/DC smoothing trace as CSV")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--t", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("bench", help="similarity-op scaling sweep")
    p.add_argument("--sizes", default="64,256,1024,4096")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_bench)
    return parser


def cli_main(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except FormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # malformed inputs must never crash the tool
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return cli_main(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
