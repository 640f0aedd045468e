"""Command-line front end.

Subcommands: ingest, fit-tail, scan, simulate, sweep, collapse.  Every run
writes its artifacts plus a manifest.json capturing the fully resolved
parameters and input digests into a fresh output directory.  Exit codes:
0 success, 2 input error, 3 statistical-guard failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .conddist import DetectorParams, ScaleAnalysis, present_range, scan_detailed
from .errors import InputError, InsufficientDataError
from .runio import RunWriter, format_dat, sha256_file
from .series import (IncrementSeries, Segment, TickSeries, increments,
                     load_calendar, load_csv, segment_by_calendar,
                     whole_series_segment)
from .surrogate import SurrogateSpec, run_experiment, surrogate_increments, sweep
from .tailfit import TailFitConfig, ccdf_points, collapse, fit_tail
from .windows import scale_grid


def parse_scales(spec: str) -> list[int]:
    """Parse a scale grid: 'MIN:MAX:COUNT', a comma list, or one integer."""
    spec = spec.strip()
    try:
        if ":" in spec:
            lo, hi, count = spec.split(":")
            return scale_grid(int(lo), int(hi), int(count))
        if "," in spec:
            scales = sorted({int(tok) for tok in spec.split(",") if tok.strip()})
            if not scales:
                raise InputError(f"empty scale list: {spec!r}")
            return scales
        return [int(spec)]
    except ValueError as exc:
        raise InputError(f"bad --scales value {spec!r} (want MIN:MAX:COUNT or s1,s2,...)") from exc


def parse_float_list(spec: str, flag: str) -> list[float]:
    try:
        vals = [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise InputError(f"bad {flag} value {spec!r}") from exc
    if not vals:
        raise InputError(f"empty {flag} list")
    return vals


def parse_int_list(spec: str, flag: str) -> list[int]:
    try:
        vals = [int(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise InputError(f"bad {flag} value {spec!r}") from exc
    if not vals:
        raise InputError(f"empty {flag} list")
    return vals


def load_increments_csv(path: str | Path) -> IncrementSeries:
    """Read a one-column `increment` CSV into an unflagged IncrementSeries."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"increments file not found: {path}")
    values = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if [h.strip().lstrip("﻿") for h in header] != ["increment"]:
            raise InputError(f"{path}: expected header 'increment'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad increment {row[0]!r}") from None
    if len(values) < 2:
        raise InputError(f"{path}: need at least 2 increments")
    signed = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(signed)):
        raise InputError(f"{path}: increments must be finite")
    return IncrementSeries(signed=signed, absolute=np.abs(signed))


def write_increments_csv(writer: RunWriter, name: str, incs: IncrementSeries) -> None:
    lines = ["increment"]
    lines += [f"{v:.17g}" for v in incs.signed]
    writer.write_text(name, "\n".join(lines) + "\n")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory (must not already contain files)")
    p.add_argument("--config", default=None,
                   help="JSON file whose keys pre-set any flag; explicit flags win")


def _add_series_inputs(p: argparse.ArgumentParser, with_increments: bool = True) -> None:
    if with_increments:
        p.add_argument("--increments", default=None, help="one-column increment CSV input")
    p.add_argument("--input", default=None, help="timestamp,value CSV input")
    p.add_argument("--calendar", default=None,
                   help="trading calendar: preset name 'hk-1994-1997' or JSON/CSV table")
    p.add_argument("--boundaries", default=None,
                   help="comma-separated segment boundary dates (YYYY-MM-DD)")
    p.add_argument("--segment", default=None, help="segment label to analyze (default: whole series)")
    p.add_argument("--cross-sessions", action="store_true", default=None,
                   help="keep session-crossing increments instead of flagging them")


def _add_detector(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r-bins", type=int, default=None, help="fluctuation bins (default 24)")
    p.add_argument("--r-binning", choices=["quantile", "fixed"], default=None,
                   help="fluctuation binning rule (default quantile)")
    p.add_argument("--min-samples", type=int, default=None,
                   help="minimum windows per classified r-bin (default 200)")
    p.add_argument("--smoothing", type=int, default=None,
                   help="moving-average window over Z bins, odd (default 3)")
    p.add_argument("--prominence", type=float, default=None,
                   help="peak prominence as fraction of the smoothed maximum (default 0.1)")
    p.add_argument("--persist", type=int, default=None,
                   help="consecutive bimodal bins required (default 2)")
    p.add_argument("--max-z-bins", type=int, default=None,
                   help="cap on the shared Z grid (default 4001)")


def _add_tail(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-tail", type=int, default=None, help="minimum tail samples (default 50)")
    p.add_argument("--max-candidates", type=int, default=None,
                   help="lower-bound candidates after decimation (default 1000)")
    p.add_argument("--tie-epsilon", type=float, default=None,
                   help="KS tie tolerance coefficient (default 0.5)")
    p.add_argument("--ls-ratio", type=float, default=None, help="log-bin ratio (default 1.25)")
    p.add_argument("--ls-min-bins", type=int, default=None, help="minimum fitted log-bins (default 5)")
    p.add_argument("--ls-min-count", type=int, default=None,
                   help="minimum samples per fitted log-bin (default 10)")


def _add_surrogate(p: argparse.ArgumentParser, seeds: bool = False) -> None:
    p.add_argument("--zeta", type=float, default=None, help="CCDF tail exponent")
    p.add_argument("--imin", type=float, default=None, help="power-law lower bound")
    p.add_argument("--n", type=int, default=None, help="number of increments")
    if seeds:
        p.add_argument("--seeds", default=None, help="comma-separated RNG seeds")
    else:
        p.add_argument("--seed", type=int, default=None, help="RNG seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twophase",
        description="Two-phase (unimodal/bimodal) bifurcation analysis of index increment series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, normalize and segment a series CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--calendar", default=None)
    p.add_argument("--boundaries", default=None)
    _add_out(p)

    p = sub.add_parser("fit-tail", help="fit the power-law tail of absolute increments")
    _add_series_inputs(p)
    _add_tail(p)
    _add_out(p)

    p = sub.add_parser("scan", help="scan scales for the unimodal-to-bimodal transition")
    _add_series_inputs(p)
    p.add_argument("--scales", default=None, help="scale grid MIN:MAX:COUNT or comma list")
    _add_detector(p)
    p.add_argument("--jobs", type=int, default=None, help="parallel workers (default 1)")
    p.add_argument("--no-dat", action="store_true", default=None,
                   help="skip per-bin .dat histogram files")
    _add_out(p)

    p = sub.add_parser("simulate", help="run the bifurcation experiment on one surrogate")
    _add_surrogate(p)
    p.add_argument("--scales", default=None)
    _add_detector(p)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--no-dat", action="store_true", default=None)
    _add_out(p)

    p = sub.add_parser("sweep", help="surrogate sweep over exponents and seeds")
    p.add_argument("--zetas", default=None, help="comma-separated exponents")
    _add_surrogate(p, seeds=True)
    p.add_argument("--scales", default=None)
    _add_detector(p)
    p.add_argument("--jobs", type=int, default=None)
    _add_out(p)

    p = sub.add_parser("collapse", help="rescaled-distribution collapse across scales")
    _add_series_inputs(p)
    _add_surrogate(p)
    p.add_argument("--scales", default=None)
    p.add_argument("--min-windows", type=int, default=None,
                   help="minimum valid windows per scale (default 100)")
    _add_out(p)
    return parser


def apply_config(args: argparse.Namespace) -> dict:
    """Overlay --config values under explicit flags; returns the raw overlay."""
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    try:
        overlay = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON config: {exc}") from exc
    if not isinstance(overlay, dict):
        raise InputError(f"{path}: config must be a JSON object")
    for key, value in overlay.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise InputError(f"{path}: unknown config key {key!r}")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    return overlay


def detector_from_args(args: argparse.Namespace) -> DetectorParams:
    defaults = DetectorParams()
    return DetectorParams(
        r_bins=args.r_bins if args.r_bins is not None else defaults.r_bins,
        r_binning=args.r_binning if args.r_binning is not None else defaults.r_binning,
        min_samples=args.min_samples if args.min_samples is not None else defaults.min_samples,
        smoothing=args.smoothing if args.smoothing is not None else defaults.smoothing,
        prominence=args.prominence if args.prominence is not None else defaults.prominence,
        persist=args.persist if args.persist is not None else defaults.persist,
        max_z_bins=args.max_z_bins if args.max_z_bins is not None else defaults.max_z_bins)


def tail_config_from_args(args: argparse.Namespace) -> TailFitConfig:
    d = TailFitConfig()
    return TailFitConfig(
        min_tail=args.min_tail if args.min_tail is not None else d.min_tail,
        max_candidates=args.max_candidates if args.max_candidates is not None else d.max_candidates,
        tie_epsilon=args.tie_epsilon if args.tie_epsilon is not None else d.tie_epsilon,
        ls_ratio=args.ls_ratio if args.ls_ratio is not None else d.ls_ratio,
        ls_min_bins=args.ls_min_bins if args.ls_min_bins is not None else d.ls_min_bins,
        ls_min_count=args.ls_min_count if args.ls_min_count is not None else d.ls_min_count)


def _parse_boundaries(spec: str) -> list[dt.date]:
    try:
        return [dt.date.fromisoformat(tok.strip()) for tok in spec.split(",") if tok.strip()]
    except ValueError as exc:
        raise InputError(f"bad --boundaries value {spec!r}") from exc


def resolve_increments(args: argparse.Namespace, inputs: dict[str, str]) -> IncrementSeries:
    """Turn the input flags into an IncrementSeries, recording file digests."""
    has_surrogate = getattr(args, "zeta", None) is not None
    sources = [bool(getattr(args, "increments", None)), bool(args.input), has_surrogate]
    if sum(sources) != 1:
        raise InputError("provide exactly one input: --increments, --input, or a surrogate spec (--zeta)")
    if getattr(args, "increments", None):
        inputs[args.increments] = sha256_file(args.increments) if Path(args.increments).exists() else ""
        return load_increments_csv(args.increments)
    if has_surrogate:
        for flag in ("imin", "n", "seed"):
            if getattr(args, flag, None) is None:
                raise InputError(f"surrogate input needs --{flag}")
        spec = SurrogateSpec(zeta=args.zeta, i_min=args.imin, n=args.n, seed=args.seed)
        return surrogate_increments(spec)
    if not args.calendar:
        raise InputError("--input requires --calendar")
    calendar = load_calendar(args.calendar)
    series = load_csv(args.input, calendar)
    inputs[args.input] = sha256_file(args.input)
    segment = _pick_segment(series, args)
    cross = bool(args.cross_sessions)
    return increments(segment, cross_sessions=cross)


def _pick_segment(series: TickSeries, args: argparse.Namespace) -> Segment:
    if args.boundaries:
        segments = segment_by_calendar(series, _parse_boundaries(args.boundaries))
    else:
        segments = [whole_series_segment(series)]
    if args.segment is None:
        if len(segments) > 1:
            raise InputError("--boundaries produced several segments; pick one with --segment")
        return segments[0]
    for seg in segments:
        if seg.label == args.segment:
            return seg
    raise InputError(f"no segment labeled {args.segment!r} "
                     f"(have {', '.join(s.label for s in segments)})")


def _detector_dict(params: DetectorParams) -> dict:
    return asdict(params)


def _emit_scan_outputs(writer: RunWriter, analyses: list[ScaleAnalysis],
                       params: DetectorParams, emit_dat: bool) -> None:
    entries = []
    reports = []
    for a in analyses:
        entries.append({"scale": a.scale, "present": a.report.present,
                        "r_c": a.report.r_c, "reason": a.report.reason})
        reports.append({
            "scale": a.scale, "present": a.report.present, "r_c": a.report.r_c,
            "reason": a.report.reason,
            "bins": [{
                "lower": b.lower, "upper": b.upper, "count": b.count,
                "classification": b.classification, "mode_count": b.mode_count,
                "mode_locations": list(b.mode_locations),
            } for b in a.report.bins]})
    rng = present_range([(a.scale, a.report.present) for a in analyses])
    writer.write_json("phasescan.json", {
        "detector": _detector_dict(params),
        "entries": entries,
        "present_range": list(rng) if rng else None,
        "reports": reports,
    })
    if not emit_dat:
        return
    for a in analyses:
        if a.cond is None:
            continue
        centers = a.cond.z_centers
        for b in range(a.cond.n_bins):
            mass = a.cond.masses[b]
            occupied = np.flatnonzero(mass > 0)
            if len(occupied) == 0:
                continue
            lo, hi = occupied[0], occupied[-1] + 1
            lower, upper = a.cond.r_bin_bounds(b)
            writer.write_text(
                f"dat/scale_{a.scale:03d}_rbin_{b:02d}.dat",
                format_dat([centers[lo:hi], mass[lo:hi]],
                           comments=[f"scale {a.scale}, r in [{lower:.6g}, {upper:.6g}], "
                                     f"count {int(a.cond.r_counts[b])}",
                                     "z_bin_center mass"]))


def cmd_ingest(args: argparse.Namespace) -> int:
    inputs: dict[str, str] = {}
    calendar = load_calendar(args.calendar) if args.calendar else load_calendar("hk-1994-1997")
    series = load_csv(args.input, calendar)
    inputs[args.input] = sha256_file(args.input)
    boundaries = _parse_boundaries(args.boundaries) if args.boundaries else []
    segments = segment_by_calendar(series, boundaries)
    writer = RunWriter(args.out)
    try:
        lines = ["timestamp,value"]
        stamps = np.datetime_as_string(series.timestamps, unit="m")
        lines += [f"{t},{v:.17g}" for t, v in zip(stamps, series.values)]
        writer.write_text("normalized.csv", "\n".join(lines) + "\n")
        writer.write_json("segments.json", {
            "boundaries": [b.isoformat() for b in boundaries],
            "n_points": len(series),
            "segments": [{
                "label": s.label, "start": s.start, "stop": s.stop,
                "n_points": len(s),
                "first": str(s.timestamps[0]), "last": str(s.timestamps[-1]),
            } for s in segments]})
        writer.finalize("ingest", {
            "input": args.input, "calendar": args.calendar or "hk-1994-1997",
            "boundaries": args.boundaries or "", "out": str(args.out),
        }, inputs, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def cmd_fit_tail(args: argparse.Namespace) -> int:
    inputs: dict[str, str] = {}
    incs = resolve_increments(args, inputs)
    config = tail_config_from_args(args)
    samples = incs.clean_absolute
    samples = samples[samples > 0]
    if len(samples) == 0:
        raise InsufficientDataError("no positive absolute increments to fit")
    fit = fit_tail(samples, config)
    points = ccdf_points(samples)
    writer = RunWriter(args.out)
    try:
        writer.write_json("tailfit.json", {
            "i_min": fit.i_min, "zeta_ks": fit.zeta_ks, "zeta_ls": fit.zeta_ls,
            "zeta_avg": fit.zeta_avg, "stderr": fit.stderr, "ks_stat": fit.ks_stat,
            "n_tail": fit.n_tail, "n_samples": int(len(samples)),
            "n_flagged_excluded": int(incs.flags.sum()),
            "config": asdict(config)})
        writer.write_text("ccdf.dat", format_dat(
            [points[:, 0], points[:, 1]], comments=["absolute increment CCDF", "x P(X>=x)"]))
        writer.finalize("fit-tail", _run_params(args), inputs, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def cmd_scan(args: argparse.Namespace) -> int:
    inputs: dict[str, str] = {}
    incs = resolve_increments(args, inputs)
    if not args.scales:
        raise InputError("--scales is required")
    scales = parse_scales(args.scales)
    params = detector_from_args(args)
    jobs = args.jobs if args.jobs is not None else 1
    analyses = scan_detailed(incs, scales, params, jobs=jobs)
    writer = RunWriter(args.out)
    try:
        _emit_scan_outputs(writer, analyses, params, emit_dat=not args.no_dat)
        writer.finalize("scan", _run_params(args), inputs, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    for flag in ("zeta", "imin", "n", "seed", "scales"):
        if getattr(args, flag) is None:
            raise InputError(f"simulate requires --{flag}")
    spec = SurrogateSpec(zeta=args.zeta, i_min=args.imin, n=args.n, seed=args.seed)
    scales = parse_scales(args.scales)
    params = detector_from_args(args)
    jobs = args.jobs if args.jobs is not None else 1
    incs = surrogate_increments(spec)
    analyses = scan_detailed(incs, scales, params, jobs=jobs)
    writer = RunWriter(args.out)
    try:
        write_increments_csv(writer, "increments.csv", incs)
        _emit_scan_outputs(writer, analyses, params, emit_dat=not args.no_dat)
        writer.finalize("simulate", _run_params(args), {}, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    for flag in ("zetas", "seeds", "imin", "n", "scales"):
        if getattr(args, flag) is None:
            raise InputError(f"sweep requires --{flag}")
    zetas = parse_float_list(args.zetas, "--zetas")
    seeds = parse_int_list(str(args.seeds), "--seeds")
    scales = parse_scales(args.scales)
    params = detector_from_args(args)
    jobs = args.jobs if args.jobs is not None else 1
    result = sweep(zetas, seeds, i_min=args.imin, n=args.n,
                   scales=scales, params=params, jobs=jobs)
    writer = RunWriter(args.out)
    try:
        writer.write_json("sweep.json", {
            "zetas": zetas, "seeds": seeds, "i_min": args.imin, "n": args.n,
            "scales": scales, "detector": _detector_dict(params),
            "cells": [{
                "zeta": c.zeta, "seed": c.seed, "present": c.present,
                "present_range": list(c.scan.present_range) if c.scan.present_range else None,
            } for c in result.cells],
            "aggregates": [{
                "zeta": a.zeta, "n_seeds": a.n_seeds,
                "present_fraction": a.present_fraction,
                "union_range": list(a.union_range) if a.union_range else None,
                "intersection_range": list(a.intersection_range) if a.intersection_range else None,
            } for a in result.aggregates]})
        rows = ["zeta,scale,present_fraction"]
        for zeta in zetas:
            cells = [c for c in result.cells if c.zeta == zeta]
            for i, scale in enumerate(scales):
                hits = sum(1 for c in cells if c.scan.entries[i].present)
                rows.append(f"{zeta:.10g},{scale},{hits / len(cells):.10g}")
        writer.write_text("phase_diagram.csv", "\n".join(rows) + "\n")
        writer.finalize("sweep", _run_params(args), {}, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def cmd_collapse(args: argparse.Namespace) -> int:
    inputs: dict[str, str] = {}
    incs = resolve_increments(args, inputs)
    if not args.scales:
        raise InputError("--scales is required")
    scales = parse_scales(args.scales)
    min_windows = args.min_windows if args.min_windows is not None else 100
    report = collapse(incs, scales, min_windows=min_windows)
    writer = RunWriter(args.out)
    try:
        writer.write_json("collapse.json", {
            "scales": list(report.scales),
            "dispersions": list(report.dispersions),
            "n_windows": list(report.n_windows),
            "discrepancy": report.discrepancy,
            "score": report.score})
        for scale, pts in zip(report.scales, report.pdf_points):
            writer.write_text(
                f"dat/collapse_scale_{scale:03d}.dat",
                format_dat([pts[:, 0], pts[:, 1]],
                           comments=[f"scale {scale}: rescaled return density",
                                     "z_over_dispersion density"]))
        writer.finalize("collapse", _run_params(args), inputs, __version__)
    except BaseException:
        writer.abort()
        raise
    return 0


def _run_params(args: argparse.Namespace) -> dict:
    skip = {"command", "func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


_COMMANDS = {
    "ingest": cmd_ingest,
    "fit-tail": cmd_fit_tail,
    "scan": cmd_scan,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "collapse": cmd_collapse,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args)
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
