"""Command line front end: ``expfun <command> --config model.json ...``.

Exit codes: 0 success, 1 domain error (invalid or unsupported model),
2 parse or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .density_engine import evaluate, invert_tail, series_large_x
from .integral_equation import histogram_density, residual_brownian_eta, residual_general
from .levy_model import DomainError, HyperExpLevyModel, PoleProximityError, validate_model
from .mellin_engine import MellinExtension, hyperexp_coeffs, tail_constant
from .montecarlo import EtaSpec, SamplerConfig, density_callable, estimate_density, simulate

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
DEFAULT_RESIDUAL_GRID = np.logspace(-2, 1.5, 30)


class InputError(Exception):
    """Unreadable or malformed input; maps to exit code 2."""


# ------------------------------------------------------------------ config


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError("config must be a JSON object")
    try:
        model = HyperExpLevyModel.from_dict(data)
        eta = EtaSpec.from_dict(data.get("eta") or {})
        sampler = SamplerConfig(**(data.get("sampler") or {}))
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise InputError(f"bad config: {exc}") from exc
    return {"model": model, "eta": eta, "sampler": sampler}


def _sampler(cfg: dict, args) -> SamplerConfig:
    sampler = cfg["sampler"]
    if args.seed is not None:
        sampler = replace(sampler, seed=args.seed)
    if args.n_paths is not None:
        sampler = replace(sampler, n_paths=args.n_paths)
    return sampler


def parse_grid(text: str) -> np.ndarray:
    """``a:b:steps`` (inclusive linspace) or a comma-separated list."""
    try:
        if ":" in text:
            a, b, steps = text.split(":")
            return np.linspace(float(a), float(b), int(steps))
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise InputError(f"bad grid {text!r}: {exc}") from exc


def parse_complex_list(text: str) -> list[complex]:
    try:
        return [complex(v.strip().replace(" ", "")) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise InputError(f"bad s list {text!r}: {exc}") from exc


# ------------------------------------------------------------------ output


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def model_hash(model: HyperExpLevyModel, eta: EtaSpec) -> str:
    blob = json.dumps({"model": model.to_dict(), "eta": eta.to_dict()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def build_manifest(command: str, cfg: dict, sampler: SamplerConfig | None, params: dict,
                   results: dict | None = None) -> dict:
    manifest = {
        "tool": "expfun",
        "version": __version__,
        "subcommand": command,
        "model_hash": model_hash(cfg["model"], cfg["eta"]),
        "model": cfg["model"].to_dict(),
        "eta": cfg["eta"].to_dict(),
        "seed": None if sampler is None else sampler.seed,
        "sampler": None if sampler is None else {
            "n_paths": sampler.n_paths, "horizon": sampler.horizon, "grid_step": sampler.grid_step,
            "max_step": sampler.max_step, "early_stop": sampler.early_stop,
        },
        "parameters": params,
    }
    if results:
        manifest["results"] = results
    return manifest


def _manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def write_output(out: str, header: list[str] | None, rows, manifest: dict, text: str | None = None):
    """Write CSV rows (or raw text) plus the manifest.

    For a file path the manifest goes to ``<out>.manifest.json`` and the data
    file starts with a ``# manifest=...`` comment; for ``-`` the data goes to
    stdout and the manifest to stderr.
    """
    buf = io.StringIO()
    if text is None:
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        text = buf.getvalue()
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        sys.stderr.write(_manifest_text(manifest))
        return
    sidecar = out + ".manifest.json"
    try:
        with open(sidecar, "w", encoding="utf-8") as fh:
            fh.write(_manifest_text(manifest))
        with open(out, "w", encoding="utf-8") as fh:
            if header is not None:
                fh.write(f"# manifest={sidecar.rsplit('/', 1)[-1]}\n")
            fh.write(text)
    except OSError as exc:
        raise InputError(f"cannot write {out}: {exc}") from exc


# ------------------------------------------------------------------ commands


def _extension_pair(cfg, sampler, c_max):
    """(extension, coeffs) for mu and for -mu; coeffs may be None."""
    model, eta = cfg["model"], cfg["eta"]
    if eta.has_jumps:
        raise DomainError("the Mellin pipeline needs a Brownian eta (no jumps)")
    samples = simulate(model, eta, sampler)
    out = []
    for variant in (eta, eta.flipped()) if eta.mu != 0 else (eta,):
        ext = MellinExtension(samples.with_eta(variant))
        try:
            coeffs = hyperexp_coeffs(model, variant, ext, c_max)
        except DomainError:
            coeffs = None
        out.append((ext, coeffs))
    if len(out) == 1:
        out.append(out[0])
    return samples, out[0], out[1]


def cmd_validate(args, cfg) -> int:
    report = validate_model(cfg["model"])
    for line in report.lines():
        print(line)
    return EXIT_OK if report.valid else EXIT_DOMAIN


def _require_valid(cfg) -> None:
    report = validate_model(cfg["model"])
    if not report.valid:
        raise DomainError("invalid model: E[xi_1] >= 0")


def cmd_density(args, cfg) -> int:
    _require_valid(cfg)
    sampler = _sampler(cfg, args)
    xs = parse_grid(args.x or "0:5:11")
    rows = []
    if args.strategy == "mc":
        samples = simulate(cfg["model"], cfg["eta"], sampler)
        if cfg["eta"].has_jumps:
            raise DomainError("the mc density strategy needs a Brownian eta")
        for x in xs:
            value, err = estimate_density(samples, cfg["eta"], float(x))
            rows.append((x, value, "mc", err))
    else:
        _, main, mirror = _extension_pair(cfg, sampler, args.c_max)
        for x in xs:
            rep = evaluate(main[0], main[1], float(x), args.strategy, mirror=mirror)
            rows.append((rep.x, rep.value, rep.method, rep.error_estimate))
    manifest = build_manifest("density", cfg, sampler, {"x": xs, "strategy": args.strategy,
                                                         "c_max": args.c_max})
    write_output(args.out, ["x", "value", "method", "error_estimate"], rows, manifest)
    return EXIT_OK


def cmd_tail(args, cfg) -> int:
    _require_valid(cfg)
    sampler = _sampler(cfg, args)
    xs = parse_grid(args.x or "1,10,100")
    if np.any(xs <= 0):
        raise DomainError("tail needs x > 0")
    _, (ext, coeffs), _ = _extension_pair(cfg, sampler, args.c_max)
    tc = tail_constant(cfg["model"], cfg["eta"], ext)
    values, errors = invert_tail(ext, xs)
    rows = []
    for x, value, err in zip(xs, values, errors):
        method = "inversion"
        if coeffs is not None and coeffs.c_ij:
            _, t_series, last = series_large_x(coeffs, float(x))
            if last * x < err:
                value, err, method = t_series, last * x, "series"
        rows.append((x, value, method, err))
    results = {"R_theta": tc.r_theta, "C": tc.c, "C_stderr": tc.stderr,
               "lighter_than_power": tc.lighter_than_power}
    manifest = build_manifest("tail", cfg, sampler, {"x": xs, "c_max": args.c_max}, results)
    write_output(args.out, ["x", "value", "method", "error_estimate"], rows, manifest)
    return EXIT_OK


def cmd_mellin(args, cfg) -> int:
    _require_valid(cfg)
    sampler = _sampler(cfg, args)
    points = parse_complex_list(args.s or "0.5,1,1.5")
    if cfg["eta"].has_jumps:
        raise DomainError("the Mellin pipeline needs a Brownian eta (no jumps)")
    ext = MellinExtension(simulate(cfg["model"], cfg["eta"], sampler))
    rows = []
    for s in points:
        try:
            value, err = ext.extend(s)
            rows.append((s.real, s.imag, value.real, value.imag, err, "ok"))
        except PoleProximityError:
            rows.append((s.real, s.imag, math.nan, math.nan, math.nan, "pole"))
        except DomainError:
            rows.append((s.real, s.imag, math.nan, math.nan, math.nan, "unreachable"))
    manifest = build_manifest("mellin", cfg, sampler, {"s": [[p.real, p.imag] for p in points]})
    write_output(args.out, ["s_re", "s_im", "value_re", "value_im", "stderr", "status"], rows, manifest)
    return EXIT_OK


def cmd_expand(args, cfg) -> int:
    report = validate_model(cfg["model"])
    if not report.valid:
        raise DomainError("invalid model: E[xi_1] >= 0")
    if not report.simple_poles:
        raise DomainError("the expansions need the simple-poles regime; " + "; ".join(report.violations))
    sampler = _sampler(cfg, args)
    if cfg["eta"].has_jumps:
        raise DomainError("the Mellin pipeline needs a Brownian eta (no jumps)")
    ext = MellinExtension(simulate(cfg["model"], cfg["eta"], sampler))
    coeffs = hyperexp_coeffs(cfg["model"], cfg["eta"], ext, args.c_max)
    tc = tail_constant(cfg["model"], cfg["eta"], ext)
    body = coeffs.to_dict()
    body["tail_constant"] = {"R_theta": tc.r_theta, "C": tc.c, "stderr": tc.stderr,
                             "lighter_than_power": tc.lighter_than_power}
    body["mellin"] = ext.to_dict()
    text = json.dumps(body, sort_keys=True, indent=2, default=_json_default) + "\n"
    manifest = build_manifest("expand", cfg, sampler, {"c_max": args.c_max})
    write_output(args.out, None, None, manifest, text=text)
    return EXIT_OK


def cmd_mc(args, cfg) -> int:
    _require_valid(cfg)
    sampler = _sampler(cfg, args)
    samples = simulate(cfg["model"], cfg["eta"], sampler)
    rows = zip(samples.j1, samples.j2, samples.v, samples.i_draw, samples.truncation_tail)
    manifest = build_manifest("mc", cfg, sampler, {})
    write_output(args.out, ["j1", "j2", "v", "i_draw", "truncation_tail"], rows, manifest)
    return EXIT_OK


def cmd_check_residual(args, cfg) -> int:
    _require_valid(cfg)
    sampler = _sampler(cfg, args)
    model, eta = cfg["model"], cfg["eta"]
    grid = parse_grid(args.x) if args.x else DEFAULT_RESIDUAL_GRID
    samples = simulate(model, eta, sampler)
    if eta.has_jumps:
        density = histogram_density(samples.i_draw)
        report = residual_general(density, model, eta, grid)
        budget = 5e-2 if args.budget is None else args.budget
    else:
        k, dk = density_callable(samples, eta)
        report = residual_brownian_eta(k, model, eta, grid, derivative=dk)
        budget = 2e-2 if args.budget is None else args.budget
    rel = report.relative_sup
    results = {"relative_sup": rel, "norm_sup": report.norm_sup,
               "norm_l2_weighted": report.norm_l2_weighted, "budget": budget,
               "failed_points": int(np.count_nonzero(report.failed))}
    manifest = build_manifest("check-ss1", cfg, sampler, {"v": report.grid}, results)
    write_output(args.out, ["v", "residual", "reference_scale"], report.rows(), manifest)
    print(f"relative sup residual = {rel:.6g} (budget {budget:g})", file=sys.stderr)
    return EXIT_OK if rel <= budget else EXIT_DOMAIN


COMMANDS = {
    "validate": cmd_validate,
    "density": cmd_density,
    "tail": cmd_tail,
    "mellin": cmd_mellin,
    "expand": cmd_expand,
    "mc": cmd_mc,
    "check-ss1": cmd_check_residual,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expfun", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"expfun {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="model JSON file")
        p.add_argument("--out", default="-", help="output path, or - for stdout")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--n-paths", type=int, default=None)
        p.add_argument("--x", default=None, help="a:b:steps or comma list (use --x=-1,0,1 for negatives)")
        p.add_argument("--s", default=None, help="comma list of (complex) s values")
        p.add_argument("--strategy", choices=["auto", "inversion", "series", "mc"], default="auto")
        p.add_argument("--c-max", type=float, default=3.0)
        p.add_argument("--budget", type=float, default=None, help="check-ss1 pass threshold")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
