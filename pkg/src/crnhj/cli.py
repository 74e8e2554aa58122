"""Command-line entry point: ``crnhj <subcommand> --config FILE --out DIR``.

Every run writes ``<subcommand>-<confighash>.csv`` and ``.json`` into the
output directory. Files contain no timestamps, so identical inputs give
identical bytes. Errors print a JSON object on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chje import Hamiltonian1D, lax_oleinik_dp, mean_field_path, rate_function, solve_fd, variational_value
from .config import ExperimentConfig, parse_config
from .dhje import DiscreteHamiltonian, evolve_ode, evolve_semigroup
from .errors import CrnhjError, ParseError, ValidationError
from .ldp import counterexample_check, lln_concentration, varadhan_check
from .network import build_grid, perpendicular
from .segment import SegmentHamiltonian, build_segment_grid, solve_w
from .simulate import JumpTable, log_mean_exp, simulate_ensemble, simulate_path

__all__ = ["main", "run", "SUBCOMMANDS"]

log = logging.getLogger("crnhj")

SUBCOMMANDS = ("simulate", "solve-dhje", "solve-segment", "solve-chje", "rate", "meanfield",
               "ldp-check", "lln", "counterexample")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _x0(cfg: ExperimentConfig):
    x0 = cfg.run["x0"]
    if x0 is None:
        raise ValidationError(["run.x0: required for this subcommand"])
    return np.array(x0, float)


def _line_ham(cfg):
    return Hamiltonian1D.from_line(cfg.network, cfg.domain, _x0(cfg), cfg.run["beta"])


def _w0_alpha(cfg):
    nu = cfg.network.reaction_vectors[0].astype(float)
    base = _x0(cfg) + cfg.run["beta"] * perpendicular(nu)
    u0 = cfg.u0_points()
    return lambda a: u0(base + np.asarray(a, float)[..., None] * nu)


def _simulate(cfg):
    run = cfg.run
    grid = build_grid(cfg.domain, cfg.network, run["h"])
    start = grid.locate(_x0(cfg))
    tab = JumpTable.from_edges(DiscreteHamiltonian.from_grid(cfg.network, grid).edges)
    path = simulate_path(cfg.network, tab, start, run["t"], run["seed"])
    ens = simulate_ensemble(cfg.network, tab, start, run["t"], run["n_samples"], run["seed"])
    pts = grid.points
    u0 = cfg.u0_points()(pts)
    est, se = log_mean_exp(u0[ens.final_states], run["h"])
    hist = ens.histogram(grid.n_points)
    species = list(cfg.network.species)
    table = _csv(["time", *species], [[t, *pts[s]] for t, s in zip(path.times, path.states)])
    extra = {"histogram": _csv([*species, "count"], [[*pts[i], int(c)] for i, c in enumerate(hist) if c])}
    summary = {"n_samples": run["n_samples"], "mean_jumps": float(ens.n_jumps.mean()),
               "wkb_estimate": est, "wkb_stderr": se, "first_path_jumps": len(path.times) - 1}
    return table, summary, extra


def _solve_dhje(cfg):
    run = cfg.run
    grid = build_grid(cfg.domain, cfg.network, run["h"])
    H = DiscreteHamiltonian.from_grid(cfg.network, grid)
    u0 = cfg.u0_points()(grid.points)
    ode = evolve_ode(H, u0, run["t"]).values
    summary = {"n_points": grid.n_points, "sup_norm_Hu0": float(np.abs(H(u0)).max())}
    cols = [ode]
    header = [*cfg.network.species, "value"]
    if run["dt"] is not None:
        dts = [run["dt"], run["dt"] / 2]
        sg = [evolve_semigroup(H, u0, run["t"], d).values for d in dts]
        summary["semigroup_gap"] = {str(d): float(np.abs(s - ode).max()) for d, s in zip(dts, sg)}
        cols.append(sg[0])
        header.append("semigroup_value")
    rows = [[*grid.points[i], *(c[i] for c in cols)] for i in range(grid.n_points)]
    return _csv(header, rows), summary, {}


def _solve_segment(cfg):
    run = cfg.run
    seg = build_segment_grid(cfg.domain, cfg.network, _x0(cfg), run["beta"], run["r"], run["h"])
    ham = SegmentHamiltonian(cfg.network, seg)
    times = run["snapshots"] or [run["t"]]
    sols = solve_w(seg, ham, _w0_alpha(cfg), [float(s) for s in times])
    rows = [[s, a, v] for s, w in zip(times, sols) for a, v in zip(seg.alphas, w.values)]
    summary = {"k_a": seg.k_a, "k_b": seg.k_b, "a": seg.a, "b": seg.b, "r": seg.r, "n_sites": seg.n_points}
    return _csv(["t", "alpha", "w"], rows), summary, {}


def _solve_chje(cfg):
    run = cfg.run
    ham = _line_ham(cfg)
    w0 = _w0_alpha(cfg)
    fd = solve_fd(ham, w0, run["t"], run["n_alpha"])
    dp = lax_oleinik_dp(ham, w0, run["t"], run["n_alpha"], run["n_v"], run["n_t"])
    rows = [[a, x, y] for a, x, y in zip(fd.alpha, fd.final, dp.final)]
    a0 = float(np.clip(run["alpha_start"], ham.a, ham.b))
    var = variational_value(ham, w0, a0, run["t"], run["n_alpha"], run["n_v"], run["n_t"])
    summary = {"alpha": a0, "fd": fd.at(a0), "dp": dp.at(a0), "variational": var,
               "max_fd_dp_gap": float(np.abs(fd.final - dp.final).max()),
               "resolution": max(fd.resolution, dp.resolution)}
    return _csv(["alpha", "fd", "dp"], rows), summary, {}


def _rate(cfg):
    run = cfg.run
    ham = _line_ham(cfg)
    tab = rate_function(ham, run["alpha_start"], run["t"], run["n_alpha"], run["n_v"], run["n_t"])
    summary = {"alpha_start": tab.alpha_start, "argmin": tab.argmin(), "resolution": tab.resolution}
    return _csv(["y", "rate"], zip(tab.alpha, tab.finite)), summary, {}


def _meanfield(cfg):
    run = cfg.run
    ham = _line_ham(cfg)
    path = mean_field_path(ham, run["alpha_start"], run["t"], run["dt"] or 1e-3)
    summary = {"hit_time": path.hit_time, "eta_end": float(path.eta[-1])}
    return _csv(["s", "eta", "l"], zip(path.s, path.eta, path.l)), summary, {}


def _ldp_check(cfg, threads):
    run = cfg.run
    rep = varadhan_check(cfg.network, cfg.domain, _x0(cfg), cfg.u0_points(), run["t"], run["h_ladder"],
                         mc_samples=run["n_samples"], seed=run["seed"], threads=threads)
    header = ["h", "beta", "r", "exact", "mc", "mc_stderr", "continuous", "error", "z_score"]
    rows = [[getattr(r, k) for k in header] for r in rep.rows]
    return _csv(header, rows), rep.as_dict(), {}


def _lln(cfg, threads):
    run = cfg.run
    rows = lln_concentration(cfg.network, cfg.domain, _x0(cfg), run["t"], run["eps"], run["h_ladder"],
                             run["n_samples"], seed=run["seed"], threads=threads)
    header = ["h", "tail", "tail_stderr", "bound", "rate", "ok"]
    out = [[getattr(r, k) for k in header] for r in rows]
    return _csv(header, out), {"rows": [dict(zip(header, o)) for o in out]}, {}


def _counterexample(cfg):
    res = counterexample_check(cfg.run["h"])
    return _csv(list(res), [[json.dumps(v) if isinstance(v, list) else v for v in res.values()]]), res, {}


def run(config: ExperimentConfig, subcommand: str, *, threads: int = 1) -> tuple[str, dict, dict]:
    """Execute one subcommand; returns (csv text, summary dict, extra csv files)."""
    handlers = {
        "simulate": _simulate, "solve-dhje": _solve_dhje, "solve-segment": _solve_segment,
        "solve-chje": _solve_chje, "rate": _rate, "meanfield": _meanfield,
        "ldp-check": lambda c: _ldp_check(c, threads), "lln": lambda c: _lln(c, threads),
        "counterexample": _counterexample,
    }
    if subcommand not in handlers:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    return handlers[subcommand](config)


def write_outputs(out_dir: Path, subcommand: str, cfg: ExperimentConfig, table: str, summary: dict,
                  extra: dict) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{subcommand}-{cfg.hash}"
    doc = {"subcommand": subcommand, "config_hash": cfg.hash, "version": __version__,
           "config": cfg.raw, "result": _jsonable(summary)}
    paths = [out_dir / f"{stem}.csv", out_dir / f"{stem}.json"]
    paths[0].write_text(table)
    paths[1].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for name, text in sorted(extra.items()):
        p = out_dir / f"{stem}-{name}.csv"
        p.write_text(text)
        paths.append(p)
    return paths


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crnhj", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, type=Path, help="YAML experiment file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for h ladders")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        table, summary, extra = run(cfg, args.subcommand, threads=args.threads)
        for p in write_outputs(args.out, args.subcommand, cfg, table, summary, extra):
            print(p)
    except (ParseError, ValidationError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc),
               "details": getattr(exc, "errors", None) or [str(exc)]}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return 2
    except (CrnhjError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
