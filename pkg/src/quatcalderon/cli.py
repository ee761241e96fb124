"""Command-line front end.

Subcommands ``phantom``, ``forward``, ``reconstruct``, ``verify`` and
``sweep`` read a JSON configuration (see :mod:`quatcalderon.config`), write
CSV tables, binary field dumps and a ``manifest.json`` holding the fully
materialized configuration.  Exit codes: 1 verification failure,
2 invalid configuration, 3 positivity violation, 4 non-contractive solver,
5 division by ``i xi`` at ``xi = 0``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .calculus import icosphere
from .config import ConfigError, RunConfig
from .dirac import analytic_potentials, contraction_threshold, potentials_from_gamma
from .errors import DivisionByZeroError, NonContractive, PositivityViolation
from .grid import dump_field, sample_phantom
from .recon import relative_l2, run_reconstruction
from .scatter import _jsonable, admissible_pairs, forward
from .verify import run_suites

EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_NONCONTRACTIVE = 4
EXIT_DIVISION = 5


def _version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


@contextmanager
def _mapper(threads: int):
    """``map`` or a thread pool's ordered ``map`` for ``threads > 1``."""
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield pool.map


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")


def _manifest(cfg: RunConfig, command: str, out: Path, outputs: list[str], results: dict, started: float) -> None:
    _write_json(
        out / "manifest.json",
        {
            "command": command,
            "version": _version(),
            "config": cfg.data,
            "outputs": outputs,
            "results": results,
            "seconds": time.perf_counter() - started,
        },
    )


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_phantom(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    ph, grid = cfg.phantom, cfg.grid
    gamma = sample_phantom(ph, grid)
    pots = potentials_from_gamma(gamma)
    truth = analytic_potentials(ph, grid)
    dump_field(gamma, out / "gamma.qf", {"field": "gamma"})
    dump_field(pots.q1, out / "q1.qf", {"field": "q1"})
    dump_field(pots.q2, out / "q2.qf", {"field": "q2"})
    results = {
        "min_re_gamma": float(np.min(gamma.sc.real)),
        "max_re_gamma": float(np.max(gamma.sc.real)),
        "q2_spectral_vs_analytic": relative_l2(pots.q2.values, truth.q2.values),
        "support_cells": int(np.count_nonzero(pots.support)),
    }
    _manifest(cfg, "phantom", out, ["gamma.qf", "q1.qf", "q2.qf"], results, t0)
    print(json.dumps(results))
    return 0


def cmd_forward(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    ph, grid, settings = cfg.phantom, cfg.grid, cfg.solver
    fw = cfg["forward"]
    pots = potentials_from_gamma(sample_phantom(ph, grid))
    threshold = contraction_threshold(pots, fw["threshold_direction"], tol=settings.tol, max_iter=settings.max_iter)
    pairs = admissible_pairs(fw["pairs"], fw["pair_xi_max"], fw["pair_k"], seed=cfg["seed"]) if fw["pairs"] else None
    mesh = icosphere(fw["mesh_level"]) if pairs else None
    with _mapper(cfg["threads"]) as mapper:
        table = forward(ph, grid, fw["xis"], fw["ks"], settings, pairs, mesh, mapper)
    table.to_csv(out / "table.csv")
    results = {
        "rows": len(table),
        "contraction_threshold": {"direction": fw["threshold_direction"], "k_abs": threshold},
        **{k: v for k, v in table.meta.items() if k in ("iterations", "boundary_volume_mismatch", "clifford_green_defect")},
    }
    _manifest(cfg, "forward", out, ["table.csv"], results, t0)
    print(json.dumps({"rows": len(table), "contraction_threshold": threshold}))
    return 0


def _write_qhat(path: Path, rec, grid) -> None:
    xi = grid.xi_lattice()[:, rec.xi_mask]
    q = rec.qhat[:, rec.xi_mask]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi0", "xi1", "xi2"] + [f"re{j}" for j in range(4)] + [f"im{j}" for j in range(4)])
        for i in range(xi.shape[1]):
            w.writerow([f"{v:.17g}" for v in (*xi[:, i], *q[:, i].real, *q[:, i].imag)])


def cmd_reconstruct(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    r = cfg["recon"]
    grid = cfg.grid
    with _mapper(cfg["threads"]) as mapper:
        rec, report = run_reconstruction(
            cfg.phantom, grid, float(r["R"]), r["n_radial"], r["n_angular"], r["xi_max"], cfg.solver, mapper
        )
    _write_qhat(out / "qhat.csv", rec, grid)
    dump_field(rec.q2, out / "q2_recovered.qf", {"field": "q2", "R": rec.R})
    dump_field(rec.gamma.gamma, out / "gamma_recovered.qf", {"field": "gamma", "R": rec.R})
    report["xi_origin"] = "skipped"
    _write_json(out / "report.json", report)
    _manifest(cfg, "reconstruct", out, ["qhat.csv", "q2_recovered.qf", "gamma_recovered.qf", "report.json"], report, t0)
    print(json.dumps({"qhat_error_xi4": report["qhat_error_xi4"], "gamma_relative_l2": report["gamma"]["relative_l2"]}))
    return 0


def _non_increasing(values: list[float]) -> bool:
    return all(b <= a for a, b in zip(values, values[1:]))


def cmd_sweep(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    r = cfg["recon"]
    box = cfg["grid"]["box"]
    rows = []
    with _mapper(cfg["threads"]) as mapper:
        for n in r["n_values"]:
            sub = RunConfig.load(overrides={**cfg.data, "grid": {"n": n, "box": box}})
            for R in r["r_values"]:
                t1 = time.perf_counter()
                _, rep = run_reconstruction(
                    sub.phantom, sub.grid, float(R), r["n_radial"], r["n_angular"], r["xi_max"], cfg.solver, mapper
                )
                rows.append(
                    {
                        "n": n,
                        "R": float(R),
                        "qhat_error_xi4": rep["qhat_error_xi4"],
                        "qhat_error_vs_input_xi4": rep["qhat_error_vs_input_xi4"],
                        "gamma_relative_l2": rep["gamma"]["relative_l2"],
                        "gamma_contrast_relative_l2": rep["gamma"]["contrast_relative_l2"],
                        "seconds": time.perf_counter() - t1,
                    }
                )
    cols = list(rows[0])
    with open(out / "trend.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols[:-1], extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({c: (f"{row[c]:.17g}" if isinstance(row[c], float) else row[c]) for c in cols[:-1]})
    # the R trend isolates the annulus averaging (error against the input
    # potential); the n trend is the discretization error against the closed form
    trends = {"in_R": {}, "in_n": {}}
    for n in r["n_values"]:
        trends["in_R"][str(n)] = _non_increasing([x["qhat_error_vs_input_xi4"] for x in rows if x["n"] == n])
    for R in r["r_values"]:
        trends["in_n"][str(float(R))] = _non_increasing([x["qhat_error_xi4"] for x in rows if x["R"] == float(R)])
    results = {"rows": rows, "monotone": trends}
    _manifest(cfg, "sweep", out, ["trend.csv"], results, t0)
    print(json.dumps(trends))
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    out = _out_dir(cfg)
    report = run_suites(cfg.suites, cfg["seed"], cfg["verify"]["tolerances"])
    _write_json(out / "verify.json", report)
    _manifest(cfg, "verify", out, ["verify.json"], {"passed": report["passed"]}, t0)
    for name, suite in report["suites"].items():
        for c in suite["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"{status} {c['name']} value={c['value']:.3g} tol={c['tolerance']:.3g} {c['detail']}".rstrip())
    print(json.dumps({"passed": report["passed"]}))
    return 0 if report["passed"] else EXIT_VERIFY


COMMANDS = {
    "phantom": cmd_phantom,
    "forward": cmd_forward,
    "reconstruct": cmd_reconstruct,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quatcalderon", description="Quaternionic Calderon toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for randomized checks")
        p.add_argument("--threads", type=int, help="worker threads for per-k solves")
        if name == "verify":
            p.add_argument("--suite", help="suite name or 'all'")
        if name == "sweep":
            p.add_argument("--r-values", help="comma-separated annulus radii")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    if args.out is not None:
        over["out"] = args.out
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    if getattr(args, "suite", None):
        over["suites"] = [args.suite]
    if getattr(args, "r_values", None):
        try:
            over["recon"] = {"r_values": [float(v) for v in args.r_values.split(",")]}
        except ValueError:
            raise ConfigError(f"--r-values: cannot parse {args.r_values!r}", "recon/r_values") from None
    return over


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"invalid configuration at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PositivityViolation as exc:
        print(f"positivity violation: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    except NonContractive as exc:
        k = None if exc.k is None else [float(v) for v in np.asarray(exc.k)]
        print(f"non-contractive at k = {k}: {exc}", file=sys.stderr)
        return EXIT_NONCONTRACTIVE
    except DivisionByZeroError as exc:
        print(f"division by zero: {exc}", file=sys.stderr)
        return EXIT_DIVISION
    except (FileNotFoundError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
