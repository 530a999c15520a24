"""Command-line front end: ``ncsigma {build,verify,flow,scan,selftest}``.

Configuration comes from an optional JSON file with flag overrides.  Exit
codes: 0 ok, 2 invalid configuration or input, 3 numerical or tolerance
failure.  Data files are deterministic functions of the configuration; the
run manifest adds timing and content hashes.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .conformal import ConformalStructure
from .errors import InputError, IntegrabilityError, NCSigmaError, ParameterError
from .flow import FlowConfig, perturb, relax
from .instanton import (DEFAULT_TOLERANCES, InstantonConfig, build_instanton, gauge_amplitudes,
                        gauge_transform_lambda, lattice_shifts, moduli_scan)
from .io import atomic_write, dump_json, load_series, save_series, write_manifest
from .module import CANONICAL_VARIANT, VARIANTS, ModuleGeometry, geometry_from_theta, theta_of_alpha
from .selftest import run_battery
from .sigma import (CHARGE_SIGN, CHARGE_TOL, PROJECTION_TOL, SELF_DUAL_BRANCH, ProjectionReport,
                    l1_bounds, projection_report)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
MODES = ("build", "verify", "flow", "scan", "selftest")
DEFAULT_THETA = 0.37
MIN_WINDOW = 4

# thresholds applied to the built or verified projection
BUILD_IDEMPOTENCY_TOL = 1e-8
BP_GAP_FLOOR = -1e-8
FLOW_GAP_TOL = 1e-2
FLOW_DRIFT_TOL = 1e-4


def _complex(v: Any, name: str) -> complex:
    """Accept a number, ``[re, im]`` or ``{"re": .., "im": ..}``."""
    try:
        if isinstance(v, dict):
            return complex(float(v["re"]), float(v.get("im", 0.0)))
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise ValueError
            return complex(float(v[0]), float(v[1]))
        return complex(float(v))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{name}: cannot read {v!r} as a complex number") from exc


def _cjson(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


@dataclass
class RunConfig:
    mode: str
    r: int = 0
    q: int = 1
    alpha: float | None = None
    theta: float | None = None
    tau_re: float = 0.0
    tau_im: float = 1.0
    lambda_re: float = 0.0
    lambda_im: float = 0.0
    amplitudes: list | None = None
    window: int = 16
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    seed: int = 0
    input: str | None = None
    steps: int = 300
    step: float = 1e-3
    kick: float = 1e-2
    grid: list | None = None
    grid_n: int | None = None
    equivalence_tol: float = 1e-5
    variant: str = CANONICAL_VARIANT

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.alpha is not None and self.theta is not None:
            raise ParameterError("give either alpha (with r, q) or theta, not both")
        if self.q <= 0:
            raise ParameterError(f"q must be positive, got {self.q}")
        if not self.tau_im > 0.0:
            raise ParameterError(f"Im(tau) must be positive, got {self.tau_im}")
        if self.window < MIN_WINDOW:
            raise ParameterError(f"window must be at least {MIN_WINDOW}, got {self.window}")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ParameterError(f"unknown tolerance keys {sorted(unknown)}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}")
        if self.steps < 0:
            raise ParameterError("steps must be >= 0")

    @property
    def tau(self) -> complex:
        return complex(self.tau_re, self.tau_im)

    @property
    def lam(self) -> complex:
        return complex(self.lambda_re, self.lambda_im)

    def geometry(self) -> ModuleGeometry:
        if self.alpha is not None:
            return theta_of_alpha(self.r, self.q, self.alpha)
        theta = DEFAULT_THETA if self.theta is None else self.theta
        return geometry_from_theta(theta, self.r, self.q)

    def instanton(self) -> InstantonConfig:
        A = None if self.amplitudes is None else [_complex(a, "amplitudes") for a in self.amplitudes]
        return InstantonConfig(self.geometry(), self.tau, self.lam, A, self.window, dict(self.tolerances))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_config(args: argparse.Namespace) -> RunConfig:
    """JSON file (``--config``) first, then every flag that was given."""
    d: dict[str, Any] = {}
    if args.config:
        try:
            d = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
    names = {f.name for f in fields(RunConfig)}
    unknown = set(d) - names
    if unknown:
        raise InputError(f"unknown config keys {sorted(unknown)}")
    for name in names - {"mode"}:
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    d["mode"] = args.mode
    try:
        return RunConfig(**d)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# shared output helpers


def _conventions(cfg: RunConfig, geometry: ModuleGeometry | None) -> dict[str, Any]:
    return {
        "self_dual_branch": SELF_DUAL_BRANCH,
        "charge_sign": CHARGE_SIGN,
        "bezout_pair": None if geometry is None else [geometry.a, geometry.b],
        "hermitian_variant": cfg.variant if cfg.mode == "selftest" else CANONICAL_VARIANT,
    }


@dataclass
class _Run:
    cfg: RunConfig
    started: float = field(default_factory=time.time)
    files: list[Path] = field(default_factory=list)
    checks: list[dict[str, Any]] = field(default_factory=list)
    geometry: ModuleGeometry | None = None

    @property
    def out(self) -> Path | None:
        return None if self.cfg.out is None else Path(self.cfg.out)

    def write(self, name: str, text: str) -> None:
        if self.out is not None:
            self.files.append(atomic_write(self.out / name, text))

    def check(self, name: str, value: float, passed: bool, tol: float | None = None) -> bool:
        self.checks.append({"name": name, "value": float(value), "tol": tol, "passed": bool(passed)})
        print(f"{'PASS' if passed else 'FAIL'} {name} = {value!r}", file=sys.stderr)
        return bool(passed)

    @property
    def ok(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def finish(self) -> int:
        code = EXIT_OK if self.ok else EXIT_NUMERIC
        if self.out is not None:
            now = time.time()
            write_manifest(
                self.out, self.files,
                config=self.cfg.to_dict(),
                version=__version__,
                conventions=_conventions(self.cfg, self.geometry),
                geometry=None if self.geometry is None else self.geometry.to_dict(),
                wall_clock={"started": datetime.fromtimestamp(self.started, timezone.utc).isoformat(),
                            "elapsed_s": now - self.started},
                checks=self.checks,
                exit_code=code,
            )
        return code


def _report_checks(run: _Run, rep: ProjectionReport, q: int | None, idem_tol: float) -> None:
    run.check("idempotency_residual", rep.idempotency_residual, rep.idempotency_residual <= idem_tol, idem_tol)
    dist = abs(rep.charge_raw - rep.charge_rounded)
    run.check("charge_integrality", dist, dist <= CHARGE_TOL, CHARGE_TOL)
    run.check("bp_gap", rep.bp_gap, rep.bp_gap >= BP_GAP_FLOOR, BP_GAP_FLOOR)
    if q is not None:
        run.check("charge_value", rep.charge_rounded, rep.charge_rounded == CHARGE_SIGN * q)


# ---------------------------------------------------------------------------
# commands


def cmd_build(cfg: RunConfig) -> int:
    run = _Run(cfg)
    icfg = cfg.instanton()
    run.geometry = icfg.geometry
    b = build_instanton(icfg)
    rep = b.report
    run.write("projection.json", b.projection.to_json() + "\n")
    run.write("report.json", dump_json(rep.to_dict()))
    run.write("build.json", dump_json({
        "geometry": icfg.geometry.to_dict(),
        "tau": _cjson(icfg.tau),
        "lambda": _cjson(icfg.lam),
        "amplitudes": [_cjson(a) for a in icfg.amplitudes],
        "window": icfg.window,
        "tolerances": icfg.tolerances,
        "extraction": b.extraction.to_dict(),
        "l1_bounds": l1_bounds(b.projection, icfg.cs),
    }))
    print(rep.to_json())
    _report_checks(run, rep, icfg.geometry.q, BUILD_IDEMPOTENCY_TOL)
    tr = icfg.geometry.r + icfg.geometry.q * icfg.geometry.theta
    dt = abs((rep.trace - tr + 0.5) % 1.0 - 0.5)
    run.check("trace_mod_one", dt, dt <= 1e-4, 1e-4)
    return run.finish()


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.input is None:
        raise InputError("verify needs an input projection file")
    run = _Run(cfg)
    p = load_series(cfg.input)
    rep = projection_report(p, ConformalStructure(cfg.tau))
    run.write("report.json", dump_json(rep.to_dict()))
    print(rep.to_json())
    _report_checks(run, rep, None, PROJECTION_TOL)
    return run.finish()


def cmd_flow(cfg: RunConfig) -> int:
    run = _Run(cfg)
    icfg = cfg.instanton()
    run.geometry = icfg.geometry
    if cfg.input is not None:
        p0 = load_series(cfg.input)
    else:
        rng = np.random.default_rng(cfg.seed)
        p0 = perturb(build_instanton(icfg, with_report=False).projection, rng, cfg.kick)
    fcfg = FlowConfig(icfg.cs, step=cfg.step, max_steps=cfg.steps)
    p, trace = relax(p0, fcfg)
    summ = trace.summary()
    run.write("flow.csv", trace.to_csv())
    run.write("flow.json", dump_json({"flow": fcfg.to_dict(), "summary": summ}))
    run.write("final_projection.json", p.to_json() + "\n")
    print(dump_json(summ), end="")
    progressed = summ["accepted_steps"] > 0 or summ["status"] == "converged"
    run.check("flow_progress", summ["accepted_steps"], progressed)
    run.check("final_bp_gap", summ["final_bp_gap"], summ["final_bp_gap"] <= FLOW_GAP_TOL, FLOW_GAP_TOL)
    run.check("charge_drift", summ["max_charge_drift"], summ["max_charge_drift"] <= FLOW_DRIFT_TOL,
              FLOW_DRIFT_TOL)
    run.check("monotone_action", summ["max_action_increase"], summ["max_action_increase"] <= 0.0, 0.0)
    return run.finish()


def lattice_grid(cfg: InstantonConfig, n: int) -> list[tuple[complex, np.ndarray]]:
    """``n x n`` samples of the fundamental cell, each followed by a lattice-shifted duplicate.

    The duplicate cycles through the shifts ``Z1``, ``Z2``, ``Z1^-1``,
    ``Z2^-1`` and carries the matching amplitude transformation.
    """
    w1, w2 = lattice_shifts(cfg.tau)
    words = ((1, 0), (0, 1), (-1, 0), (0, -1))
    out = []
    for i in range(n):
        for j in range(n):
            lam = (i + 0.5) / n * w1 + (j + 0.5) / n * w2
            word = words[(i * n + j) % 4]
            out.append((lam, cfg.amplitudes))
            out.append((gauge_transform_lambda(lam, word, cfg.tau),
                        gauge_amplitudes(cfg.amplitudes, word, cfg.geometry)))
    return out


def _grid_entries(cfg: RunConfig, icfg: InstantonConfig) -> list[tuple]:
    if cfg.grid is not None:
        if not isinstance(cfg.grid, list):
            raise InputError("grid must be a list of entries")
        out = []
        for k, e in enumerate(cfg.grid):
            if not isinstance(e, dict) or "lambda" not in e:
                raise InputError(f"grid entry {k} must be an object with a 'lambda' field")
            lam = _complex(e["lambda"], f"grid[{k}].lambda")
            A = icfg.amplitudes if "amplitudes" not in e else [
                _complex(a, f"grid[{k}].amplitudes") for a in e["amplitudes"]]
            geom = None if "alpha" not in e else theta_of_alpha(cfg.r, cfg.q, float(e["alpha"]))
            out.append((lam, A, geom))
        return out
    if cfg.grid_n is not None:
        if cfg.grid_n < 1:
            raise ParameterError("grid_n must be positive")
        return lattice_grid(icfg, cfg.grid_n)
    return []


def cmd_scan(cfg: RunConfig) -> int:
    run = _Run(cfg)
    icfg = cfg.instanton()
    run.geometry = icfg.geometry
    grid = _grid_entries(cfg, icfg)
    if not grid:
        raise InputError("scan grid is empty; give 'grid' entries or --grid-n")
    res = moduli_scan(icfg, grid, cfg.equivalence_tol)
    buf = _io.StringIO()
    names = ["index", "status", "lambda_re", "lambda_im", "class_re", "class_im", "word_m", "word_n"]
    names += ProjectionReport.field_names()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in res.rows:
        rep = [] if r.report is None else [repr(v) if isinstance(v, float) else v
                                          for v in r.report.to_dict().values()]
        w.writerow([r.index, r.status, repr(r.lam.real), repr(r.lam.imag),
                    repr(r.point.lambda_class.real), repr(r.point.lambda_class.imag),
                    r.point.word[0], r.point.word[1]] + (rep or [""] * len(ProjectionReport.field_names())))
    run.write("scan.csv", buf.getvalue())
    summary = {
        "rows": len(res.rows),
        "statuses": [r.status for r in res.rows],
        "equivalent_pairs": [list(t) for t in res.equivalent_pairs],
        "max_equivalent_distance": max((d for *_, d in res.equivalent_pairs), default=None),
        "separation_floor": res.separation_floor,
        "equivalence_tol": res.equivalence_tol,
    }
    run.write("scan.json", dump_json(summary))
    print(dump_json({k: v for k, v in summary.items() if k != "equivalent_pairs"}), end="")
    bad = [r.index for r in res.rows if r.status != "ok"]
    run.check("rows_ok", len(bad), not bad)
    eqd = summary["max_equivalent_distance"]
    run.check("gauge_equivalence", -1.0 if eqd is None else eqd,
              eqd is None or eqd <= cfg.equivalence_tol, cfg.equivalence_tol)
    return run.finish()


def cmd_selftest(cfg: RunConfig) -> int:
    run = _Run(cfg)
    t0 = time.perf_counter()
    checks = run_battery(cfg.variant, cfg.seed)
    for c in checks:
        run.check(c.name, c.value, c.passed, c.tol)
    run.write("selftest.json", dump_json([c.to_dict() for c in checks]))
    n_fail = sum(not c.passed for c in checks)
    print(f"selftest variant={cfg.variant}: {len(checks) - n_fail}/{len(checks)} passed "
          f"in {time.perf_counter() - t0:.1f}s")
    return run.finish()


COMMANDS = {"build": cmd_build, "verify": cmd_verify, "flow": cmd_flow, "scan": cmd_scan,
            "selftest": cmd_selftest}


# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file; flags override its fields")
    common.add_argument("--theta", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--r", type=int)
    common.add_argument("--q", type=int)
    common.add_argument("--tau-re", dest="tau_re", type=float)
    common.add_argument("--tau-im", dest="tau_im", type=float)
    common.add_argument("--lambda-re", dest="lambda_re", type=float)
    common.add_argument("--lambda-im", dest="lambda_im", type=float)
    common.add_argument("--window", type=int, help="truncation half-width M")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="ncsigma", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    sub.add_parser("build", parents=[common], help="build a Gaussian instanton projection")
    v = sub.add_parser("verify", parents=[common], help="report on a stored projection")
    v.add_argument("input", nargs="?", help="projection JSON file")
    f = sub.add_parser("flow", parents=[common], help="relax a perturbed instanton")
    f.add_argument("--steps", type=int)
    f.add_argument("--step", type=float)
    f.add_argument("--kick", type=float, help="l1 size of the initial tangent perturbation")
    f.add_argument("--input", help="start from this projection instead")
    s = sub.add_parser("scan", parents=[common], help="moduli scan over a lambda grid")
    s.add_argument("--grid-n", dest="grid_n", type=int, help="n x n cell grid plus lattice duplicates")
    s.add_argument("--equivalence-tol", dest="equivalence_tol", type=float)
    t = sub.add_parser("selftest", parents=[common], help="invariant battery at window 8")
    t.add_argument("--variant", choices=VARIANTS)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args)
        return COMMANDS[cfg.mode](cfg)
    except (ParameterError, InputError, IntegrabilityError) as exc:
        print(f"ncsigma: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NCSigmaError as exc:
        print(f"ncsigma: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
