"""Command-line runner.

Every subcommand writes its artifacts to ``--out`` and a ``summary.json``
listing its checks as ``{check_id, status, measured, expected,
tolerance}``.  The exit status is 0 exactly when every check passes.
Wall-clock runtimes are kept out of the JSON (they would break
byte-identical reruns) and go to ``timing.txt``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .acceptance import (CRITERIA, FAIL, PASS, Check, CriterionResult, check_at_least, check_at_most,
                         check_close, witten_closed_form)
from .asympt import exponent, fit_leading, prediction_report, write_fit_csv, write_prediction_json
from .config import ConfigError, ExperimentConfig, load_config, serialize_config
from .dynamics import generating_residual, jet_comparison, linearization_at_equilibrium, shear_matrix, write_jet_csv
from .errors import DegenTraceError
from .model import get_preset, validate_hypotheses
from .oscint import ModelIntegral, residual_order, standard_integral, write_oscint_csv
from .spectral import ModelSpectrum, radial_channels, solve_window, write_spectrum_csv
from .trace import effective_half_width, model_spectrum_for, trace_curve, write_trace_csv

log = logging.getLogger("degentrace")

SUBCOMMANDS = ("validate", "spectrum", "trace", "predict", "fit", "oscint", "flow", "report")


class Run:
    """Shared state of one invocation: config, output directory, thread pool and collected checks."""

    def __init__(self, cfg: ExperimentConfig, out: Path, threads: int, base: Path | None):
        self.cfg, self.out, self.threads, self.base = cfg, out, max(1, threads), base
        self.checks: list[Check] = []
        self._curve = None
        self._spectrum = None
        self.timings: list[tuple[str, float, float, str]] = []
        out.mkdir(parents=True, exist_ok=True)

    def model(self, **kw):
        return self.cfg.model(self.base, **kw)

    def map(self, fn: Callable, items: Sequence) -> list:
        """Ordered parallel map; results come back in input order."""
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def stage(self, name: str, body: Callable[[], list[Check]]) -> None:
        """Run a stage, recording its checks or, on error, a failed ``name.error`` check."""
        try:
            self.checks += body()
        except (DegenTraceError, ValueError, ArithmeticError, Warning, KeyError, OSError) as exc:
            log.error("stage %s failed: %s", name, exc)
            self.checks.append(Check(f"{name}.error", "error", None, None, None, f"{type(exc).__name__}: {exc}"))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and all(status == PASS for _, _, _, status in self.timings)

    def write_summary(self, command: str) -> None:
        entries = [c.to_dict() for c in self.checks]
        entries += [{"check_id": cid, "status": status, "measured": None, "expected": f"<= {budget!r} s",
                     "tolerance": None} for cid, _, budget, status in self.timings]
        doc = {"command": command, "status": PASS if self.passed else FAIL, "checks": entries}
        (self.out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
        if self.timings:
            lines = [f"{cid} {seconds:.2f} s (budget {budget:g} s) {status}" for cid, seconds, budget, status
                     in self.timings]
            (self.out / "timing.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _preset_box(run: Run) -> float:
    p = run.cfg.potential
    return get_preset(p.preset).box if p.preset else 2.0


def stage_validate(run: Run) -> list[Check]:
    model = run.model(allow_low_degree=True)
    rep = validate_hypotheses(model, run.cfg.window.eps, _preset_box(run))
    (run.out / "validate.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n")
    return [Check(f"validate.{c.name}", PASS if c.passed else FAIL, float(c.passed), 1.0, 0.0, c.detail)
            for c in rep.checks]


def _widths(run: Run) -> list[tuple[float, float]]:
    cfg = run.cfg
    tf = cfg.test_function()
    wtol = cfg.method.window_tol * abs(float(tf.eval_phi(0.0)))
    eps = cfg.window.eps
    return [(float(h), effective_half_width(tf, h, eps, wtol)[0] if wtol > 0 else eps) for h in cfg.h_values()]


def _model_spectrum(run: Run) -> ModelSpectrum:
    """Rescaled model spectrum of the run, built once and shared by all stages."""
    if run._spectrum is None:
        cfg = run.cfg
        run._spectrum = model_spectrum_for(run.model(), cfg.test_function(), _widths(run), npw=cfg.method.npw)
    return run._spectrum


def _windows(run: Run):
    cfg, model = run.cfg, run.model()
    E_c = cfg.energy()
    widths = _widths(run)
    path = cfg.method_path(model)
    out = []
    if path in ("rescaled", "both"):
        cache = _model_spectrum(run)
        out += [cache.window(h, w, E_c) for h, w in widths]
    if path in ("direct", "both"):
        solve = solve_window if model.n == 1 else radial_channels

        def one(hw):
            return solve(model, hw[0], hw[1], E_c=E_c, npw=cfg.method.npw)

        out += run.map(one, widths)
    return out


def stage_spectrum(run: Run) -> list[Check]:
    wins = _windows(run)
    write_spectrum_csv(run.out / "spectrum.csv", wins)
    return [check_at_least(f"spectrum.count[{w.method},h={w.metadata['h']:g}]", len(w), 1) for w in wins]


def _curve(run: Run):
    """Trace curve of the run, computed once and shared by the trace and fit stages."""
    if run._curve is None:
        cfg, model = run.cfg, run.model()
        tf = cfg.test_function()
        wtol = cfg.method.window_tol * abs(float(tf.eval_phi(0.0)))
        path = cfg.method_path(model)
        cache = _model_spectrum(run) if path in ("rescaled", "both") else None
        run._curve = trace_curve(model, tf, cfg.energy(), cfg.window.eps, cfg.h_values(), path,
                                 window_tol=wtol, npw=cfg.method.npw, cache=cache)
    return run._curve


def stage_trace(run: Run) -> list[Check]:
    curve = _curve(run)
    rows = [s for pair in curve.pairs for s in pair] if curve.pairs else curve.samples
    write_trace_csv(run.out / "trace.csv", rows)
    checks = [Check(f"trace.failure[h={h:g}]", FAIL, None, None, None, str(e)) for h, e in curve.failures.items()]
    for r, d in curve.pairs:
        checks.append(check_close(f"trace.dual_path[h={r.h:g}]", d.gamma, r.gamma, 1e-5))
    return checks or [Check("trace.complete", PASS, float(len(curve.samples)), float(len(run.cfg.h_values())), 0.0)]


def stage_predict(run: Run) -> list[Check]:
    model = run.model()
    rep = prediction_report(model, run.cfg.test_function())
    write_prediction_json(run.out / "prediction.json", rep)
    checks = [Check("predict.exponent", PASS, rep["exponent"], str(exponent(model.n, model.k)), 0.0)]
    if rep["lambda00_phase_space"] is not None:
        checks.append(check_close("predict.coefficient_routes", rep["lambda00_polar"], rep["lambda00_phase_space"],
                                  1e-6))
    return checks


def stage_fit(run: Run) -> list[Check]:
    cfg, model = run.cfg, run.model()
    curve = _curve(run)
    if curve.failures:
        raise next(iter(curve.failures.values()))
    fit = fit_leading(curve.h, curve.gamma, exponent(model.n, model.k), model.k, cfg.method.n_corrections)
    write_fit_csv(run.out / "fit.csv", fit, curve.h, curve.gamma)
    rep = prediction_report(model, cfg.test_function())
    doc = {"fit": fit.to_dict(), "lambda00": rep["lambda00_polar"], "ratio": fit.A / rep["lambda00_polar"]}
    checks = [check_close("fit.A", fit.A, rep["lambda00_polar"], 0.05,
                          detail="fitted leading coefficient against the prediction")]
    p = cfg.potential
    if p.preset == "witten-1d" and cfg.testfn.profile == "bump":
        closed = witten_closed_form(cfg.test_function())
        doc["witten_closed_form"] = closed
        checks.append(check_close("fit.witten_closed_form", fit.A, closed, 0.03))
    (run.out / "fit.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return checks


def stage_oscint(run: Run) -> list[Check]:
    o = run.cfg.oscint
    p: ModelIntegral = standard_integral(o.k, o.mode)
    lam = o.lam_grid()
    direct = run.map(p.direct_value, list(lam))
    checks = []
    orders = o.orders if o.mode == "definite" else ((0, 0),)
    for J, L in orders:
        r = residual_order(p, J, L, lam, direct=direct)
        write_oscint_csv(run.out / f"oscint_k{o.k}_{o.mode}_J{J}_L{L}.csv", r.rows())
        slope = r.slope if r.slope is not None else math.nan
        if o.mode == "definite":
            checks.append(check_close(f"oscint.slope[k={o.k},J={J},L={L}]", slope, r.predicted, 0.1,
                                      relative=False))
        else:
            checks.append(check_at_least(f"oscint.indefinite_slope[k={o.k}]", slope,
                                         -(0.5 + 1.0 / o.k) + 0.2))
    return checks


def stage_flow(run: Run) -> list[Check]:
    model, fl = run.model(), run.cfg.flow
    n = model.n
    checks, jets, lin_rows = [], [], []
    for t in fl.times:
        J = linearization_at_equilibrium(model, t, check=False).jacobian
        dev = float(np.max(np.abs(J - shear_matrix(n, t))))
        lin_rows.append((t, dev))
        checks.append(check_at_most(f"flow.jacobian[t={t:g}]", dev, 1e-8))
    dirs = [d for d in fl.directions if len(d) == 2 * n] or [tuple(r) for r in np.eye(2 * n)]
    for t in fl.times:
        for d in dirs:
            row = jet_comparison(model, t, d)
            jets.append(row)
            diff = float(np.max(np.abs(row["fd_value"] - row["formula_value"])))
            checks.append(check_at_most(f"flow.highest_derivative[t={t:g},d={' '.join(map(str, d))}]",
                                        diff, row["fd_error"]))
    write_jet_csv(run.out / "flow_jets.csv", jets)
    g = generating_residual(model, fl.times[min(1, len(fl.times) - 1)], seed=run.cfg.output.seed, check=False)
    with open(run.out / "flow_linearization.csv", "w") as fh:
        fh.write("t,max_deviation_from_shear,tolerance\n")
        for t, dev in lin_rows:
            fh.write(f"{t!r},{dev:.3e},1e-08\n")
    with open(run.out / "flow_generating.csv", "w") as fh:
        fh.write("eps,defect,fitted_order\n")
        for e, dfc in zip(g.eps, g.defects):
            fh.write(f"{float(e)!r},{float(dfc):.6e},{g.order:.6f}\n")
    checks.append(check_at_least("flow.generating_order", g.order, model.k - 0.2))
    return checks


def stage_acceptance(run: Run, numbers: Sequence[int]) -> list[Check]:
    checks = []
    for n in numbers:
        res: CriterionResult = CRITERIA[n]()
        print(res.line(), flush=True)
        checks += res.checks
        rc = res.runtime_check
        run.timings.append((rc.check_id, res.runtime, res.budget, rc.status))
    with open(run.out / "acceptance.txt", "w") as fh:
        for c in checks:
            fh.write(f"{c.check_id} {c.status} measured={c.measured!r} expected={c.expected!r} "
                     f"tolerance={c.tolerance!r} {c.detail}\n")
    return checks


STAGES = {"validate": stage_validate, "spectrum": stage_spectrum, "trace": stage_trace, "predict": stage_predict,
          "fit": stage_fit, "oscint": stage_oscint, "flow": stage_flow}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _criteria(text: str) -> list[int]:
    if text in ("all", ""):
        return sorted(CRITERIA)
    if text == "none":
        return []
    out = sorted({int(v) for v in text.split(",")})
    bad = [v for v in out if v not in CRITERIA]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown criteria {bad}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment configuration file (INI)")
    common.add_argument("--preset", help="bundled model; overrides the config's potential")
    common.add_argument("--out", type=Path, help="output directory (default: config output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for parameter sweeps")
    common.add_argument("--strict", action="store_true", help="treat warnings as failures")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="degentrace", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {"validate": "check the model hypotheses", "spectrum": "eigenvalue CSV over the h schedule",
             "trace": "spectral-sum CSV over the h schedule", "predict": "leading-term prediction JSON",
             "fit": "fit the leading coefficient (CSV and JSON)", "oscint": "model oscillatory-integral tables",
             "flow": "flow and generating-function tables",
             "report": "all stages plus the acceptance suite"}
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "report":
            sp.add_argument("--criteria", type=_criteria, default=sorted(CRITERIA),
                            help="comma-separated acceptance criteria, 'all' or 'none'")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.preset:
            cfg = cfg.with_preset(args.preset)
    except (ConfigError, OSError, KeyError) as exc:
        print(f"degentrace: configuration error: {exc}", file=sys.stderr)
        return 2
    out = args.out or Path(cfg.output.dir)
    base = args.config.parent if args.config else None
    run = Run(cfg, out, args.threads, base)
    (out / "config.ini").write_text(serialize_config(cfg))
    np.random.seed(cfg.output.seed)
    with warnings.catch_warnings():
        if args.strict:
            warnings.simplefilter("error")
        if args.command == "report":
            for name in ("validate", "predict", "spectrum", "trace", "fit", "oscint", "flow"):
                run.stage(name, lambda name=name: STAGES[name](run))
            if args.criteria:
                run.stage("acceptance", lambda: stage_acceptance(run, args.criteria))
        else:
            run.stage(args.command, lambda: STAGES[args.command](run))
    run.write_summary(args.command)
    failed = [c.check_id for c in run.checks if not c.passed]
    failed += [cid for cid, _, _, status in run.timings if status != PASS]
    print(f"{args.command}: {len(run.checks) - len([c for c in run.checks if not c.passed])}/{len(run.checks)} "
          f"checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
