"""Experiment orchestration for the command line.

Each cell of the ``(n, seed)`` matrix is a pure function of the config, the
seed and ``n``: its random stream is addressed by ``(seed, "cell", n)``.
Cells run on a thread pool and results are merged by cell key, so the
output does not depend on scheduling.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import berry_esseen as be
from . import gaussian as gl
from .config import ExperimentConfig, shift_vector
from .processes import (ArchSpec, LinearSpec, MDependentSpec, TwoDependentSpec,
                        process_kind, theta_profile)
from .rng import StreamId

SUBCOMMANDS = ("delta", "rate", "lowerbound", "theta", "eigencheck", "plot")
CSV_HEADER = "n,seed,delta,ci,rate_term,dep_term"


@dataclass
class RunRecord:
    config_hash: str
    subcommand: str
    cells: list = field(default_factory=list)
    eigencheck: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    suites: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    stream_ids: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.suites.values()) and not self.failures

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, default=_jsonable)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def build_limit(cfg: ExperimentConfig, spec, seed: int) -> gl.LimitSpec:
    """Limit covariance: a file, the closed form, or an MC estimate."""
    v = cfg.values
    mu = shift_vector(v, spec.dim)
    src = v["limit.source"]
    if src != "auto":
        cov = gl.cov_from_json(src)
        return gl.LimitSpec.build(cov, mu, {"provenance": "file", "path": src})
    cov = gl.exact_limit(spec)
    if cov is not None:
        return gl.LimitSpec.build(cov, mu, {"provenance": cov.meta.get("provenance", "exact")})
    rng = StreamId(seed, "limit").generator()
    reps = int(v["limit.reps"])
    if isinstance(spec, MDependentSpec):
        cov = gl.block_covariance_m(spec, reps, rng)
    else:
        k = 1 if isinstance(spec, TwoDependentSpec) else int(v["limit.k_lag"])
        cov = gl.longrun_covariance(spec, k, reps, rng)
    prov = {k: cov.meta[k] for k in ("provenance", "reps", "K_lag", "m", "sensitivity")
            if k in cov.meta}
    return gl.LimitSpec.build(cov, mu, prov)


def innovation_moment(spec, p: float, seed: int, reps: int = 100_000) -> float:
    rng = StreamId(seed, "moment").generator()
    return spec.innovation.norm_moment(p, reps, rng)


def _bound_coeffs(spec):
    if isinstance(spec, LinearSpec):
        return spec.coeffs
    if isinstance(spec, (MDependentSpec, TwoDependentSpec)) and spec.generator.is_linear:
        return spec.generator.as_coeffs()
    return None


def _threads(threads: int | None) -> int:
    return max(1, int(threads or 1))


def _delta_cells(cfg: ExperimentConfig, rec: RunRecord, threads: int) -> None:
    v = cfg.values
    spec = cfg.build_process()
    coeffs = _bound_coeffs(spec)
    per_seed = {}
    for seed in v["seeds"]:
        lim = build_limit(cfg, spec, seed)
        ball = None
        method = v["method"]
        if method != "two_sample_ks" and lim.cov.rank != 2:
            ball = gl.BallCDF(lim)
            if ball.rank >= 3:
                ball.evaluate_many(np.zeros(1))
        per_seed[seed] = (lim, ball, innovation_moment(spec, v["p"], seed))
        if lim.eigencheck is not None:
            rec.eigencheck[str(seed)] = lim.eigencheck.as_dict()
        rec.extra.setdefault("limit", {})[str(seed)] = lim.provenance

    jobs = [(seed, n) for seed in v["seeds"] for n in v["n_grid"]]

    def run(job):
        seed, n = job
        lim, ball, moment = per_seed[seed]
        sid = StreamId(seed, "cell", n)
        est = be.delta_vs_gaussian(spec, lim, n, v["reps"], sid.generator(),
                                   method=v["method"], delta=v["delta"], ball=ball)
        bound = be.theoretical_bound(coeffs, n, float(np.linalg.norm(lim.shift)), v["p"], moment)
        return {"n": n, "seed": seed, "delta": est.value, "ci": est.ci_half_width,
                "method": est.method, "reps": est.reps_path,
                "rate_term": bound.rate_term, "dep_term": bound.dependence_term,
                "stream": sid.tag}

    results = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {job: pool.submit(run, job) for job in jobs}
        for job, fut in futures.items():
            try:
                results[job] = fut.result()
            except Exception as exc:  # recorded, surfaced through the exit code
                rec.failures.append({"seed": job[0], "n": job[1], "error": repr(exc)})
    rec.cells = [results[j] for j in jobs if j in results]
    rec.stream_ids = [c["stream"] for c in rec.cells]


def _fit_rates(cfg: ExperimentConfig, rec: RunRecord) -> None:
    v = cfg.values
    for seed in v["seeds"]:
        cells = [c for c in rec.cells if c["seed"] == seed]
        ests = [be.DeltaEstimate(c["delta"], c["ci"], c["n"], c["reps"], 0, c["method"])
                for c in cells]
        try:
            fit = be.rate_fit([c["n"] for c in cells], ests)
            rec.fits[str(seed)] = fit.as_dict()
        except ValueError as exc:
            rec.fits[str(seed)] = {"error": str(exc)}


def _suite_checks(cfg: ExperimentConfig, rec: RunRecord) -> None:
    v = cfg.values
    if v["eigencheck"] and rec.eigencheck:
        rec.suites["eigencheck"] = all(e["pass"] for e in rec.eigencheck.values())
    if v["checks.delta_within_ci"]:
        # Bonferroni over cells: DKW widths scale with sqrt(ln(2 / delta))
        k = max(len(rec.cells), 1)
        widen = np.sqrt(np.log(2 * k / v["delta"]) / np.log(2 / v["delta"]))
        rec.suites["delta_within_ci"] = all(c["delta"] <= widen * c["ci"] for c in rec.cells)
    lo, hi = v["checks.slope_min"], v["checks.slope_max"]
    if rec.subcommand in ("rate", "plot") and (lo is not None or hi is not None):
        ok = True
        for fit in rec.fits.values():
            s = fit.get("slope")
            ok &= s is not None and (lo is None or s >= lo) and (hi is None or s <= hi)
        rec.suites["slope_range"] = bool(ok)
    rec.suites["cells_complete"] = not rec.failures


def _lowerbound(cfg: ExperimentConfig, rec: RunRecord) -> None:
    v = cfg.values
    spec = cfg.build_process()
    if not isinstance(spec, LinearSpec) or spec.coeffs.dim != 1:
        raise ValueError("lowerbound needs a scalar linear process (process.coeffs.family = slow_rate)")
    c = spec.coeffs
    rows = be.lowerbound_rows(c, v["n_grid"], v["lowerbound.c_alpha"])
    seed = v["seeds"][0]
    for r in rows:
        b = be.theoretical_bound(c, r.n, 0.0, v["p"], 1.0)
        rec.cells.append({"n": r.n, "seed": seed, "delta": r.delta, "ci": 0.0,
                          "method": "exact_1d", "reps": 0,
                          "rate_term": b.rate_term, "dep_term": b.dependence_term})
    rec.extra["lowerbound"] = [asdict(r) for r in rows]
    rec.suites["lower_bound"] = all(r.passed for r in rows)


def _theta(cfg: ExperimentConfig, rec: RunRecord, threads: int) -> None:
    v = cfg.values
    spec = cfg.build_process()
    ks = list(range(1, int(v["theta.k_max"]) + 1))

    def run(seed):
        sid = StreamId(seed, "theta")
        est = theta_profile(spec, ks, v["theta.p"], int(v["theta.reps"]), sid.generator())
        return seed, [asdict(e) for e in est], sid.tag

    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(run, v["seeds"]))
    ok = True
    rec.extra["theta"] = {}
    for seed, rows, tag in out:
        rec.stream_ids.append(tag)
        vals = np.array([r["value"] for r in rows])
        fit = theta_decay_fit(ks, vals)
        rec.extra["theta"][str(seed)] = {"rows": rows, "fit": fit}
        if isinstance(spec, (MDependentSpec, TwoDependentSpec)):
            ok &= all(r["value"] == 0.0 for r in rows if r["k"] >= spec.m)
        else:
            ok &= fit["slope"] is not None and fit["slope"] < 0 and fit["r2"] > v["theta.r2_min"]
    if isinstance(spec, ArchSpec):
        rng = StreamId(v["seeds"][0], "contraction").generator()
        ek, ekp = spec.contraction(10_000, rng)
        rec.extra["contraction"] = {"E_K": ek, "E_K_p": ekp}
    rec.suites["theta_decay"] = bool(ok)


def theta_decay_fit(ks, values) -> dict:
    """Least-squares line through ``log theta`` against ``k``, with ``R^2``."""
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    pos = vals > 0
    if pos.sum() < 3:
        return {"slope": None, "intercept": None, "r2": None, "used": int(pos.sum())}
    x, y = ks[pos], np.log(vals[pos])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    r2 = 1.0 - resid.var() / y.var() if y.var() > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2),
            "used": int(pos.sum())}


def _eigencheck(cfg: ExperimentConfig, rec: RunRecord) -> None:
    spec = cfg.build_process()
    for seed in cfg["seeds"]:
        lim = build_limit(cfg, spec, seed)
        chk = gl.assumption_eigencheck(lim.cov)
        rec.eigencheck[str(seed)] = chk.as_dict()
        rec.extra.setdefault("spectrum", {})[str(seed)] = lim.cov.eigenvalues.tolist()
    rec.suites["eigencheck"] = all(e["pass"] for e in rec.eigencheck.values())


def run_experiment(cfg: ExperimentConfig, subcommand: str = "rate",
                   threads: int | None = None) -> RunRecord:
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if subcommand in ("rate", "plot") and len(cfg["n_grid"]) < 4:
        raise ValueError("n_grid: rate fitting needs at least 4 entries")
    t0 = time.perf_counter()
    rec = RunRecord(cfg.digest(), subcommand)
    rec.extra["process"] = process_kind(cfg.build_process())
    nthreads = _threads(threads)
    if subcommand in ("delta", "rate", "plot"):
        _delta_cells(cfg, rec, nthreads)
        if subcommand != "delta":
            _fit_rates(cfg, rec)
        _suite_checks(cfg, rec)
    elif subcommand == "lowerbound":
        _lowerbound(cfg, rec)
    elif subcommand == "theta":
        _theta(cfg, rec, nthreads)
    else:
        _eigencheck(cfg, rec)
    rec.wall_time = time.perf_counter() - t0
    return rec


def results_csv(rec: RunRecord) -> str:
    lines = [CSV_HEADER]
    for c in rec.cells:
        lines.append(",".join([str(c["n"]), str(c["seed"])] +
                              [repr(float(c[k])) for k in ("delta", "ci", "rate_term", "dep_term")]))
    return "\n".join(lines) + "\n"


def summary_text(cfg: ExperimentConfig, rec: RunRecord) -> str:
    out = [f"subcommand: {rec.subcommand}", f"config hash: {rec.config_hash}",
           f"process: {rec.extra.get('process')}", f"wall time: {rec.wall_time:.2f} s", ""]
    if rec.cells:
        out.append(f"{'n':>7} {'seed':>5} {'delta':>10} {'ci':>10} {'rate_term':>11} {'dep_term':>11}")
        for c in rec.cells:
            out.append(f"{c['n']:>7} {c['seed']:>5} {c['delta']:>10.5f} {c['ci']:>10.5f} "
                       f"{c['rate_term']:>11.4g} {c['dep_term']:>11.4g}")
        out.append("")
    for seed, fit in rec.fits.items():
        if "slope" in fit:
            out.append(f"rate fit seed {seed}: slope {fit['slope']:.3f} +- {fit['stderr_slope']:.3f}"
                       f" over n = {fit['n_grid']}, excluded {[e['n'] for e in fit['excluded']]}")
        else:
            out.append(f"rate fit seed {seed}: {fit['error']}")
    for seed, e in rec.eigencheck.items():
        out.append(f"eigencheck seed {seed}: lambda_13 = {e['lambda_13']:.4g} "
                   f"({'pass' if e['pass'] else 'fail'})")
    if "lowerbound" in rec.extra:
        out.append("lower bound rows (n, sigma2 - sigma2_n, rhs, exact delta):")
        for r in rec.extra["lowerbound"]:
            out.append(f"  {r['n']:>7} {r['gap']:.6g} {r['rhs']:.6g} {r['delta']:.6g} "
                       f"{'ok' if r['passed'] else 'VIOLATED'}")
    if "theta" in rec.extra:
        for seed, t in rec.extra["theta"].items():
            vals = ", ".join(f"{r['value']:.3g}" for r in t["rows"])
            out.append(f"theta seed {seed}: [{vals}] fit {t['fit']}")
    if "contraction" in rec.extra:
        out.append(f"contraction diagnostic: {rec.extra['contraction']}")
    for f in rec.failures:
        out.append(f"FAILED cell {f}")
    out.append("")
    for name, ok in rec.suites.items():
        out.append(f"suite {name}: {'PASS' if ok else 'FAIL'}")
    out.append(f"overall: {'PASS' if rec.passed else 'FAIL'}")
    return "\n".join(out) + "\n"


def write_outputs(cfg: ExperimentConfig, rec: RunRecord, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if rec.cells:
        (out / "results.csv").write_text(results_csv(rec))
    (out / "results.json").write_text(rec.to_json())
    (out / "summary.txt").write_text(summary_text(cfg, rec))
    (out / "config.json").write_text(cfg.to_json())
    return out


def plot_record(rec: RunRecord, out_dir: str | Path) -> list[Path]:
    """PNG of log delta against log n per seed, with bound-shape overlays."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    files = []
    seeds = sorted({c["seed"] for c in rec.cells})
    for seed in seeds:
        cells = [c for c in rec.cells if c["seed"] == seed]
        n = np.array([c["n"] for c in cells], dtype=float)
        d = np.array([c["delta"] for c in cells])
        ci = np.array([c["ci"] for c in cells])
        fig, ax = plt.subplots(figsize=(5.5, 4))
        ax.loglog(n, np.maximum(d, 1e-12), "o-", label="estimate")
        ax.loglog(n, ci, "k:", label="noise floor (DKW)")
        rate = np.array([c["rate_term"] for c in cells])
        dep = np.array([c["dep_term"] for c in cells])
        ax.loglog(n, rate, "--", label="rate term")
        if np.any(dep > 0):
            ax.loglog(n, dep, "-.", label="dependence term")
        fit = rec.fits.get(str(seed), {})
        if "slope" in fit:
            ax.loglog(n, np.exp(fit["intercept"]) * n ** fit["slope"], "-", alpha=0.5,
                      label=f"fit slope {fit['slope']:.2f}")
        ax.set_xlabel("n")
        ax.set_ylabel("delta")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"rate_seed{seed}.png"
        fig.savefig(path, dpi=110)
        plt.close(fig)
        files.append(path)
    return files


def load_record(path: str | Path) -> RunRecord:
    data = json.loads(Path(path).read_text())
    return RunRecord(**data)
