"""Named experiments over the simulator stack, with CSV/JSON/figure output.

Each runner estimates one family of quantities across replications, writes

* ``results*.csv``   one row per parameter: param,estimate,stderr,replications,raw_file
* ``raw*.csv``       every per-replication value behind those estimates
* ``timings.csv``    wall-clock per parameter (kept out of results.csv so
                     result files are byte-stable across machines)
* ``summary.json``   resolved config, package version, fits and check results
* ``<experiment>.png``  the report figure

Floats are serialized with 17 significant digits so files round-trip.
Replications are dispatched to a thread pool; every replication derives
its own random streams from (seed, replication), so results do not depend
on scheduling or thread count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import alpha_envelope_check, fit_rate, mean_and_stderr
from .config import ConfigError, ExperimentConfig
from .kernels import KernelPair, validate_conditions
from .paths import TimeGrid, derive_seed, generate_bundle, restrict, sample_initial
from .picard import (
    LawFlow,
    PicardNonConvergence,
    analytic_linear_flow,
    cached_picard_solve,
    picard_solve,
    save_law_flow,
)
from .simulator import (
    centered_kernel_stats,
    coupled_chaos_error,
    euler_interacting,
    euler_limit_particles,
)

_TAG_INIT = 1
_TAG_BUNDLE = 2
_TAG_LAW = 3

CHAOS_SLOPE_BAND = (-1.35, -0.65)
CHAOS_NERROR_FACTOR = 4.0
EULER_LINEAR_SLOPE_BAND = (0.8, 1.2)
EULER_ENVELOPE_ALPHA = 0.4
MOMENT_SLOPE_TOLERANCE = 0.1
INCREMENT_SLOPE_BAND = (0.9, 1.1)


@dataclass(frozen=True)
class ResultRow:
    param: str
    estimate: float
    stderr: float
    replications: int
    raw_file: str


@dataclass
class ExperimentOutcome:
    experiment: str
    out_dir: Path
    summary: dict
    checks: dict[str, dict]
    files: list[str] = field(default_factory=list)

    @property
    def failed_checks(self) -> list[str]:
        return [name for name, c in self.checks.items() if c.get("passed") is False]


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_results(path: Path, rows: list[ResultRow]) -> None:
    lines = ["param,estimate,stderr,replications,raw_file"]
    for r in rows:
        lines.append(f"{r.param},{_fmt(r.estimate)},{_fmt(r.stderr)},{r.replications},{r.raw_file}")
    path.write_text("\n".join(lines) + "\n")


def _write_raw(path: Path, records: list[tuple[str, int, float]]) -> None:
    lines = ["param,replication,value"]
    for param, rep, value in records:
        lines.append(f"{param},{rep},{_fmt(value)}")
    path.write_text("\n".join(lines) + "\n")


def _write_timings(path: Path, records: list[tuple[str, float]]) -> None:
    lines = ["param,seconds"]
    for param, seconds in records:
        lines.append(f"{param},{seconds:.3f}")
    path.write_text("\n".join(lines) + "\n")


def _write_summary(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _parallel(fn, tasks, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _check(value, requirement: str, passed: bool) -> dict:
    return {"value": value, "requirement": requirement, "passed": bool(passed)}


def _initial_mean(cfg: ExperimentConfig) -> np.ndarray:
    p = cfg.initial_params
    if cfg.initial_law == "point_mass":
        raw = p.get("x0", 0.0)
    elif cfg.initial_law == "gaussian":
        raw = p.get("mean", 0.0)
    else:  # uniform_box
        raw = 0.5 * (p.get("lo", 0.0) + p.get("hi", 1.0))
    arr = np.asarray(raw, dtype=float)
    return np.full(cfg.dim, float(arr)) if arr.ndim == 0 else arr


def _resolve_law(
    cfg: ExperimentConfig, kernel: KernelPair, grid: TimeGrid, out: Path, threads: int
) -> tuple[LawFlow, dict]:
    if cfg.law_source == "analytic":
        law = analytic_linear_flow(
            kernel.params.get("a", 0.0),
            kernel.params.get("c", 0.0),
            _initial_mean(cfg),
            grid,
            dim=cfg.dim,
        )
        return law, {"source": "analytic"}
    law, report = cached_picard_solve(
        kernel,
        cfg.initial_law,
        cfg.initial_params,
        grid,
        m_law=cfg.m_law,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        seed=derive_seed(cfg.seed, _TAG_LAW),
        threads=threads,
        cache_dir=out / "law_cache",
    )
    info = {"source": "picard", "M_law": cfg.m_law, "cached": report is None}
    if report is not None:
        info["iterations"] = report.iterations
        info["terminal_gap"] = report.gap_history[-1] if report.gap_history else 0.0
    return law, info


def _base_summary(cfg: ExperimentConfig) -> dict:
    return {"experiment": cfg.experiment, "version": __version__, "config": cfg.to_dict()}


# ---------------------------------------------------------------------------
# chaos
# ---------------------------------------------------------------------------


def run_chaos(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Mean-square sup coupling error between the interacting system and the
    limit particles, as a function of N; fits the decay rate."""
    kernel = cfg.make_kernel()
    grid = cfg.fine_grid()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    law, law_info = _resolve_law(cfg, kernel, grid, out, threads)

    reps = cfg.replications
    tasks = [(n, rep) for n in cfg.n_list for rep in range(reps)]

    def task(args):
        n, rep = args
        t0 = time.perf_counter()
        init = sample_initial(derive_seed(cfg.seed, _TAG_INIT, rep), cfg.initial_law, cfg.initial_params, n, cfg.dim)
        bundle = generate_bundle(derive_seed(cfg.seed, _TAG_BUNDLE, rep), n, cfg.dim, grid)
        report = coupled_chaos_error(kernel, init, bundle, grid, law)
        return report.mean_sup_sq, time.perf_counter() - t0

    results = _parallel(task, tasks, threads)
    values = {n: [results[i * reps + r][0] for r in range(reps)] for i, n in enumerate(cfg.n_list)}
    seconds = {n: sum(results[i * reps + r][1] for r in range(reps)) for i, n in enumerate(cfg.n_list)}

    rows, nerr_rows, raw = [], [], []
    means = []
    for n in cfg.n_list:
        mean, se = mean_and_stderr(values[n])
        means.append(mean)
        rows.append(ResultRow(str(n), mean, se, reps, "raw.csv"))
        nerr_rows.append(ResultRow(str(n), n * mean, n * se, reps, "raw.csv"))
        raw.extend((str(n), r, values[n][r]) for r in range(reps))

    degenerate = all(m == 0.0 for m in means)
    summary = _base_summary(cfg)
    summary["law"] = law_info
    summary["mean_sup_sq"] = dict(zip(map(str, cfg.n_list), means))
    summary["degenerate"] = degenerate
    checks: dict[str, dict] = {}
    fit = None
    if degenerate:
        summary["slope"] = None
        summary["n_error_ratio"] = None
    elif len(cfg.n_list) >= 3 and all(m > 0 for m in means):
        fit = fit_rate(cfg.n_list, means)
        nerr = [n * m for n, m in zip(cfg.n_list, means)]
        ratio = max(nerr) / min(nerr)
        summary["slope"] = fit.slope
        summary["r_squared"] = fit.r_squared
        summary["n_error"] = dict(zip(map(str, cfg.n_list), nerr))
        summary["n_error_ratio"] = ratio
        lo, hi = CHAOS_SLOPE_BAND
        checks["chaos_slope"] = _check(fit.slope, f"slope in [{lo}, {hi}]", lo <= fit.slope <= hi)
        checks["n_error_ratio"] = _check(
            ratio, f"max/min of N*error <= {CHAOS_NERROR_FACTOR}", ratio <= CHAOS_NERROR_FACTOR
        )
    else:
        summary["slope"] = None  # single-point or mixed-sign runs carry no rate
        summary["n_error_ratio"] = None
    summary["checks"] = checks

    _write_results(out / "results.csv", rows)
    _write_results(out / "results_nerror.csv", nerr_rows)
    _write_raw(out / "raw.csv", raw)
    _write_timings(out / "timings.csv", [(str(n), seconds[n]) for n in cfg.n_list])
    _write_summary(out / "summary.json", summary)
    files = ["results.csv", "results_nerror.csv", "raw.csv", "timings.csv", "summary.json"]
    if make_plots and not degenerate:
        from .plots import save_rate_plot

        save_rate_plot(
            out / "chaos.png",
            cfg.n_list,
            means,
            [r.stderr for r in rows],
            fit=fit,
            ref_slope=-1.0,
            title=f"coupling error vs N ({kernel.name})",
            xlabel="N",
            ylabel="mean sup-square error",
        )
        files.append("chaos.png")
    return ExperimentOutcome("chaos", out, summary, checks, files)


# ---------------------------------------------------------------------------
# euler-rate
# ---------------------------------------------------------------------------


def run_euler_rate(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Squared coarse-vs-fine strong error on shared Brownian paths per h."""
    kernel = cfg.make_kernel()
    fine = cfg.fine_grid()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    hs = sorted(cfg.h_list, reverse=True)
    coarse_grids = [TimeGrid.from_step(cfg.horizon, h) for h in hs]
    n = cfg.n_particles
    reps = cfg.replications

    def task(rep: int):
        t0 = time.perf_counter()
        init = sample_initial(derive_seed(cfg.seed, _TAG_INIT, rep), cfg.initial_law, cfg.initial_params, n, cfg.dim)
        bundle = generate_bundle(derive_seed(cfg.seed, _TAG_BUNDLE, rep), n, cfg.dim, fine)
        ref = euler_interacting(kernel, init, bundle, fine, store_path=True)
        errs = []
        for grid_h in coarse_grids:
            traj = euler_interacting(kernel, init, restrict(bundle, grid_h), grid_h, store_path=True)
            ratio = fine.n_steps // grid_h.n_steps
            diff = traj.states - ref.states[::ratio]
            sup_sq = np.max(np.sum(diff**2, axis=2), axis=0)
            errs.append(float(sup_sq.mean()))
        return errs, time.perf_counter() - t0

    results = _parallel(task, list(range(reps)), threads)
    rows, raw = [], []
    means = []
    for j, h in enumerate(hs):
        vals = [results[r][0][j] for r in range(reps)]
        mean, se = mean_and_stderr(vals)
        means.append(mean)
        rows.append(ResultRow(_fmt(h), mean, se, reps, "raw.csv"))
        raw.extend((_fmt(h), r, vals[r]) for r in range(reps))

    # h equal to the fine step reproduces the reference exactly; keep the row
    # for sanity but exclude it (and any exact zero) from the rate fit.
    fit_points = [(h, m) for h, m in zip(hs, means) if m > 0 and not math.isclose(h, cfg.h_fine)]
    summary = _base_summary(cfg)
    summary["mean_sup_sq"] = dict(zip(map(_fmt, hs), means))
    checks: dict[str, dict] = {}
    fit = None
    if len(fit_points) >= 3:
        fh = [p[0] for p in fit_points]
        fe = [p[1] for p in fit_points]
        fit = fit_rate(fh, fe)
        envelope_ok = alpha_envelope_check(fh, fe, EULER_ENVELOPE_ALPHA)
        summary["slope"] = fit.slope
        summary["r_squared"] = fit.r_squared
        summary["envelope_alpha"] = EULER_ENVELOPE_ALPHA
        checks["envelope"] = _check(
            fit.slope,
            f"log-log slope of squared error >= 2*{EULER_ENVELOPE_ALPHA} - tol",
            envelope_ok,
        )
        if kernel.name == "linear":
            lo, hi = EULER_LINEAR_SLOPE_BAND
            checks["linear_slope_band"] = _check(fit.slope, f"slope in [{lo}, {hi}]", lo <= fit.slope <= hi)
    else:
        summary["slope"] = None
    summary["checks"] = checks

    _write_results(out / "results.csv", rows)
    _write_raw(out / "raw.csv", raw)
    total = sum(results[r][1] for r in range(reps))
    _write_timings(out / "timings.csv", [("all_h", total)])
    _write_summary(out / "summary.json", summary)
    files = ["results.csv", "raw.csv", "timings.csv", "summary.json"]
    if make_plots and all(m > 0 for m in means):
        from .plots import save_rate_plot

        save_rate_plot(
            out / "euler_rate.png",
            hs,
            means,
            [r.stderr for r in rows],
            fit=fit,
            ref_slope=2 * EULER_ENVELOPE_ALPHA,
            title=f"coarse-vs-fine squared error vs h ({kernel.name})",
            xlabel="h",
            ylabel="mean sup-square error",
        )
        files.append("euler_rate.png")
    return ExperimentOutcome("euler-rate", out, summary, checks, files)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def run_moments(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Second-moment sup statistics vs N at the fine and a coarse step; the
    estimates must be flat in N."""
    kernel = cfg.make_kernel()
    fine = cfg.fine_grid()
    coarse = TimeGrid.from_step(cfg.horizon, cfg.h_coarse)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    reps = cfg.replications
    tasks = [(n, rep) for n in cfg.n_list for rep in range(reps)]

    def task(args):
        n, rep = args
        t0 = time.perf_counter()
        init = sample_initial(derive_seed(cfg.seed, _TAG_INIT, rep), cfg.initial_law, cfg.initial_params, n, cfg.dim)
        bundle = generate_bundle(derive_seed(cfg.seed, _TAG_BUNDLE, rep), n, cfg.dim, fine)
        fine_traj = euler_interacting(kernel, init, bundle, fine, store_path=False)
        coarse_traj = euler_interacting(kernel, init, restrict(bundle, coarse), coarse, store_path=False)
        return float(fine_traj.sup_sq.mean()), float(coarse_traj.sup_sq.mean()), time.perf_counter() - t0

    results = _parallel(task, tasks, threads)
    summary = _base_summary(cfg)
    checks: dict[str, dict] = {}
    all_rows: dict[str, list[ResultRow]] = {}
    series = []
    for label, idx in (("interacting", 0), ("euler", 1)):
        rows, raw, means = [], [], []
        for i, n in enumerate(cfg.n_list):
            vals = [results[i * reps + r][idx] for r in range(reps)]
            mean, se = mean_and_stderr(vals)
            means.append(mean)
            rows.append(ResultRow(str(n), mean, se, reps, f"raw_{label}.csv"))
            raw.extend((str(n), r, vals[r]) for r in range(reps))
        _write_results(out / f"results_{label}.csv", rows)
        _write_raw(out / f"raw_{label}.csv", raw)
        all_rows[label] = rows
        series.append((np.array(cfg.n_list, float), np.array(means), np.array([r.stderr for r in rows]), label))
        if len(cfg.n_list) >= 3:
            fit = fit_rate(cfg.n_list, means)
            summary[f"slope_{label}"] = fit.slope
            checks[f"moment_slope_{label}"] = _check(
                fit.slope,
                f"|slope| <= {MOMENT_SLOPE_TOLERANCE}",
                abs(fit.slope) <= MOMENT_SLOPE_TOLERANCE,
            )
        summary[f"ratio_{label}"] = max(means) / min(means)
        summary[f"mean_sup_sq_{label}"] = dict(zip(map(str, cfg.n_list), means))
    summary["checks"] = checks

    timings = [(str(n), sum(results[i * reps + r][2] for r in range(reps))) for i, n in enumerate(cfg.n_list)]
    _write_timings(out / "timings.csv", timings)
    _write_summary(out / "summary.json", summary)
    files = [
        "results_interacting.csv", "results_euler.csv",
        "raw_interacting.csv", "raw_euler.csv", "timings.csv", "summary.json",
    ]
    if make_plots:
        from .plots import save_series_plot

        save_series_plot(
            out / "moments.png",
            series,
            title=f"sup second moment vs N ({kernel.name})",
            xlabel="N",
            ylabel="mean sup |X|^2",
            logy=False,
        )
        files.append("moments.png")
    return ExperimentOutcome("moments", out, summary, checks, files)


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------


def run_increments(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Mean-square displacement E|X_t - X_0|^2 as a function of the lag."""
    kernel = cfg.make_kernel()
    grid = cfg.fine_grid()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    lags = sorted(cfg.lags)
    lag_idx = [grid.index_of(lag) for lag in lags]
    n = cfg.n_particles
    reps = cfg.replications

    def task(rep: int):
        t0 = time.perf_counter()
        init = sample_initial(derive_seed(cfg.seed, _TAG_INIT, rep), cfg.initial_law, cfg.initial_params, n, cfg.dim)
        bundle = generate_bundle(derive_seed(cfg.seed, _TAG_BUNDLE, rep), n, cfg.dim, grid)
        traj = euler_interacting(kernel, init, bundle, grid, store_path=True)
        vals = [float(np.mean(np.sum((traj.states[k] - traj.states[0]) ** 2, axis=1))) for k in lag_idx]
        return vals, time.perf_counter() - t0

    results = _parallel(task, list(range(reps)), threads)
    rows, raw, means = [], [], []
    for j, lag in enumerate(lags):
        vals = [results[r][0][j] for r in range(reps)]
        mean, se = mean_and_stderr(vals)
        means.append(mean)
        rows.append(ResultRow(_fmt(lag), mean, se, reps, "raw.csv"))
        raw.extend((_fmt(lag), r, vals[r]) for r in range(reps))

    summary = _base_summary(cfg)
    summary["constant_diffusion"] = kernel.constant_diffusion is not None
    summary["mean_sq_increment"] = dict(zip(map(_fmt, lags), means))
    checks: dict[str, dict] = {}
    fit = None
    if len(lags) >= 3 and all(m > 0 for m in means):
        fit = fit_rate(lags, means)
        summary["slope"] = fit.slope
        summary["r_squared"] = fit.r_squared
        lo, hi = INCREMENT_SLOPE_BAND
        checks["increment_slope"] = _check(fit.slope, f"slope in [{lo}, {hi}]", lo <= fit.slope <= hi)
    summary["checks"] = checks

    _write_results(out / "results.csv", rows)
    _write_raw(out / "raw.csv", raw)
    _write_timings(out / "timings.csv", [("all_lags", sum(r[1] for r in results))])
    _write_summary(out / "summary.json", summary)
    files = ["results.csv", "raw.csv", "timings.csv", "summary.json"]
    if make_plots and all(m > 0 for m in means):
        from .plots import save_rate_plot

        save_rate_plot(
            out / "increments.png",
            lags,
            means,
            [r.stderr for r in rows],
            fit=fit,
            ref_slope=1.0,
            title=f"mean-square increment vs lag ({kernel.name})",
            xlabel="lag t - s",
            ylabel="E |X_t - X_s|^2",
        )
        files.append("increments.png")
    return ExperimentOutcome("increments", out, summary, checks, files)


# ---------------------------------------------------------------------------
# centered-stats
# ---------------------------------------------------------------------------


def run_centered_stats(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Orthogonality and variance of the centered kernels on i.i.d. limit particles."""
    kernel = cfg.make_kernel()
    grid = cfg.fine_grid()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    law, law_info = _resolve_law(cfg, kernel, grid, out, threads)
    reps = cfg.replications
    tasks = [(n, rep) for n in cfg.n_list for rep in range(reps)]

    def task(args):
        n, rep = args
        t0 = time.perf_counter()
        init = sample_initial(derive_seed(cfg.seed, _TAG_INIT, rep), cfg.initial_law, cfg.initial_params, n, cfg.dim)
        bundle = generate_bundle(derive_seed(cfg.seed, _TAG_BUNDLE, rep), n, cfg.dim, grid)
        traj = euler_limit_particles(kernel, init, bundle, grid, law, store_path=True)
        stats = centered_kernel_stats(kernel, traj, law)
        return (
            (stats.avg_sq_drift, stats.avg_sq_diffusion, stats.cross_corr_drift, stats.cross_corr_diffusion),
            time.perf_counter() - t0,
        )

    results = _parallel(task, tasks, threads)
    metric_files = {
        "avg_sq_drift": "results.csv",
        "avg_sq_diffusion": "results_diffusion.csv",
        "corr_drift": "results_corr_drift.csv",
        "corr_diffusion": "results_corr_diffusion.csv",
    }
    summary = _base_summary(cfg)
    summary["law"] = law_info
    checks: dict[str, dict] = {}
    corr_band = 4.0 / math.sqrt(reps)
    stats_by_metric: dict[str, dict[int, tuple[float, float]]] = {}
    for m_idx, (metric, fname) in enumerate(metric_files.items()):
        rows, raw = [], []
        per_n: dict[int, tuple[float, float]] = {}
        for i, n in enumerate(cfg.n_list):
            vals = [results[i * reps + r][0][m_idx] for r in range(reps)]
            mean, se = mean_and_stderr(vals)
            per_n[n] = (mean, se)
            rows.append(ResultRow(str(n), mean, se, reps, f"raw_{metric}.csv"))
            raw.extend((str(n), r, vals[r]) for r in range(reps))
        _write_results(out / fname, rows)
        _write_raw(out / f"raw_{metric}.csv", raw)
        stats_by_metric[metric] = per_n
        summary[metric] = {str(n): per_n[n][0] for n in cfg.n_list}

    worst_corr = max(abs(stats_by_metric["corr_drift"][n][0]) for n in cfg.n_list)
    checks["cross_corr_drift"] = _check(
        worst_corr, f"|corr| <= 4/sqrt(R) = {_fmt(corr_band)}", worst_corr <= corr_band
    )

    if kernel.name == "linear" and cfg.law_source == "analytic" and cfg.initial_law == "gaussian":
        a = kernel.params["a"]
        c = kernel.params["c"]
        s = kernel.params["s"]
        v0 = float(cfg.initial_params.get("cov", 1.0))
        t_end = cfg.horizon
        var_t = v0 * math.exp(2 * a * t_end) + s * s * (math.exp(2 * a * t_end) - 1.0) / (2 * a)
        worst_z = 0.0
        refs = {}
        for n in cfg.n_list:
            ref = c * c * var_t / n
            mean, se = stats_by_metric["avg_sq_drift"][n]
            refs[str(n)] = ref
            if se > 0:
                worst_z = max(worst_z, abs(mean - ref) / se)
        summary["analytic_reference_avg_sq_drift"] = refs
        checks["avg_sq_drift_vs_analytic"] = _check(worst_z, "|z| <= 3 at every N", worst_z <= 3.0)
    summary["checks"] = checks

    timings = [(str(n), sum(results[i * reps + r][1] for r in range(reps))) for i, n in enumerate(cfg.n_list)]
    _write_timings(out / "timings.csv", timings)
    _write_summary(out / "summary.json", summary)
    files = list(metric_files.values()) + [f"raw_{m}.csv" for m in metric_files] + ["timings.csv", "summary.json"]
    if make_plots:
        from .plots import save_series_plot

        xs = np.array(cfg.n_list, float)
        series = [
            (xs, np.array([stats_by_metric["avg_sq_drift"][n][0] for n in cfg.n_list]),
             np.array([stats_by_metric["avg_sq_drift"][n][1] for n in cfg.n_list]), "E|avg centered drift|^2"),
        ]
        save_series_plot(
            out / "centered_stats.png",
            series,
            title=f"centered-kernel variance vs N ({kernel.name})",
            xlabel="N",
            ylabel="estimate",
            logy=all(v[1][0] > 0 for v in series),
        )
        files.append("centered_stats.png")
    return ExperimentOutcome("centered-stats", out, summary, checks, files)


# ---------------------------------------------------------------------------
# picard
# ---------------------------------------------------------------------------


def run_picard(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Distribution iteration for the configured kernel; reports the gap decay."""
    kernel = cfg.make_kernel()
    grid = cfg.fine_grid()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    failure: PicardNonConvergence | None = None
    try:
        flow, report = picard_solve(
            kernel,
            cfg.initial_law,
            cfg.initial_params,
            grid,
            m_law=cfg.m_law,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            seed=derive_seed(cfg.seed, _TAG_LAW),
            threads=threads,
        )
    except PicardNonConvergence as exc:
        failure = exc
        flow, report = None, exc.report
    elapsed = time.perf_counter() - t0

    gaps = list(report.gap_history)
    rows = [ResultRow(str(k + 2), g, 0.0, 1, "raw.csv") for k, g in enumerate(gaps)]
    raw = [(str(k + 2), 0, g) for k, g in enumerate(gaps)]
    # The first comparison reflects the transient away from the constant
    # starting flow; the contraction regime begins with the second one.
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(gaps[1:], gaps[2:]))

    summary = _base_summary(cfg)
    summary["iterations"] = report.iterations
    summary["converged"] = report.converged
    summary["contraction_ratio"] = report.contraction_ratio
    summary["gap_history"] = gaps
    if flow is not None:
        summary["final_second_moment"] = float(np.mean(np.sum(flow.points[-1] ** 2, axis=1)))
    checks = {
        "converged": _check(report.iterations, f"gap <= {cfg.tol} within {cfg.max_iter} iterations", report.converged),
        "gap_monotone": _check(gaps, "gap history nonincreasing from the second comparison", monotone),
    }
    summary["checks"] = checks

    _write_results(out / "results.csv", rows)
    _write_raw(out / "raw.csv", raw)
    _write_timings(out / "timings.csv", [("solve", elapsed)])
    _write_summary(out / "summary.json", summary)
    files = ["results.csv", "raw.csv", "timings.csv", "summary.json"]
    if flow is not None:
        save_law_flow(flow, out / "law_flow")
        files += ["law_flow.npy", "law_flow.csv"]
    if make_plots and gaps:
        from .plots import save_gap_plot

        save_gap_plot(out / "picard.png", gaps, cfg.tol, title=f"distribution-iteration gap ({kernel.name})")
        files.append("picard.png")
    if failure is not None:
        raise failure
    return ExperimentOutcome("picard", out, summary, checks, files)


# ---------------------------------------------------------------------------
# validate-kernel
# ---------------------------------------------------------------------------


def run_validate_kernel(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    """Sampling check of the declared growth/modulus constants."""
    kernel = cfg.make_kernel()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = validate_conditions(kernel, n_samples=cfg.n_samples, tolerance=cfg.tolerance, seed=cfg.seed)
    from .analysis import select_eta

    dom_drift = select_eta(kernel.drift_modulus)
    dom_diffusion = select_eta(kernel.diffusion_modulus)
    elapsed = time.perf_counter() - t0

    ratios = report.ratios()
    rows = [ResultRow(name, value, 0.0, 1, "raw.csv") for name, value in ratios.items()]
    raw = [(name, 0, value) for name, value in ratios.items()]
    summary = _base_summary(cfg)
    summary["ratios"] = ratios
    summary["passed"] = report.passed
    summary["eta_drift"] = dom_drift.eta
    summary["eta_diffusion"] = dom_diffusion.eta
    checks = {
        "conditions": _check(ratios, f"all ratios <= 1 + {cfg.tolerance}", report.passed),
        "modulus_domination": _check(
            {"drift": dom_drift.ok, "diffusion": dom_diffusion.ok},
            "an eta in (0, 1/e) dominates both moduli",
            dom_drift.ok and dom_diffusion.ok,
        ),
    }
    summary["checks"] = checks

    _write_results(out / "results.csv", rows)
    _write_raw(out / "raw.csv", raw)
    _write_timings(out / "timings.csv", [("validate", elapsed)])
    _write_summary(out / "summary.json", summary)
    files = ["results.csv", "raw.csv", "timings.csv", "summary.json"]
    if make_plots:
        from .plots import save_bar_plot

        save_bar_plot(
            out / "validate_kernel.png",
            list(ratios),
            list(ratios.values()),
            title=f"condition ratios ({kernel.name})",
        )
        files.append("validate_kernel.png")
    return ExperimentOutcome("validate-kernel", out, summary, checks, files)


_RUNNERS = {
    "chaos": run_chaos,
    "euler-rate": run_euler_rate,
    "picard": run_picard,
    "moments": run_moments,
    "increments": run_increments,
    "centered-stats": run_centered_stats,
    "validate-kernel": run_validate_kernel,
}


def run_experiment(cfg: ExperimentConfig, *, threads: int = 1, make_plots: bool = True) -> ExperimentOutcome:
    try:
        runner = _RUNNERS[cfg.experiment]
    except KeyError:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}") from None
    return runner(cfg, threads=threads, make_plots=make_plots)
