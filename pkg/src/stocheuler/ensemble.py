"""Monte Carlo orchestration of trajectory batches and survival statistics.

Every path is keyed by (master_seed, trajectory_id) alone, so the summary is
a deterministic fold over sorted trajectory ids and is byte-identical no
matter how the work was scheduled across workers.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import GBMParams, gbm_survival_bound, kappa_K, wilson_interval
from .dynamics import (SOBOLEV_THRESHOLD, StoppingRule, TrajectoryConfig,
                       integrate_trajectory)
from .errors import VersionError
from .noise import BrownianDriver
from .spectral import NormRequest, sobolev_norm

SUMMARY_SCHEMA_VERSION = 1
HIT_HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class GBMSurrogateSpec:
    """Bypass the PDE: monitor rho_alpha(t) = exp(alpha W_t - alpha^2 t/8)."""

    alpha: float
    R: float
    T: float
    dt: float


@dataclass
class EnsembleConfig:
    trajectory: TrajectoryConfig | None
    n_paths: int
    master_seed: int
    parallel_width: int = 1
    output_dir: str | None = None
    bound_comparison: GBMParams | None = None
    surrogate: GBMSurrogateSpec | None = None

    def __post_init__(self):
        if self.n_paths < 1 or self.parallel_width < 1:
            raise ValueError("n_paths and parallel_width must be >= 1")
        if self.trajectory is None and self.surrogate is None:
            raise ValueError("need a trajectory config or a surrogate spec")


@dataclass
class PathRecord:
    trajectory_id: int
    survived: bool
    blow_up: bool
    hits: dict[str, float]
    final_time: float
    final_l2: float
    final_wmp: float
    engineering_failure: bool = False


@dataclass
class EnsembleSummary:
    n_paths: int
    n_survived: int
    survival_fraction: float
    wilson_99: tuple[float, float]
    hit_histograms: dict[str, list[int]]
    hit_counts: dict[str, int]
    horizon: float
    analytic_bound: float | None
    mean_final_l2: float
    max_final_l2: float
    mean_final_wmp: float
    max_final_wmp: float
    n_blow_up: int
    n_engineering_failures: int
    partial: bool
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "n_paths": self.n_paths,
            "n_survived": self.n_survived,
            "survival_fraction": self.survival_fraction,
            "wilson_99": list(self.wilson_99),
            "hit_histograms": self.hit_histograms,
            "hit_counts": self.hit_counts,
            "horizon": self.horizon,
            "analytic_bound": self.analytic_bound,
            "mean_final_l2": self.mean_final_l2,
            "max_final_l2": self.max_final_l2,
            "mean_final_wmp": self.mean_final_wmp,
            "max_final_wmp": self.max_final_wmp,
            "n_blow_up": self.n_blow_up,
            "n_engineering_failures": self.n_engineering_failures,
            "partial": self.partial,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSummary":
        version = d.get("schema_version")
        if version != SUMMARY_SCHEMA_VERSION:
            raise VersionError(
                f"summary schema version {version}, expected "
                f"{SUMMARY_SCHEMA_VERSION}")
        return cls(
            n_paths=d["n_paths"], n_survived=d["n_survived"],
            survival_fraction=d["survival_fraction"],
            wilson_99=tuple(d["wilson_99"]),
            hit_histograms=d["hit_histograms"], hit_counts=d["hit_counts"],
            horizon=d["horizon"], analytic_bound=d["analytic_bound"],
            mean_final_l2=d["mean_final_l2"], max_final_l2=d["max_final_l2"],
            mean_final_wmp=d["mean_final_wmp"],
            max_final_wmp=d["max_final_wmp"], n_blow_up=d["n_blow_up"],
            n_engineering_failures=d["n_engineering_failures"],
            partial=d["partial"], master_seed=d["master_seed"])


# ---------------------------------------------------------------------------
# Per-path workers (top level so they pickle for the process pool)


def _run_surrogate_path(spec: GBMSurrogateSpec, master_seed: int,
                        tid: int) -> PathRecord:
    n_steps = int(round(spec.T / spec.dt))
    gen = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([master_seed, tid])))
    dW = np.sqrt(spec.dt) * gen.standard_normal(n_steps)
    # log rho_alpha on the grid: alpha W_t - alpha^2 t / 8
    t = np.arange(1, n_steps + 1) * spec.dt
    log_rho = spec.alpha * np.cumsum(dW) - spec.alpha ** 2 * t / 8.0
    barrier = np.log(spec.R)
    hit_idx = np.flatnonzero(log_rho >= barrier)
    hits = {}
    survived = True
    if hit_idx.size:
        hits["gbm_level"] = float(t[hit_idx[0]])
        survived = False
    return PathRecord(tid, survived, False, hits, spec.T, 0.0, 0.0)


def _run_trajectory_path(cfg: TrajectoryConfig, master_seed: int,
                         tid: int, output_dir: str | None) -> PathRecord:
    cfg = replace(cfg, driver=BrownianDriver(master_seed,
                                             cfg.driver.n_modes))
    try:
        diag = integrate_trajectory(cfg, trajectory_id=tid)
    except Exception:
        return PathRecord(tid, False, False, {}, 0.0, np.nan, np.nan,
                          engineering_failure=True)
    if output_dir is not None:
        paths_dir = os.path.join(output_dir, "paths")
        os.makedirs(paths_dir, exist_ok=True)
        diag.to_csv(os.path.join(paths_dir, f"{tid}.csv"))
    hits = {kind: t for kind, t in diag.hits}
    survived = not diag.blow_up_flag and not hits
    return PathRecord(tid, survived, diag.blow_up_flag, hits,
                      diag.final_time,
                      diag.l2[-1] if diag.l2 else 0.0,
                      diag.wmp[-1] if diag.wmp else 0.0)


def _run_one(args) -> PathRecord:
    cfg, tid = args
    if cfg.surrogate is not None:
        return _run_surrogate_path(cfg.surrogate, cfg.master_seed, tid)
    return _run_trajectory_path(cfg.trajectory, cfg.master_seed, tid,
                                cfg.output_dir)


def _worker_pool_width(cfg: EnsembleConfig) -> int:
    width = cfg.parallel_width
    cap = os.environ.get("STOCHEULER_THREADS")
    if cap:
        width = min(width, max(1, int(cap)))
    return width


def run_ensemble(cfg: EnsembleConfig) -> EnsembleSummary:
    """Run n_paths independent trajectories and fold the statistics.

    Per-path failures are recorded, never abort the batch; the summary is
    flagged partial when more than 1% of paths failed for non-scientific
    reasons.
    """
    jobs = [(cfg, tid) for tid in range(cfg.n_paths)]
    width = _worker_pool_width(cfg)
    if width == 1:
        records = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=width) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=4))
    records.sort(key=lambda r: r.trajectory_id)
    return _fold(cfg, records)


def _fold(cfg: EnsembleConfig, records: list[PathRecord]) -> EnsembleSummary:
    horizon = (cfg.surrogate.T if cfg.surrogate is not None
               else cfg.trajectory.T)
    ok = [r for r in records if not r.engineering_failure]
    n_eng = len(records) - len(ok)
    n_survived = sum(r.survived for r in ok)
    n_blow = sum(r.blow_up for r in ok)
    histograms: dict[str, list[int]] = {}
    counts: dict[str, int] = {}
    edges = np.linspace(0.0, horizon, HIT_HISTOGRAM_BINS + 1)
    for r in ok:
        for kind, t_hit in r.hits.items():
            if kind not in histograms:
                histograms[kind] = [0] * HIT_HISTOGRAM_BINS
                counts[kind] = 0
            b = min(HIT_HISTOGRAM_BINS - 1,
                    int(np.searchsorted(edges, t_hit, side="right")) - 1)
            histograms[kind][max(b, 0)] += 1
            counts[kind] += 1
    l2s = [r.final_l2 for r in ok] or [0.0]
    wmps = [r.final_wmp for r in ok] or [0.0]
    bound = (gbm_survival_bound(cfg.bound_comparison)
             if cfg.bound_comparison is not None else None)
    n_ok = max(1, len(ok))
    return EnsembleSummary(
        n_paths=len(records), n_survived=n_survived,
        survival_fraction=n_survived / n_ok,
        wilson_99=wilson_interval(n_survived, n_ok),
        hit_histograms=histograms, hit_counts=counts, horizon=horizon,
        analytic_bound=bound,
        mean_final_l2=float(np.mean(l2s)), max_final_l2=float(np.max(l2s)),
        mean_final_wmp=float(np.mean(wmps)),
        max_final_wmp=float(np.max(wmps)), n_blow_up=n_blow,
        n_engineering_failures=n_eng,
        partial=n_eng > 0.01 * len(records), master_seed=cfg.master_seed)


# ---------------------------------------------------------------------------
# Alpha sweep against the kappa(R, alpha) threshold


def survival_vs_alpha_sweep(base: EnsembleConfig, alpha_list: list[float],
                            R: float, data_scaling: str = "fixed",
                            Cbar: float = 1.0) -> list[dict]:
    """For each alpha run the linear-multiplicative ensemble and report the
    fraction of paths whose W^{m,p} norm exceeds alpha^2 / (4 Cbar).

    data_scaling 'kappa-scaled' rescales the initial data so its W^{m,p}
    norm is min(current norm, kappa(R, alpha)); alphas whose kappa
    underflows are emitted as flagged rows without running.
    """
    if not alpha_list:
        raise ValueError("alpha_list must be nonempty")
    if data_scaling not in ("fixed", "kappa-scaled"):
        raise ValueError(f"unknown data_scaling '{data_scaling}'")
    traj = base.trajectory
    if traj is None:
        raise ValueError("alpha sweep needs a trajectory config")
    req = NormRequest(traj.m, traj.p)
    rows = []
    for alpha in alpha_list:
        threshold = alpha ** 2 / (4.0 * Cbar)
        if alpha == 0.0:
            rows.append({"alpha": 0.0, "kappa": 0.0, "threshold": 0.0,
                         "exceed_fraction": 1.0, "interval": [1.0, 1.0],
                         "flagged": True,
                         "note": "undamped baseline: zero threshold"})
            continue
        kk = kappa_K(R, alpha, Cbar)
        if data_scaling == "kappa-scaled" and kk.kappa_underflow:
            rows.append({"alpha": alpha, "kappa": 0.0,
                         "threshold": threshold, "exceed_fraction": None,
                         "interval": None, "flagged": True,
                         "note": "kappa underflow: run skipped"})
            continue
        u0 = traj.u0
        if data_scaling == "kappa-scaled":
            norm0 = sobolev_norm(u0, req)
            target = min(norm0, kk.kappa)
            if norm0 > 0:
                u0 = (target / norm0) * u0
        model = replace(traj.model, alpha=alpha)
        rule = StoppingRule(SOBOLEV_THRESHOLD, threshold, req)
        t2 = replace(traj, u0=u0, model=model, alpha=alpha,
                     stopping=(rule,))
        cfg = replace(base, trajectory=t2)
        summary = run_ensemble(cfg)
        n_exceed = summary.hit_counts.get(SOBOLEV_THRESHOLD, 0)
        frac = n_exceed / summary.n_paths
        rows.append({"alpha": alpha, "kappa": kk.kappa,
                     "threshold": threshold, "exceed_fraction": frac,
                     "interval": list(wilson_interval(n_exceed,
                                                      summary.n_paths)),
                     "flagged": False, "note": ""})
    return rows


# ---------------------------------------------------------------------------
# Persistence


def persist_summary(summary: EnsembleSummary, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(summary.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_summary(path: str) -> EnsembleSummary:
    try:
        with open(path) as fh:
            return EnsembleSummary.from_dict(json.load(fh))
    except OSError as exc:
        raise OSError(f"cannot read summary at {path}: {exc}") from exc
