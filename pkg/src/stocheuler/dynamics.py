"""Time integration of the stochastic Euler system and its variants.

Steppers (all return new states; nothing is mutated):

* step_em              Euler-Maruyama on the velocity form
* step_rk4             RK4 drift with Euler-Maruyama noise coupling
* step_transformed     damped random PDE for v = gamma * u (exact
                       integrating-factor damping + RK4 transport)
* step_vorticity_2d    2D scalar vorticity transport (plain / damped /
                       additively forced)
* step_vorticity_3d    3D vorticity with vortex stretching, damped
* step_cutoff_galerkin velocity form with the smooth cut-off on drift
                       and noise
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CflViolation, NonFinite
from .noise import (LINEAR_MULTIPLICATIVE, BrownianDriver, NoiseModel,
                    apply_noise)
from .spectral import (Grid, NormRequest, ScalarField, SpectralField,
                       biot_savart, curl, cutoff_theta, dealias, l2_norm,
                       lp_norm, nonlinear_term, sobolev_norm, w1inf_norm)

W1INF_THRESHOLD = "w1inf_threshold"
SOBOLEV_THRESHOLD = "sobolev_threshold"
GBM_LEVEL = "gbm_level"


@dataclass(frozen=True)
class StoppingRule:
    """First-hitting rule on a monitored scalar."""

    kind: str
    level: float
    norm_spec: NormRequest | None = None

    def __post_init__(self):
        if self.kind not in (W1INF_THRESHOLD, SOBOLEV_THRESHOLD, GBM_LEVEL):
            raise ValueError(f"unknown stopping rule kind '{self.kind}'")
        if self.level <= 0:
            raise ValueError("stopping level must be positive")


@dataclass
class SimState:
    """One trajectory's integration state."""

    t: float
    u: SpectralField
    gamma: float = 1.0
    W_accum: float = 0.0
    step_index: int = 0


@dataclass
class TrajectoryDiagnostics:
    """Sampled norm series and stopping/blow-up bookkeeping for one path."""

    times: list[float] = field(default_factory=list)
    l2: list[float] = field(default_factory=list)
    wmp: list[float] = field(default_factory=list)
    w1inf: list[float] = field(default_factory=list)
    curl_inf: list[float] = field(default_factory=list)
    gamma: list[float] = field(default_factory=list)
    transform_residual: list[float] = field(default_factory=list)
    hits: list[tuple[str, float]] = field(default_factory=list)
    blow_up_flag: bool = False
    final_time: float = 0.0

    COLUMNS = ("t", "l2", "wmp", "w1inf", "curl_inf", "gamma",
               "transform_residual")

    def first_hit(self, kind: str) -> float | None:
        for k, t in self.hits:
            if k == kind:
                return t
        return None

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        writer = csv.writer(fh)
        writer.writerow(self.COLUMNS)
        for row in zip(self.times, self.l2, self.wmp, self.w1inf,
                       self.curl_inf, self.gamma, self.transform_residual):
            writer.writerow([repr(v) for v in row])

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


@dataclass
class TrajectoryConfig:
    """Everything needed to run one path (immutable per ensemble)."""

    grid: Grid
    u0: SpectralField
    model: NoiseModel
    driver: BrownianDriver
    T: float
    dt: float
    integrator: str = "em"  # em | rk4 | transformed | vorticity2d
    c_cfl: float = 0.5
    stopping: tuple[StoppingRule, ...] = ()
    sample_every: int = 1
    m: int = 3
    p: float = 2.0
    blowup_level: float = 1e6
    alpha: float = 0.0  # linear-multiplicative coefficient for transform runs
    enforce_cfl: bool = True


# ---------------------------------------------------------------------------
# CFL and sanity helpers


def cfl_limit(u: SpectralField, c_cfl: float = 0.5,
              alpha: float = 0.0) -> float:
    """Advective CFL bound; linear-multiplicative runs get the (0.1/alpha)^2 cap."""
    umax = lp_norm(u, np.inf)
    limit = np.inf if umax == 0 else c_cfl * u.grid.dx / umax
    if alpha != 0.0:
        limit = min(limit, (0.1 / abs(alpha)) ** 2)
    return float(limit)


def _check_finite(coeffs: np.ndarray) -> None:
    if not np.all(np.isfinite(coeffs.view(float))):
        raise NonFinite("non-finite Fourier coefficient")


def _require_cfl(u: SpectralField, dt: float, c_cfl: float,
                 alpha: float = 0.0) -> None:
    lim = cfl_limit(u, c_cfl, alpha)
    if dt > lim * (1.0 + 1e-12):
        raise CflViolation(f"dt={dt} exceeds CFL limit {lim}")


# ---------------------------------------------------------------------------
# Steppers


def step_em(state: SimState, dt: float, model: NoiseModel,
            driver: BrownianDriver, trajectory_id: int,
            c_cfl: float = 0.5, enforce_cfl: bool = True) -> SimState:
    """u+ = u - dt P(u.grad u) + P(sigma(u) dW), dealiased and re-projected."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = state.u
    alpha = model.alpha if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    if enforce_cfl:
        _require_cfl(u, dt, c_cfl, alpha)
    dW = driver.sample_increments(trajectory_id, state.step_index, dt)
    drift = nonlinear_term(u)
    incr = apply_noise(model, u, dW) if model.n_modes else None
    new_coeffs = u.coeffs - dt * drift.coeffs
    if incr is not None:
        new_coeffs = new_coeffs + incr.coeffs
    new_coeffs = new_coeffs * u.grid.dealias_mask[None, ...]
    from .spectral import leray_project
    u_new = leray_project(SpectralField(u.grid, new_coeffs))
    _check_finite(u_new.coeffs)
    dW_scalar = float(dW[0]) if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    W_new = state.W_accum + dW_scalar
    return SimState(state.t + dt, u_new,
                    gamma=float(np.exp(-alpha * W_new)) if alpha else 1.0,
                    W_accum=W_new, step_index=state.step_index + 1)


def _rk4(v: SpectralField, dt: float, rhs) -> SpectralField:
    """Classic RK4 with a time-dependent rhs(tau, v) over tau in [0, dt]."""
    k1 = rhs(0.0, v)
    k2 = rhs(0.5 * dt, v + 0.5 * dt * k1)
    k3 = rhs(0.5 * dt, v + 0.5 * dt * k2)
    k4 = rhs(dt, v + dt * k3)
    return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_rk4(state: SimState, dt: float, model: NoiseModel,
             driver: BrownianDriver, trajectory_id: int,
             c_cfl: float = 0.5, enforce_cfl: bool = True) -> SimState:
    """RK4 on the conservative drift, Euler-Maruyama coupling for the noise."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = state.u
    alpha = model.alpha if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    if enforce_cfl:
        _require_cfl(u, dt, c_cfl, alpha)

    def rhs(_tau, v):
        return -1.0 * nonlinear_term(v)

    u_new = _rk4(u, dt, rhs)
    dW = driver.sample_increments(trajectory_id, state.step_index, dt)
    if model.n_modes:
        u_new = u_new + apply_noise(model, u, dW)
    from .spectral import leray_project
    u_new = leray_project(dealias(u_new))
    _check_finite(u_new.coeffs)
    dW_scalar = float(dW[0]) if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    W_new = state.W_accum + dW_scalar
    return SimState(state.t + dt, u_new,
                    gamma=float(np.exp(-alpha * W_new)) if alpha else 1.0,
                    W_accum=W_new, step_index=state.step_index + 1)


def step_transformed(v: SpectralField, dt: float, alpha: float,
                     gamma_at_step: float) -> SpectralField:
    """One step of  dv/dt + (alpha^2/2) v + gamma^{-1} P(v.grad v) = 0.

    The damping is integrated exactly via the substitution
    w(tau) = exp(alpha^2 tau / 2) v(tau), which (using homogeneity of the
    quadratic term) obeys  w' = -exp(-alpha^2 tau / 2) gamma^{-1} P(w.grad w);
    that system is advanced with RK4 and the factor undone at tau = dt.
    """
    if gamma_at_step <= 0:
        raise ValueError("gamma must be positive")
    half = 0.5 * alpha ** 2

    def rhs(tau, w):
        return (-np.exp(-half * tau) / gamma_at_step) * nonlinear_term(w)

    w_end = _rk4(v, dt, rhs)
    v_new = float(np.exp(-half * dt)) * w_end
    _check_finite(v_new.coeffs)
    return SpectralField(v_new.grid, v_new.coeffs, divergence_free=True)


def _transport_rhs_2d(w: ScalarField) -> ScalarField:
    """-dealias(u . grad w) with u = Biot-Savart(w)."""
    g = w.grid
    u = biot_savart(ScalarField(g, w.coeffs * g.dealias_mask))
    u_phys = u.to_physical()
    wd = w.coeffs * g.dealias_mask
    grad_w = np.stack([np.fft.ifftn(1j * g.k[j] * wd).real
                       for j in range(g.dim)])
    adv = np.sum(u_phys * grad_w, axis=0)
    return ScalarField(g, -np.fft.fftn(adv) * g.dealias_mask)


def step_vorticity_2d(w: ScalarField, dt: float, alpha: float = 0.0,
                      gamma: float = 1.0,
                      rho_fields: list[ScalarField] | None = None,
                      dW: np.ndarray | None = None) -> ScalarField:
    """Advance the 2D scalar vorticity by transport.

    alpha != 0 adds the exact exp(-alpha^2 dt/2) damping of the transformed
    system (transport scaled by gamma^{-1}); rho_fields/dW add the additive
    forcing sum_k rho_k dW_k after the deterministic substep.
    """
    half = 0.5 * alpha ** 2

    def rhs(tau, z):
        return (np.exp(-half * tau) / gamma) * _transport_rhs_2d(z)

    z_end = _rk4_scalar(w, dt, rhs)
    w_new = ScalarField(w.grid, np.exp(-half * dt) * z_end.coeffs)
    if rho_fields:
        if dW is None or len(dW) != len(rho_fields):
            raise ValueError("dW must match rho_fields")
        for inc, rho in zip(dW, rho_fields):
            w_new = ScalarField(w.grid, w_new.coeffs + inc * rho.coeffs)
    _check_finite(w_new.coeffs)
    return w_new


def _rk4_scalar(w: ScalarField, dt: float, rhs) -> ScalarField:
    k1 = rhs(0.0, w)
    k2 = rhs(0.5 * dt, w + 0.5 * dt * k1)
    k3 = rhs(0.5 * dt, w + 0.5 * dt * k2)
    k4 = rhs(dt, w + dt * k3)
    return w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_vorticity_3d(w: SpectralField, dt: float, alpha: float = 0.0,
                      gamma: float = 1.0) -> SpectralField:
    """3D vorticity step with transport and vortex stretching, damped.

    dw/dt + (alpha^2/2) w + gamma^{-1}(v.grad w - w.grad v) = 0 with
    v = Biot-Savart(w); damping handled exactly as in the 2D case.
    """
    from .spectral import leray_project
    half = 0.5 * alpha ** 2
    g = w.grid

    def stretch_rhs(z: SpectralField) -> SpectralField:
        zd = dealias(z)
        v = biot_savart(zd)
        v_phys = v.to_physical()
        z_phys = zd.to_physical()
        out = np.empty_like(v_phys)
        for i in range(3):
            grad_zi = np.stack([np.fft.ifftn(1j * g.k[j] * zd.coeffs[i]).real
                                for j in range(3)])
            grad_vi = np.stack([np.fft.ifftn(1j * g.k[j] * v.coeffs[i]).real
                                for j in range(3)])
            out[i] = -(np.sum(v_phys * grad_zi, axis=0)
                       - np.sum(z_phys * grad_vi, axis=0))
        hat = np.stack([np.fft.fftn(out[i]) for i in range(3)])
        hat *= g.dealias_mask[None, ...]
        return leray_project(SpectralField(g, hat))

    def rhs(tau, z):
        return (np.exp(-half * tau) / gamma) * stretch_rhs(z)

    z_end = _rk4(w, dt, rhs)
    w_new = np.exp(-half * dt) * z_end
    w_new = leray_project(dealias(w_new))
    _check_finite(w_new.coeffs)
    return w_new


def step_cutoff_galerkin(state: SimState, dt: float, R: float,
                         model: NoiseModel, driver: BrownianDriver,
                         trajectory_id: int) -> SimState:
    """Velocity step with theta_R(||u||_{W^{1,inf}}) on drift and noise."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = state.u
    theta = cutoff_theta(w1inf_norm(u), R)
    dW = driver.sample_increments(trajectory_id, state.step_index, dt)
    new_coeffs = u.coeffs.copy()
    if theta > 0.0:
        drift = nonlinear_term(u)
        new_coeffs = new_coeffs - (dt * theta) * drift.coeffs
        if model.n_modes:
            incr = apply_noise(model, u, dW)
            new_coeffs = new_coeffs + theta * incr.coeffs
    new_coeffs = new_coeffs * u.grid.dealias_mask[None, ...]
    from .spectral import leray_project
    u_new = leray_project(SpectralField(u.grid, new_coeffs))
    _check_finite(u_new.coeffs)
    alpha = model.alpha if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    dW_scalar = float(dW[0]) if model.kind == LINEAR_MULTIPLICATIVE else 0.0
    W_new = state.W_accum + dW_scalar
    return SimState(state.t + dt, u_new,
                    gamma=float(np.exp(-alpha * W_new)) if alpha else 1.0,
                    W_accum=W_new, step_index=state.step_index + 1)


# ---------------------------------------------------------------------------
# Trajectory driver


def _monitored_value(rule: StoppingRule, u: SpectralField, t: float,
                     W_accum: float, alpha: float) -> float:
    if rule.kind == W1INF_THRESHOLD:
        return w1inf_norm(u)
    if rule.kind == SOBOLEV_THRESHOLD:
        spec = rule.norm_spec or NormRequest(1, 2)
        return sobolev_norm(u, spec)
    # gbm_level monitors rho_alpha(t) = exp(alpha W_t - alpha^2 t / 8)
    return float(np.exp(alpha * W_accum - alpha ** 2 * t / 8.0))


def integrate_trajectory(cfg: TrajectoryConfig,
                         trajectory_id: int = 0) -> TrajectoryDiagnostics:
    """Run one path to T, first stopping hit, or numerical blow-up."""
    diag = TrajectoryDiagnostics()
    req = NormRequest(cfg.m, cfg.p)
    alpha = cfg.alpha or (cfg.model.alpha
                          if cfg.model.kind == LINEAR_MULTIPLICATIVE else 0.0)
    transformed = cfg.integrator == "transformed"
    state = SimState(0.0, cfg.u0.copy())
    v = cfg.u0.copy() if transformed else None
    fired: set[str] = set()

    def physical_u() -> SpectralField:
        if transformed:
            return (1.0 / state.gamma) * v
        return state.u

    def sample() -> bool:
        """Record diagnostics; returns True if a stopping rule fired."""
        u = physical_u()
        diag.times.append(state.t)
        diag.l2.append(l2_norm(u))
        diag.wmp.append(sobolev_norm(u, req))
        diag.w1inf.append(w1inf_norm(u))
        diag.curl_inf.append(lp_norm(curl(u), np.inf))
        diag.gamma.append(state.gamma)
        if transformed:
            diag.transform_residual.append(l2_norm(state.gamma * u - v))
        else:
            diag.transform_residual.append(0.0)
        if diag.w1inf[-1] >= cfg.blowup_level:
            diag.blow_up_flag = True
            return True
        hit = False
        for rule in cfg.stopping:
            if rule.kind in fired:
                continue
            val = _monitored_value(rule, u, state.t, state.W_accum, alpha)
            if val >= rule.level:
                diag.hits.append((rule.kind, state.t))
                fired.add(rule.kind)
                hit = True
        return hit

    if cfg.T <= 0:
        diag.final_time = 0.0
        return diag

    stop = sample()
    n_steps = max(1, int(round(cfg.T / cfg.dt)))
    while not stop and state.step_index < n_steps:
        try:
            if transformed:
                dW = cfg.driver.sample_increments(trajectory_id,
                                                  state.step_index, cfg.dt)
                gamma_here = state.gamma
                v = step_transformed(v, cfg.dt, alpha, gamma_here)
                W_new = state.W_accum + float(dW[0])
                state = SimState(state.t + cfg.dt, v,
                                 gamma=float(np.exp(-alpha * W_new)),
                                 W_accum=W_new,
                                 step_index=state.step_index + 1)
            elif cfg.integrator == "rk4":
                state = step_rk4(state, cfg.dt, cfg.model, cfg.driver,
                                 trajectory_id, cfg.c_cfl, cfg.enforce_cfl)
            elif cfg.integrator == "em":
                state = step_em(state, cfg.dt, cfg.model, cfg.driver,
                                trajectory_id, cfg.c_cfl, cfg.enforce_cfl)
            else:
                raise ValueError(f"unknown integrator '{cfg.integrator}'")
        except NonFinite:
            diag.blow_up_flag = True
            break
        if state.step_index % cfg.sample_every == 0 \
                or state.step_index == n_steps:
            stop = sample()
    diag.final_time = state.t
    return diag
