"""Run configuration files (YAML) and their translation to runtime objects.

Layout mirrors the module names; every physical quantity is in torus units
(period defaults to 2*pi, time is the nondimensional advective unit).  See
README for a commented example.
"""

from __future__ import annotations

import math
from dataclasses import replace

import yaml

from .analysis import GBMParams
from .dynamics import (GBM_LEVEL, SOBOLEV_THRESHOLD, W1INF_THRESHOLD,
                       StoppingRule, TrajectoryConfig)
from .ensemble import EnsembleConfig, GBMSurrogateSpec
from .errors import ConfigError
from .noise import (ADDITIVE, FUNCTIONAL, LINEAR_MULTIPLICATIVE, NEMYTSKII,
                    BrownianDriver, NoiseModel, spectrum_sigma_fields)
from .spectral import Grid, NormRequest, make_initial_field


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return doc


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply --set key.path=value pairs; values parse as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not key=value")
        key, raw = item.split("=", 1)
        node = doc
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override key '{key}' crosses a scalar")
        val = yaml.safe_load(raw)
        if isinstance(val, str):
            # YAML 1.1 leaves dotless scientific notation ("1e-3") as a
            # string; numeric overrides should not depend on that quirk
            try:
                val = float(val)
            except ValueError:
                pass
        node[parts[-1]] = val
    return doc


def _section(doc: dict, name: str, required: bool = True) -> dict:
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing config section '{name}'")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return sec


def build_grid(doc: dict) -> Grid:
    sec = _section(doc, "grid")
    try:
        return Grid(dim=int(sec.get("dim", 2)), n=int(sec.get("n", 32)),
                    length=float(sec.get("length", 2 * math.pi)),
                    dealias_fraction=float(sec.get("dealias_fraction",
                                                   2.0 / 3.0)))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def build_noise(doc: dict, grid: Grid) -> tuple[NoiseModel, BrownianDriver]:
    sec = _section(doc, "noise", required=False)
    kind = sec.get("kind", "none")
    seed = int(sec.get("seed", 0))
    if kind in ("none", None):
        return NoiseModel(ADDITIVE, sigma_fields=()), BrownianDriver(seed, 0)
    if kind == LINEAR_MULTIPLICATIVE:
        alpha = float(sec.get("alpha", 1.0))
        return (NoiseModel(LINEAR_MULTIPLICATIVE, alpha=alpha),
                BrownianDriver(seed, 1))
    k_modes = int(sec.get("k_modes", 1))
    decay = float(sec.get("mode_decay", 2.0))
    fields = spectrum_sigma_fields(grid, k_modes, decay, seed)
    if kind == ADDITIVE:
        model = NoiseModel(ADDITIVE, sigma_fields=fields)
    elif kind == NEMYTSKII:
        model = NoiseModel(NEMYTSKII, sigma_fields=fields,
                           g_tag=sec.get("g", "identity"))
    elif kind == FUNCTIONAL:
        profiles = spectrum_sigma_fields(grid, k_modes, decay, seed + 1)
        model = NoiseModel(FUNCTIONAL, sigma_fields=fields,
                           profiles=profiles)
    else:
        raise ConfigError(f"noise.kind: unknown kind '{kind}'")
    return model, BrownianDriver(seed, k_modes)


def build_stopping(doc: dict) -> tuple[StoppingRule, ...]:
    rules = doc.get("stopping", [])
    if not isinstance(rules, list):
        raise ConfigError("'stopping' must be a list")
    out = []
    for i, spec in enumerate(rules):
        kind = spec.get("kind")
        if kind not in (W1INF_THRESHOLD, SOBOLEV_THRESHOLD, GBM_LEVEL):
            raise ConfigError(f"stopping[{i}].kind: unknown kind '{kind}'")
        norm_spec = None
        if kind == SOBOLEV_THRESHOLD:
            norm_spec = NormRequest(int(spec.get("m", 1)),
                                    float(spec.get("p", 2)))
        out.append(StoppingRule(kind, float(spec["level"]), norm_spec))
    return tuple(out)


def build_trajectory_config(doc: dict) -> TrajectoryConfig:
    grid = build_grid(doc)
    model, driver = build_noise(doc, grid)
    init = _section(doc, "initial", required=False)
    u0 = make_initial_field(grid, init.get("name", "taylor_green"),
                            float(init.get("amplitude", 1.0)),
                            int(init.get("seed", 0)))
    intg = _section(doc, "integrator")
    norms = _section(doc, "norms", required=False)
    try:
        return TrajectoryConfig(
            grid=grid, u0=u0, model=model, driver=driver,
            T=float(intg["T"]), dt=float(intg["dt"]),
            integrator=intg.get("kind", "em"),
            c_cfl=float(intg.get("cfl", 0.5)),
            stopping=build_stopping(doc),
            sample_every=int(intg.get("sample_every", 1)),
            m=int(norms.get("m", 3)), p=float(norms.get("p", 2)),
            alpha=float(intg.get("alpha", 0.0)),
            enforce_cfl=bool(intg.get("enforce_cfl", True)))
    except KeyError as exc:
        raise ConfigError(f"integrator: missing key {exc}") from exc


def build_ensemble_config(doc: dict, output_dir: str | None = None
                          ) -> EnsembleConfig:
    ens = _section(doc, "ensemble")
    surrogate = None
    trajectory = None
    if "surrogate" in doc:
        s = _section(doc, "surrogate")
        surrogate = GBMSurrogateSpec(alpha=float(s["alpha"]),
                                     R=float(s["R"]), T=float(s["T"]),
                                     dt=float(s["dt"]))
    else:
        trajectory = build_trajectory_config(doc)
    bound = None
    if "bound_comparison" in doc:
        b = _section(doc, "bound_comparison")
        bound = GBMParams(mu=float(b["mu"]), alpha=float(b["alpha"]),
                          x0=float(b.get("x0", 1.0)), R=float(b["R"]))
    try:
        return EnsembleConfig(
            trajectory=trajectory,
            n_paths=int(ens["n_paths"]),
            master_seed=int(ens.get("master_seed", 0)),
            parallel_width=int(ens.get("parallel_width", 1)),
            output_dir=output_dir, bound_comparison=bound,
            surrogate=surrogate)
    except KeyError as exc:
        raise ConfigError(f"ensemble: missing key {exc}") from exc
