"""Experiment configuration: sectioned key = value files (INI syntax).

Grammar
-------
``[section]`` headers followed by ``key = value`` lines; ``#`` and ``;``
start comments.  Sections and keys (all optional, defaults in brackets):

[grid]          n_x [128], length [2pi], n_v [129], v_halfwidth_sigmas [8]
[physics]       rho [1], u0 [0.5], T0 [1], eps_u [0.1], eps_T [0.1],
                knudsen [1], z0 [0], z_min [-1], z_max [1]
[run]           dt [from CFL], cfl_safety [0.5], t_end [50], n_max [3],
                perturbation [both] (velocity | temperature | both),
                init_sensitivity [zero_in_frame] (| chain_rule_from_f)
[initial]       profile [sine_wave] (| gaussian_bump | file), wavenumber [1],
                x0 [length/2], sigma_x [0.5], mode [3], amplitude [1], path
[verification]  suites [all], fd_delta [1e-2 x half z-range], n_z [3],
                fit_window [0.5, 1.0] (fractions of t_end), tol_rel [1e-6],
                tol_abs [1e-10], acoustic_knudsen [1, 0.1, 0.01],
                acoustic_t_end [2], mms_levels [32, 64, 128],
                collision_samples [1000]
[output]        directory [out], sample_every [auto], figures [true]

``length`` accepts a number or a multiple of pi written as ``2pi`` or
``2*pi``.  ``mode`` is a comma-separated list of collision-basis indices
whose functions are summed to form the velocity profile.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

SUITES = (
    "collision", "shifted_monotone", "scaled_monotone", "derivative_bound", "velocity_envelope", "velocity_higher", "temperature_envelope", "temperature_higher",
    "oracle", "conservation", "acoustic", "mms", "residual",
)
PROFILES = ("sine_wave", "gaussian_bump", "file")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


@dataclass
class GridBlock:
    n_x: int = 128
    length: float = 2 * math.pi
    n_v: int = 129
    v_halfwidth_sigmas: float = 8.0


@dataclass
class PhysicsBlock:
    rho: float = 1.0
    u0: float = 0.5
    T0: float = 1.0
    eps_u: float = 0.1
    eps_T: float = 0.1
    knudsen: float = 1.0
    z0: float = 0.0
    z_min: float = -1.0
    z_max: float = 1.0


@dataclass
class RunBlock:
    dt: float | None = None
    cfl_safety: float = 0.5
    t_end: float = 50.0
    n_max: int = 3
    perturbation: str = "both"
    init_sensitivity: str = "zero_in_frame"


@dataclass
class InitialBlock:
    profile: str = "sine_wave"
    wavenumber: int = 1
    x0: float | None = None
    sigma_x: float = 0.5
    mode: tuple[int, ...] = (3,)
    amplitude: float = 1.0
    path: str | None = None


@dataclass
class VerificationBlock:
    suites: tuple[str, ...] = SUITES
    fd_delta: float | None = None
    n_z: int = 3
    fit_window: tuple[float, float] = (0.5, 1.0)
    tol_rel: float = 1e-6
    tol_abs: float = 1e-10
    acoustic_knudsen: tuple[float, ...] = (1.0, 0.1, 0.01)
    acoustic_t_end: float = 2.0
    mms_levels: tuple[int, ...] = (32, 64, 128)
    collision_samples: int = 1000


@dataclass
class OutputBlock:
    directory: str = "out"
    sample_every: int | None = None
    figures: bool = True


@dataclass
class ExperimentConfig:
    grid: GridBlock = field(default_factory=GridBlock)
    physics: PhysicsBlock = field(default_factory=PhysicsBlock)
    run: RunBlock = field(default_factory=RunBlock)
    initial: InitialBlock = field(default_factory=InitialBlock)
    verification: VerificationBlock = field(default_factory=VerificationBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    @property
    def delta(self) -> float:
        v = self.verification
        if v.fd_delta is not None:
            return v.fd_delta
        return 1e-2 * 0.5 * (self.physics.z_max - self.physics.z_min)

    def z_stencil(self) -> list[float]:
        half = (self.verification.n_z - 1) // 2
        return [self.physics.z0 + j * self.delta for j in range(-half, half + 1)]

    def perturbations(self) -> tuple[str, ...]:
        p = self.run.perturbation
        return ("velocity", "temperature") if p == "both" else (p,)


_SECTIONS = {
    "grid": GridBlock, "physics": PhysicsBlock, "run": RunBlock,
    "initial": InitialBlock, "verification": VerificationBlock, "output": OutputBlock,
}

_PI = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def _real(text: str) -> float:
    m = _PI.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in ("", "+", "-") else float(coef + "1")) * math.pi
    val = float(text)
    if not math.isfinite(val):
        raise ValueError(f"not a finite number: {text!r}")
    return val


def _int(text: str) -> int:
    val = float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


_OPTIONAL_REAL = {("run", "dt"), ("initial", "x0"), ("verification", "fd_delta")}
_CONVERT = {
    ("grid", "n_x"): _int, ("grid", "n_v"): _int,
    ("run", "n_max"): _int, ("initial", "wavenumber"): _int,
    ("verification", "n_z"): _int, ("verification", "collision_samples"): _int,
    ("output", "sample_every"): _int, ("output", "figures"): _bool,
    ("run", "perturbation"): str, ("run", "init_sensitivity"): str,
    ("initial", "profile"): str, ("initial", "path"): str, ("output", "directory"): str,
    ("initial", "mode"): lambda s: tuple(_int(t) for t in _list(s)),
    ("verification", "suites"): lambda s: tuple(SUITES if s.strip() == "all" else _list(s)),
    ("verification", "fit_window"): lambda s: tuple(_real(t) for t in _list(s)),
    ("verification", "acoustic_knudsen"): lambda s: tuple(_real(t) for t in _list(s)),
    ("verification", "mms_levels"): lambda s: tuple(_int(t) for t in _list(s)),
}


def config_from_text(text: str, source: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (T0, eps_T)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}".replace("\n", " ")]) from None
    cfg = ExperimentConfig()
    errors: list[str] = []
    for section in parser.sections():
        if section not in _SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        block = getattr(cfg, section)
        names = {f.name for f in fields(block)}
        for key, raw in parser.items(section):
            if key not in names:
                errors.append(f"unknown key {section}.{key}")
                continue
            conv = _CONVERT.get((section, key), _real)
            try:
                if (section, key) in _OPTIONAL_REAL and raw.strip().lower() in ("", "none", "auto"):
                    value = None
                elif (section, key) == ("output", "sample_every") and raw.strip().lower() in ("", "auto"):
                    value = None
                else:
                    value = conv(raw)
            except ValueError as exc:
                errors.append(f"{section}.{key}: {exc}")
                continue
            setattr(block, key, value)
    errors += validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return config_from_text(text, str(path))


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every violated constraint, as 'section.key: message' strings."""
    e: list[str] = []
    g, p, r, i, v, o = cfg.grid, cfg.physics, cfg.run, cfg.initial, cfg.verification, cfg.output
    if g.n_x < 4:
        e.append("grid.n_x: must be >= 4")
    if not g.length > 0:
        e.append("grid.length: must be positive")
    if g.n_v < 8:
        e.append("grid.n_v: must be >= 8")
    if not g.v_halfwidth_sigmas >= 4:
        e.append("grid.v_halfwidth_sigmas: must be >= 4")
    if not p.rho > 0:
        e.append("physics.rho: must be positive")
    if not p.T0 > 0:
        e.append("physics.T0: must be positive")
    if not p.knudsen > 0:
        e.append("physics.knudsen: must be positive")
    if not p.z_min <= p.z0 <= p.z_max:
        e.append(f"physics.z0: {p.z0} outside [z_min, z_max] = [{p.z_min}, {p.z_max}]")
    for name in ("z_min", "z_max"):
        z = getattr(p, name)
        if not p.T0 + p.eps_T * z > 0:
            e.append(f"physics.{name}: temperature T0 + eps_T*z = {p.T0 + p.eps_T * z:g} is not positive")
    if r.dt is not None and not r.dt > 0:
        e.append("run.dt: must be positive")
    if not 0 < r.cfl_safety <= 1:
        e.append("run.cfl_safety: must lie in (0, 1]")
    if not r.t_end > 0:
        e.append("run.t_end: must be positive")
    if not 0 <= r.n_max <= 4:
        e.append("run.n_max: must lie in 0..4")
    if r.perturbation not in ("velocity", "temperature", "both"):
        e.append(f"run.perturbation: unknown value {r.perturbation!r}")
    if r.init_sensitivity not in ("zero_in_frame", "chain_rule_from_f"):
        e.append(f"run.init_sensitivity: unknown value {r.init_sensitivity!r}")
    if i.profile not in PROFILES:
        e.append(f"initial.profile: unknown profile {i.profile!r}; known: {', '.join(PROFILES)}")
    if i.profile == "file":
        if not i.path:
            e.append("initial.path: required for profile = file")
        elif not Path(i.path).is_file():
            e.append(f"initial.path: no such file {i.path}")
        else:
            try:
                shape = np.loadtxt(i.path, delimiter=",", ndmin=2).shape
            except ValueError as exc:
                e.append(f"initial.path: unreadable table ({exc})")
            else:
                if shape != (g.n_x, g.n_v):
                    e.append(f"initial.path: table shape {shape} differs from (n_x, n_v) = {(g.n_x, g.n_v)}")
    if i.profile == "file" and r.init_sensitivity == "chain_rule_from_f":
        e.append("run.init_sensitivity: chain_rule_from_f needs an analytic profile, not a file")
    if not i.mode or any(m < 0 or m > 4 for m in i.mode):
        e.append("initial.mode: indices must lie in 0..4")
    if not i.sigma_x > 0:
        e.append("initial.sigma_x: must be positive")
    for s in v.suites:
        if s not in SUITES:
            e.append(f"verification.suites: unknown suite {s!r}")
    if v.n_z not in (3, 5):
        e.append("verification.n_z: must be 3 or 5")
    if v.fd_delta is not None and not v.fd_delta > 0:
        e.append("verification.fd_delta: must be positive")
    if len(v.fit_window) != 2 or not 0 < v.fit_window[0] < v.fit_window[1] <= 1:
        e.append("verification.fit_window: need two fractions 0 < lo < hi <= 1")
    if not v.acoustic_knudsen or any(k <= 0 for k in v.acoustic_knudsen):
        e.append("verification.acoustic_knudsen: values must be positive")
    if len(v.mms_levels) < 2 or any(n < 8 for n in v.mms_levels):
        e.append("verification.mms_levels: need at least two levels >= 8")
    if o.sample_every is not None and o.sample_every < 1:
        e.append("output.sample_every: must be >= 1")
    # positivity and admissibility over the collocation stencil
    if v.n_z in (3, 5) and (v.fd_delta is None or v.fd_delta > 0):
        for j, z in enumerate(cfg.z_stencil()):
            temp = p.T0 + p.eps_T * z
            if temp <= 0:
                e.append(f"physics.eps_T: stencil node {j} (z = {z:g}) gives T = {temp:g} <= 0")
            if not p.z_min - 1e-14 <= z <= p.z_max + 1e-14:
                e.append(f"verification.fd_delta: stencil node {j} (z = {z:g}) leaves [z_min, z_max]")
    return e
