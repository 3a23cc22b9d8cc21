"""Flat ``key = value`` experiment configs.

One setting per line, ``#`` starts a comment.  Lists are comma separated::

    graph = lattice2d
    m = 1025
    detector = glrt
    mu_grid = 0.3, 0.4, 0.5
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError
from .families import FAMILIES
from .graph import KINDS, LATTICE_HD
from .priors import HM, PRIOR_KINDS, PriorSpec, hm_sequence

MC_DETECTORS = ("bayes", "glrt", "strip", "was", "root")
DETECTOR_NAMES = MC_DETECTORS + ("was_analytic", "strip_fast")
LATTICE_ONLY = ("strip", "was", "was_analytic", "strip_fast")

# calibration / power trial counts when the config leaves them out
DEFAULT_TRIALS = {
    "bayes": (2000, 2000),
    "glrt": (10_000, 1000),
    "strip": (5000, 5000),
    "strip_fast": (5000, 5000),
    "was": (10_000, 1000),
    "root": (10_000, 1000),
    "was_analytic": (100, 100),
}


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str = "lattice2d"
    m: tuple = (1025,)
    d: int = 1
    family: str = "gaussian"
    detector: tuple = ("glrt",)
    prior: str = "uniform"
    path: Optional[str] = None  # "increasing" or comma separated steps
    alpha: float = 0.05
    mu_grid: tuple = ()
    theta_grid: tuple = ()
    trials_calib: Optional[int] = None
    trials_power: Optional[int] = None
    tol: float = 0.01
    target: float = 0.95
    lo: float = 0.0
    hi: float = 1.0
    B: Optional[int] = None
    seed: int = 0

    def trials(self, detector: str) -> tuple:
        dc, dp = DEFAULT_TRIALS[detector]
        return (self.trials_calib or dc, self.trials_power or dp)

    def prior_spec(self, m: int) -> PriorSpec:
        if self.prior == HM:
            return PriorSpec(HM, hm_sequence(m))
        return PriorSpec(self.prior)

    def path_value(self):
        if self.path is None or self.path == "increasing":
            return self.path
        return [int(s) for s in self.path.split(",")]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=seed)


_LISTS = {"m": int, "detector": str, "mu_grid": float, "theta_grid": float}
_SCALARS = {"graph": str, "d": int, "family": str, "prior": str, "path": str, "alpha": float,
            "trials_calib": int, "trials_power": int, "tol": float, "target": float,
            "lo": float, "hi": float, "B": int, "seed": int}


def _convert(kind, raw: str):
    if kind is int:
        return int(raw, 0)
    return kind(raw)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values = {}
    lines = {}
    for no, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", no, source)
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _LISTS and key not in _SCALARS:
            raise ConfigError(f"unknown key {key!r}", no, source)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", no, source)
        try:
            if key in _LISTS:
                items = [s.strip() for s in raw.split(",") if s.strip()]
                if not items:
                    raise ConfigError(f"{key} is empty", no, source)
                values[key] = tuple(_convert(_LISTS[key], s) for s in items)
            elif key == "path":
                values[key] = raw.replace(" ", "")
            else:
                values[key] = _convert(_SCALARS[key], raw)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"cannot parse {key} value {raw!r}", no, source) from None
        lines[key] = no
    cfg = ExperimentConfig(**values)
    validate(cfg, lines, source)
    return cfg


def validate(cfg: ExperimentConfig, lines: Optional[dict] = None, source: str = "<config>") -> None:
    lines = lines or {}

    def fail(key, msg):
        raise ConfigError(msg, lines.get(key), source)

    if cfg.graph not in KINDS:
        fail("graph", f"unknown graph {cfg.graph!r}; expected one of {KINDS}")
    if cfg.family not in FAMILIES:
        fail("family", f"unknown family {cfg.family!r}; expected one of {tuple(FAMILIES)}")
    if cfg.prior not in PRIOR_KINDS:
        fail("prior", f"unknown prior {cfg.prior!r}; expected one of {PRIOR_KINDS}")
    if not cfg.m or any(m < 1 for m in cfg.m):
        fail("m", "m must be a nonempty list of integers >= 1")
    if cfg.d < 1 or (cfg.d != 1 and cfg.graph != LATTICE_HD):
        fail("d", "d must be >= 1 and is only used by lattice_hd")
    if not cfg.detector:
        fail("detector", "no detector given")
    for det in cfg.detector:
        if det not in DETECTOR_NAMES:
            fail("detector", f"unknown detector {det!r}; expected one of {DETECTOR_NAMES}")
        if det in LATTICE_ONLY and cfg.graph != "lattice2d":
            fail("detector", f"detector {det!r} needs graph = lattice2d")
        if det in ("strip_fast", "was_analytic", "was") and cfg.family != "gaussian":
            fail("detector", f"detector {det!r} needs family = gaussian")
    if not 0 < cfg.alpha < 1:
        fail("alpha", "alpha must lie in (0, 1)")
    if not 0 < cfg.target < 1:
        fail("target", "target must lie in (0, 1)")
    if cfg.tol <= 0:
        fail("tol", "tol must be > 0")
    if not cfg.hi > cfg.lo >= 0:
        fail("hi", "need 0 <= lo < hi")
    for key in ("trials_calib", "trials_power"):
        v = getattr(cfg, key)
        if v is not None and v < 100:
            fail(key, f"{key} must be >= 100")
    if cfg.mu_grid and cfg.theta_grid:
        fail("theta_grid", "give mu_grid or theta_grid, not both")
    grid_key = "theta_grid" if cfg.theta_grid else "mu_grid"
    grid = getattr(cfg, grid_key)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        fail(grid_key, f"{grid_key} must be strictly increasing")
    if cfg.path is not None:
        if cfg.path != "increasing":
            try:
                cfg.path_value()
            except ValueError:
                fail("path", "path must be 'increasing' or comma separated integer steps")
    if cfg.prior == HM and any(m <= 4 for m in cfg.m):
        fail("prior", "the hm prior needs m > 4")
    if cfg.prior == HM and cfg.graph != "lattice2d":
        fail("prior", "the hm prior needs graph = lattice2d")
    if cfg.B is not None and cfg.B < 0:
        fail("B", "B must be >= 0")
    if not 0 <= cfg.seed < 2**64:
        fail("seed", "seed must be an unsigned 64-bit integer")


def require_grid(cfg: ExperimentConfig, source: str = "<config>") -> None:
    if not cfg.mu_grid and not cfg.theta_grid:
        raise ConfigError("mu_grid (or theta_grid) is empty", None, source)


def format_config(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` in the same syntax; ``parse_config`` gives back an equal config."""
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None or v == ():
            continue
        if isinstance(v, tuple):
            v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, path) from None
    return parse_config(text, path)
