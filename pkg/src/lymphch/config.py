"""JSON run configuration with fail-fast validation.

Schema (all sections optional except ``grid``, ``T_final`` and ``initial``)::

    {
      "grid":     {"dim": 1, "n": 256, "L": 1.0},            # n, L scalar or per-axis list
      "params":   {"delta": 1e-3, "epsilon": 1e-3, "use_artificial_diffusion": true},
      "solver":   {"dt_init": 1e-6, "dt_min": 1e-12, "dt_max": 1e-2,
                   "newton_tol": 1e-10, "newton_max_iters": 25,
                   "energy_slack_tol": 1e-9, "linear_tol": 1e-12},
      "T_final":  1.0,
      "initial":  {"kind": "constant+noise", "phi_bar": 0.5, "c_bar": 0.3,
                   "amplitude": 0.01, "seed": 42, "mode": 1, "amplitude_c": 0.0},
      "output":   {"every": 0.1, "dir": "out", "snapshots": true},
      "mode":     "regularized",                              # or "limit", "galerkin"
      "galerkin": {"N": 32, "ode_tol": 1e-9, "min_step": 0.0, "max_steps": 2000000},
      "mms":      {"dt_factor": 1.0}
    }

``constant+cosine`` sets ``phi = phi_bar + amplitude cos(mode pi x / L)``
(a product of cosines in 2D) and ``c = c_bar + amplitude_c cos(...)``.
``constant+noise`` uses SplitMix64 noise in ``[-1, 1)`` per cell, seeded with
``seed`` for ``phi`` and ``seed + 1`` for ``c``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import rng
from .grid import Grid
from .model import RegParams
from .stepper import SolverConfig

__all__ = ["ConfigError", "RunConfig", "InitialSpec", "OutputSpec", "GalerkinSpec", "load_config", "parse_config"]

MODES = ("regularized", "limit", "galerkin")
KINDS = ("constant+cosine", "constant+noise")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class InitialSpec:
    kind: str
    phi_bar: float
    c_bar: float
    amplitude: float
    seed: int = 0
    mode: int = 1
    amplitude_c: float = 0.0


@dataclass(frozen=True)
class OutputSpec:
    every: float
    dir: str = "out"
    snapshots: bool = True


@dataclass(frozen=True)
class GalerkinSpec:
    N: int = 32
    ode_tol: float = 1e-9
    min_step: float = 0.0
    max_steps: int = 2_000_000


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    params: RegParams
    solver: SolverConfig
    T_final: float
    initial: InitialSpec
    output: OutputSpec
    mode: str = "regularized"
    galerkin: GalerkinSpec = field(default_factory=GalerkinSpec)
    mms_dt_factor: float = 1.0

    @property
    def limit(self) -> bool:
        return self.mode == "limit"

    def output_times(self, t0: float = 0.0, T: float | None = None) -> np.ndarray:
        """Output times in ``(t0, T]``: multiples of ``every`` plus ``T`` itself."""
        T = self.T_final if T is None else T
        every = self.output.every
        eps = 1e-12 * max(1.0, T)
        k = np.arange(int(np.floor(t0 / every)), int(np.ceil(T / every)) + 1)
        ts = [float(x) for x in k * every if t0 + eps < x < T - eps]
        return np.array(ts + [float(T)])

    def initial_fields(self, grid: Grid | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Initial ``(phi, c)`` sampled at cell centers of ``grid``."""
        grid = self.grid if grid is None else grid
        ini = self.initial
        if ini.kind == "constant+cosine":
            shape = np.ones(grid.shape)
            for x, L in zip(grid.centers(), grid.L):
                shape = shape * np.cos(ini.mode * np.pi * x / L)
            phi = ini.phi_bar + ini.amplitude * shape
            c = ini.c_bar + ini.amplitude_c * shape
        else:
            phi = ini.phi_bar + ini.amplitude * rng.symmetric(ini.seed, grid.shape)
            c = ini.c_bar + ini.amplitude_c * rng.symmetric(ini.seed + 1, grid.shape)
        return phi, c

    def to_dict(self) -> dict:
        g = self.grid
        return {
            "grid": {"dim": g.dim, "n": list(g.n), "L": list(g.L)},
            "params": asdict(self.params),
            "solver": asdict(self.solver),
            "T_final": self.T_final,
            "initial": asdict(self.initial),
            "output": asdict(self.output),
            "mode": self.mode,
            "galerkin": asdict(self.galerkin),
            "mms": {"dt_factor": self.mms_dt_factor},
        }


_TOP = {"grid", "params", "solver", "T_final", "initial", "output", "mode", "galerkin", "mms"}


def _section(raw, name, cls, errors, required=()):
    """Build ``cls`` from ``raw[name]``, collecting errors instead of raising."""
    data = raw.get(name, {})
    if not isinstance(data, dict):
        errors.append(f"{name}: expected an object")
        return {}
    known = {f.name for f in fields(cls)}
    for key in sorted(set(data) - known):
        errors.append(f"{name}.{key}: unknown key")
    for key in required:
        if key not in data:
            errors.append(f"{name}.{key}: required")
    return {k: v for k, v in data.items() if k in known}


def _num(v, path, errors, integer=False):
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if integer:
        ok = isinstance(v, int) and not isinstance(v, bool)
    if not ok:
        errors.append(f"{path}: expected {'an integer' if integer else 'a number'}, got {v!r}")
        return None
    return v


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a decoded JSON object.

    Raises:
        ConfigError: listing every violated constraint.
    """
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected an object"])
    for key in sorted(set(raw) - _TOP):
        errors.append(f"{key}: unknown key")
    for key in ("grid", "T_final", "initial"):
        if key not in raw:
            errors.append(f"{key}: required")

    # grid
    gd = raw.get("grid", {})
    grid = None
    if not isinstance(gd, dict):
        errors.append("grid: expected an object")
    else:
        for key in sorted(set(gd) - {"dim", "n", "L"}):
            errors.append(f"grid.{key}: unknown key")
        dim = gd.get("dim", 1)
        if dim not in (1, 2) or isinstance(dim, bool):
            errors.append(f"grid.dim: must be 1 or 2, got {dim!r}")
            dim = None
        n = gd.get("n")
        L = gd.get("L", 1.0)
        if n is None:
            errors.append("grid.n: required")
        if dim is not None and n is not None:
            ns = list(n) if isinstance(n, list) else [n] * dim
            Ls = list(L) if isinstance(L, list) else [L] * dim
            bad = False
            if len(ns) != dim or len(Ls) != dim:
                errors.append(f"grid: n and L need {dim} entries")
                bad = True
            for v in ns:
                if _num(v, "grid.n", errors, integer=True) is None or v < 3:
                    if isinstance(v, int) and not isinstance(v, bool):
                        errors.append(f"grid.n: need at least 3 cells, got {v}")
                    bad = True
            for v in Ls:
                if _num(v, "grid.L", errors) is None or not v > 0:
                    if isinstance(v, (int, float)) and not isinstance(v, bool):
                        errors.append(f"grid.L: must be positive, got {v}")
                    bad = True
            if not bad:
                grid = Grid(tuple(ns), tuple(float(x) for x in Ls))

    # params
    params = None
    pd = _section(raw, "params", RegParams, errors)
    try:
        params = RegParams(**pd)
    except (ValueError, TypeError) as exc:
        errors.append(f"params: {exc}")

    # solver
    solver = None
    sd = _section(raw, "solver", SolverConfig, errors)
    try:
        solver = SolverConfig(**sd)
    except (ValueError, TypeError) as exc:
        errors.append(f"solver: {exc}")

    T = raw.get("T_final")
    if T is not None and (_num(T, "T_final", errors) is None or not T > 0):
        if isinstance(T, (int, float)) and not isinstance(T, bool):
            errors.append(f"T_final: must be positive, got {T}")
        T = None

    mode = raw.get("mode", "regularized")
    if mode not in MODES:
        errors.append(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")

    # initial
    initial = None
    idict = _section(raw, "initial", InitialSpec, errors,
                     required=("kind", "phi_bar", "c_bar", "amplitude") if "initial" in raw else ())
    if "initial" in raw and all(k in idict for k in ("kind", "phi_bar", "c_bar", "amplitude")):
        ok = True
        if idict["kind"] not in KINDS:
            errors.append(f"initial.kind: must be one of {', '.join(KINDS)}, got {idict['kind']!r}")
            ok = False
        for key in ("phi_bar", "c_bar", "amplitude", "amplitude_c"):
            if key in idict and _num(idict[key], f"initial.{key}", errors) is None:
                ok = False
        for key in ("seed", "mode"):
            if key in idict and _num(idict[key], f"initial.{key}", errors, integer=True) is None:
                ok = False
        if ok:
            initial = InitialSpec(**idict)
            a, ac = abs(initial.amplitude), abs(initial.amplitude_c)
            if not 0 < initial.phi_bar < 1:
                errors.append(f"initial.phi_bar: must lie in (0, 1), got {initial.phi_bar}")
            elif not (initial.phi_bar - a > 0 and initial.phi_bar + a < 1):
                errors.append("initial.amplitude: phi_0 would leave (0, 1)")
            if initial.c_bar < 0:
                errors.append(f"initial.c_bar: must be nonnegative, got {initial.c_bar}")
            elif initial.c_bar - ac < 0:
                errors.append("initial.amplitude_c: c_0 would become negative")
            if initial.seed < 0:
                errors.append("initial.seed: must be nonnegative")

    # output
    output = None
    od = _section(raw, "output", OutputSpec, errors)
    every = od.get("every", T)
    if every is not None and (_num(every, "output.every", errors) is None or not every > 0):
        if isinstance(every, (int, float)) and not isinstance(every, bool):
            errors.append("output.every: must be positive")
        every = None
    if every is not None:
        out_dir = od.get("dir", "out")
        if not isinstance(out_dir, str):
            errors.append("output.dir: expected a string")
        else:
            if base_dir is not None and not Path(out_dir).is_absolute():
                out_dir = str(Path(base_dir) / out_dir)
            output = OutputSpec(every=float(every), dir=out_dir, snapshots=bool(od.get("snapshots", True)))

    # galerkin
    galerkin = GalerkinSpec()
    gal = _section(raw, "galerkin", GalerkinSpec, errors)
    if gal:
        bad = False
        for key in ("N", "max_steps"):
            if key in gal and (_num(gal[key], f"galerkin.{key}", errors, integer=True) is None or gal[key] < 1):
                if isinstance(gal[key], int) and not isinstance(gal[key], bool):
                    errors.append(f"galerkin.{key}: must be positive")
                bad = True
        for key in ("ode_tol", "min_step"):
            if key in gal and _num(gal[key], f"galerkin.{key}", errors) is None:
                bad = True
        if "ode_tol" in gal and not bad and not gal["ode_tol"] > 0:
            errors.append("galerkin.ode_tol: must be positive")
            bad = True
        if not bad:
            galerkin = GalerkinSpec(**gal)
    if mode == "galerkin" and grid is not None and grid.dim != 1:
        errors.append("mode: galerkin runs are 1D only")

    md = raw.get("mms", {})
    dt_factor = 1.0
    if not isinstance(md, dict):
        errors.append("mms: expected an object")
    else:
        for key in sorted(set(md) - {"dt_factor"}):
            errors.append(f"mms.{key}: unknown key")
        dt_factor = md.get("dt_factor", 1.0)
        if _num(dt_factor, "mms.dt_factor", errors) is None or not dt_factor > 0:
            if isinstance(dt_factor, (int, float)):
                errors.append("mms.dt_factor: must be positive")
            dt_factor = 1.0

    if errors:
        raise ConfigError(errors)
    return RunConfig(grid, params, solver, float(T), initial, output, mode, galerkin, float(dt_factor))


def load_config(path) -> RunConfig:
    """Read and validate a JSON file; relative output dirs resolve against it.

    Raises:
        ConfigError: unreadable JSON or invalid content.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    return parse_config(raw, base_dir=path.parent)
