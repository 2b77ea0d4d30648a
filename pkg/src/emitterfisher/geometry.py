"""Source/collector geometry and single-photon amplitude model.

A scenario consists of weak incoherent point emitters at positions
(x, y, z0 + z) and an array of light collectors at (u, v, 0).  Each
emitter illuminates the collectors with a complex single-photon
amplitude; stacking the per-source amplitude columns gives the
amplitude matrix that everything downstream (fidelities, Fisher
information, interferometer synthesis) is computed from.

Two amplitude models are supported:

* ``exact``    -- phase k * (optical path length), modulus 1/distance,
                  renormalized per source.
* ``paraxial`` -- phase linear in the source coordinates,
                  phi = -k (u x + v y)/z0 - k z (u^2 + v^2)/(2 z0^2),
                  modulus 1/sqrt(N_C).

Phase convention: the phase is +k times the optical path length.  Only
phase differences between collectors affect any derived quantity.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np
import yaml

# Geometry ratios above this trigger a paraxial-validity warning.
PARAXIAL_SCALE_WARN = 0.1
# Per-column normalization tolerance used by the self checks.
COLUMN_NORM_TOL = 1e-12


class ScenarioError(ValueError):
    """Invalid scenario data (bad fields, unknown keys, broken invariants)."""


class DegenerateGeometryError(ScenarioError):
    """Geometry produces ill-defined amplitudes (e.g. source on a collector)."""


class Mode(str, Enum):
    """Amplitude model selector."""

    EXACT = "exact"
    PARAXIAL = "paraxial"


@dataclass(frozen=True)
class SourcePoint:
    """Point emitter at (x, y, z0 + z) with relative emission weight."""

    x: float
    y: float
    z: float = 0.0
    weight: float = 1.0

    def __post_init__(self):
        for name in ("x", "y", "z", "weight"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ScenarioError(f"source {name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.weight <= 0:
            raise ScenarioError(f"source weight must be > 0, got {self.weight}")


@dataclass(frozen=True)
class Collector:
    """Light collector (pinhole, fibre tip, telescope) at (u, v) in the z = 0 plane."""

    u: float
    v: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "v", float(self.v))
        if not (np.isfinite(self.u) and np.isfinite(self.v)):
            raise ScenarioError(f"collector coordinates must be finite: ({self.u}, {self.v})")


@dataclass(frozen=True)
class Scenario:
    """Full problem instance: sources, collectors, wavenumber, reference distance.

    Source weights are normalized to sum to one on construction.  In
    paraxial mode a warning is emitted when the geometry is too large
    relative to z0 for the approximation to be trustworthy.
    """

    sources: tuple[SourcePoint, ...]
    collectors: tuple[Collector, ...]
    k: float
    z0: float
    mode: Mode = Mode.PARAXIAL

    def __post_init__(self):
        sources = tuple(self.sources)
        collectors = tuple(self.collectors)
        if len(sources) < 1:
            raise ScenarioError("scenario needs at least one source")
        if len(collectors) < 1:
            raise ScenarioError("scenario needs at least one collector")
        if not (np.isfinite(self.k) and self.k > 0):
            raise ScenarioError(f"wavenumber k must be positive, got {self.k}")
        if not (np.isfinite(self.z0) and self.z0 > 0):
            raise ScenarioError(f"reference distance z0 must be positive, got {self.z0}")
        mode = Mode(self.mode)
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "z0", float(self.z0))
        total = sum(s.weight for s in sources)
        sources = tuple(replace(s, weight=s.weight / total) for s in sources)
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "collectors", collectors)
        object.__setattr__(self, "mode", mode)
        if mode is Mode.PARAXIAL:
            scale = max(
                max(abs(s.x), abs(s.y), abs(s.z)) for s in sources
            )
            if scale / self.z0 > PARAXIAL_SCALE_WARN:
                warnings.warn(
                    f"paraxial mode with source offsets {scale:g} exceeding "
                    f"{PARAXIAL_SCALE_WARN:g} * z0; results may be inaccurate",
                    stacklevel=2,
                )

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_collectors(self) -> int:
        return len(self.collectors)

    def source_positions(self) -> np.ndarray:
        """(N_S, 3) array of source coordinates relative to the reference plane."""
        return np.array([[s.x, s.y, s.z] for s in self.sources], dtype=float)

    def weights(self) -> np.ndarray:
        return np.array([s.weight for s in self.sources], dtype=float)

    def collector_positions(self) -> np.ndarray:
        """(N_C, 2) array of collector coordinates."""
        return np.array([[c.u, c.v] for c in self.collectors], dtype=float)

    def with_source_positions(self, positions: np.ndarray) -> "Scenario":
        """Same scenario with source coordinates replaced (weights kept)."""
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (self.n_sources, 3):
            raise ScenarioError(
                f"positions shape {positions.shape} != ({self.n_sources}, 3)"
            )
        sources = tuple(
            SourcePoint(x=float(p[0]), y=float(p[1]), z=float(p[2]), weight=s.weight)
            for p, s in zip(positions, self.sources)
        )
        return Scenario(sources, self.collectors, self.k, self.z0, self.mode)


@dataclass(frozen=True)
class GeneralizedCoordinate:
    """A scalar coordinate theta = a . r of the collective source coordinates.

    ``a`` is a unit vector of length 3 N_S; one (a_x, a_y, a_z) triple per
    source.  ``parameter_scale`` relates the coordinate to the physical
    parameter the caller wants Fisher information for: if the parameter
    displaces the sources along tangent t = d r / d(param), then
    a = t / |t| and parameter_scale = |t|, so that information values
    transform as I_param = parameter_scale**2 * I_theta.
    """

    a: np.ndarray
    parameter_scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).copy()
        if a.ndim != 1 or a.size % 3 != 0:
            raise ScenarioError(f"direction must be a flat 3*N_S vector, got shape {a.shape}")
        norm = np.linalg.norm(a)
        if not np.isfinite(norm) or norm == 0:
            raise ScenarioError("direction vector must be nonzero and finite")
        if abs(norm - 1.0) > 1e-9:
            raise ScenarioError(f"direction vector must have unit norm, got {norm}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if not (np.isfinite(self.parameter_scale) and self.parameter_scale > 0):
            raise ScenarioError("parameter_scale must be positive")

    @property
    def n_sources(self) -> int:
        return self.a.size // 3

    @classmethod
    def from_tangent(cls, tangent: Sequence[float], name: str = "") -> "GeneralizedCoordinate":
        """Build from the displacement tangent d r / d(param) (any nonzero length)."""
        t = np.asarray(tangent, dtype=float)
        norm = np.linalg.norm(t)
        if norm == 0 or not np.isfinite(norm):
            raise ScenarioError("tangent must be nonzero and finite")
        return cls(a=t / norm, parameter_scale=float(norm), name=name)


def _axis_index(axis: str) -> int:
    try:
        return {"x": 0, "y": 1, "z": 2}[axis]
    except KeyError:
        raise ScenarioError(f"unknown axis {axis!r}") from None


def named_direction(name: str, n_sources: int) -> GeneralizedCoordinate:
    """Resolve a direction preset.

    Presets: ``x``/``y``/``z`` (single source), ``separation-x/y/z`` and
    ``centroid-x/y/z`` (two sources).  Separation presets parametrize the
    signed separation (source 1 minus source 2); centroid presets move
    both sources together.
    """
    name = name.strip().lower()
    if name in ("x", "y", "z"):
        if n_sources != 1:
            raise ScenarioError(f"direction {name!r} requires exactly one source")
        t = np.zeros(3)
        t[_axis_index(name)] = 1.0
        return GeneralizedCoordinate.from_tangent(t, name=name)
    for prefix, pattern in (("separation-", (0.5, -0.5)), ("centroid-", (1.0, 1.0))):
        if name.startswith(prefix):
            if n_sources != 2:
                raise ScenarioError(f"direction {name!r} requires exactly two sources")
            axis = _axis_index(name[len(prefix):])
            t = np.zeros(6)
            t[axis] = pattern[0]
            t[3 + axis] = pattern[1]
            return GeneralizedCoordinate.from_tangent(t, name=name)
    raise ScenarioError(f"unknown direction preset {name!r}")


def displace(
    scenario: Scenario, direction: GeneralizedCoordinate | np.ndarray, delta_theta: float
) -> Scenario:
    """Translate each source s by direction[3s:3s+3] * delta_theta.

    ``direction`` is the unit vector of a generalized coordinate; the step
    is in coordinate units.  Weights, collectors, k, z0 and mode are
    unchanged.
    """
    a = direction.a if isinstance(direction, GeneralizedCoordinate) else np.asarray(direction, float)
    if a.size != 3 * scenario.n_sources:
        raise ScenarioError(
            f"direction length {a.size} != 3 * {scenario.n_sources} sources"
        )
    if delta_theta == 0.0:
        return scenario
    positions = scenario.source_positions() + a.reshape(-1, 3) * delta_theta
    return scenario.with_source_positions(positions)


def amplitude(
    collector: Collector,
    source: SourcePoint,
    k: float,
    z0: float,
    mode: Mode,
    n_collectors: int,
) -> complex:
    """Single-photon amplitude gamma at one collector for one source.

    Exact mode returns the unnormalized 1/distance amplitude (column
    normalization is applied when the full matrix is assembled); paraxial
    mode returns the normalized 1/sqrt(N_C) entry directly.
    """
    if Mode(mode) is Mode.PARAXIAL:
        phi = (
            -k * (collector.u * source.x + collector.v * source.y) / z0
            - k * source.z * (collector.u**2 + collector.v**2) / (2.0 * z0**2)
        )
        return np.exp(1j * phi) / np.sqrt(n_collectors)
    distance = np.sqrt(
        (source.x - collector.u) ** 2
        + (source.y - collector.v) ** 2
        + (z0 + source.z) ** 2
    )
    if distance <= 0.0 or not np.isfinite(distance):
        raise DegenerateGeometryError(
            f"source {source} coincides with collector {collector}"
        )
    return np.exp(1j * k * distance) / distance


def build_amplitude_matrix(scenario: Scenario) -> np.ndarray:
    """(N_C, N_S) complex matrix with column s = sqrt(p_s) * normalized gamma(., s)."""
    nc, ns = scenario.n_collectors, scenario.n_sources
    C = np.empty((nc, ns), dtype=complex)
    weights = scenario.weights()
    for s, src in enumerate(scenario.sources):
        col = np.array(
            [amplitude(c, src, scenario.k, scenario.z0, scenario.mode, nc) for c in scenario.collectors]
        )
        norm = np.linalg.norm(col)
        if norm == 0.0 or not np.isfinite(norm):
            raise DegenerateGeometryError(f"zero-norm amplitude column for source {s}")
        C[:, s] = np.sqrt(weights[s]) * col / norm
    return C


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

_TOP_KEYS = {"mode", "k", "z0", "sources", "collectors"}
_SOURCE_KEYS = {"x", "y", "z", "weight"}
_COLLECTOR_KEYS = {"u", "v"}


def _check_keys(mapping: dict, allowed: set, required: set, context: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ScenarioError(f"unknown key {sorted(unknown)[0]!r} in {context}")
    missing = required - set(mapping)
    if missing:
        raise ScenarioError(f"missing key {sorted(missing)[0]!r} in {context}")


def scenario_from_dict(data: dict) -> Scenario:
    """Build a Scenario from parsed file data, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must contain a mapping at top level")
    _check_keys(data, _TOP_KEYS, _TOP_KEYS - {"mode"}, "scenario")
    sources = []
    if not isinstance(data["sources"], list) or not data["sources"]:
        raise ScenarioError("'sources' must be a non-empty list")
    for i, item in enumerate(data["sources"]):
        if not isinstance(item, dict):
            raise ScenarioError(f"source #{i} must be a mapping")
        _check_keys(item, _SOURCE_KEYS, {"x", "y", "z"}, f"source #{i}")
        sources.append(
            SourcePoint(
                x=float(item["x"]),
                y=float(item["y"]),
                z=float(item["z"]),
                weight=float(item.get("weight", 1.0)),
            )
        )
    collectors = []
    if not isinstance(data["collectors"], list) or not data["collectors"]:
        raise ScenarioError("'collectors' must be a non-empty list")
    for i, item in enumerate(data["collectors"]):
        if not isinstance(item, dict):
            raise ScenarioError(f"collector #{i} must be a mapping")
        _check_keys(item, _COLLECTOR_KEYS, _COLLECTOR_KEYS, f"collector #{i}")
        collectors.append(Collector(u=float(item["u"]), v=float(item["v"])))
    mode = data.get("mode", "paraxial")
    if not isinstance(mode, str) or mode.lower() not in (m.value for m in Mode):
        raise ScenarioError(f"mode must be 'exact' or 'paraxial', got {mode!r}")
    return Scenario(
        sources=tuple(sources),
        collectors=tuple(collectors),
        k=float(data["k"]),
        z0=float(data["z0"]),
        mode=Mode(mode.lower()),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "mode": scenario.mode.value,
        "k": scenario.k,
        "z0": scenario.z0,
        "sources": [
            {"x": s.x, "y": s.y, "z": s.z, "weight": s.weight} for s in scenario.sources
        ],
        "collectors": [{"u": c.u, "v": c.v} for c in scenario.collectors],
    }


def load_scenario(path) -> Scenario:
    """Load a scenario from a YAML key-value file (.scn)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"cannot parse scenario file {path}: {exc}") from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)


def scenario_digest(scenario: Scenario) -> str:
    """Stable hex digest of the scenario contents (for result documents)."""
    canonical = json.dumps(scenario_to_dict(scenario), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def disc_collector_grid(spacing: float, radius: float = 1.0) -> tuple[Collector, ...]:
    """Square-grid discretization of a circular aperture.

    Grid nodes at integer multiples of ``spacing`` (the origin included)
    are kept when they fall inside the disc.  The node-centered layout is
    inversion symmetric and its second moment converges to radius**2/4
    from above as the spacing shrinks.
    """
    if spacing <= 0 or radius <= 0:
        raise ScenarioError("spacing and radius must be positive")
    n = int(np.ceil(radius / spacing)) + 1
    pts = []
    r2 = radius * radius * (1 + 1e-12)
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            u, v = i * spacing, j * spacing
            if u * u + v * v <= r2:
                pts.append(Collector(u=u, v=v))
    return tuple(pts)
