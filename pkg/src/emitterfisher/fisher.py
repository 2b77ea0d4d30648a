"""Quantum and classical Fisher information for emitter localization.

The quantum side works through the trace-norm fidelity of the source
overlap matrix M = C(r)^dag C(r'); the quantum Fisher information of a
generalized coordinate is the curvature 8 (1 - ||M||_1) / dtheta^2 in
the limit of small displacements.  The classical side evaluates photon
counting statistics behind a fixed interferometer, either through the
probability-derivative formula sum_q (dp_q/dtheta)^2 / p_q or through
the classical fidelity between neighboring probability distributions.

Finite-difference limits use geometric step halving with Richardson
extrapolation; fidelities inside the limit are evaluated in extended
precision (see _precision) because 1 - f underflows double precision
long before the limit converges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import _precision
from .geometry import (
    Collector,
    GeneralizedCoordinate,
    Scenario,
    ScenarioError,
    displace,
)

# Default initial step of the QFI/CFI limit, in units of 1/k (keeps the
# phase increment per step small for any wavenumber).
STEP_SCALE = 1e-3
# Relative tolerance on successive Richardson extrapolants.
RICHARDSON_RTOL = 1e-6
# Maximum number of step halvings before reporting non-convergence.
MAX_HALVINGS = 8
# Unitarity tolerance for measurement matrices (Frobenius norm).
UNITARITY_TOL = 1e-10
# Dark-port thresholds: probabilities below DARK_P with derivative below
# DARK_DP contribute nothing (removable singularity); below DARK_P with a
# larger derivative the estimate is flagged as diverging.
DARK_P = 1e-14
DARK_DP = 1e-10


class NumericalError(RuntimeError):
    """A numerical routine failed (SVD breakdown, non-unitary input, ...)."""


@dataclass
class FisherReport:
    """Result of a Fisher-information evaluation for one coordinate.

    Values are reported for the physical parameter attached to the
    coordinate (see GeneralizedCoordinate.parameter_scale).  The step
    sequence holds the raw finite-difference estimates (step, estimate)
    before extrapolation.
    """

    direction: GeneralizedCoordinate
    qfi: float | None = None
    cfi: float | None = None
    step_sequence: list[tuple[float, float]] = field(default_factory=list)
    converged: bool = True
    diverging_at_point: bool = False

    @property
    def saturation_ratio(self) -> float | None:
        if self.qfi is None or self.cfi is None:
            return None
        if self.qfi == 0.0:
            return 1.0 if self.cfi == 0.0 else math.inf
        return self.cfi / self.qfi

    def to_dict(self) -> dict:
        return {
            "direction": list(map(float, self.direction.a)),
            "parameter_scale": self.direction.parameter_scale,
            "qfi": self.qfi,
            "cfi": self.cfi,
            "saturation_ratio": self.saturation_ratio,
            "converged": self.converged,
            "diverging_at_point": self.diverging_at_point,
            "steps": [[h, e] for h, e in self.step_sequence],
        }


# ---------------------------------------------------------------------------
# Fidelities
# ---------------------------------------------------------------------------


def overlap_matrix(C: np.ndarray, C_prime: np.ndarray) -> np.ndarray:
    """Source overlap matrix M = C^dag C' of two amplitude matrices."""
    C = np.asarray(C)
    C_prime = np.asarray(C_prime)
    if C.shape != C_prime.shape:
        raise ScenarioError(f"amplitude matrix shapes differ: {C.shape} vs {C_prime.shape}")
    return C.conj().T @ C_prime


def quantum_fidelity(M: np.ndarray) -> float:
    """Trace norm ||M||_1 = sum of singular values of the overlap matrix."""
    M = np.asarray(M)
    if not np.all(np.isfinite(M)):
        raise NumericalError("overlap matrix contains non-finite entries")
    try:
        return float(np.linalg.svd(M, compute_uv=False).sum())
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"SVD failed for overlap matrix (shape {M.shape}, "
            f"norm {np.linalg.norm(M):.3e})"
        ) from exc


def _as_matrix(R) -> np.ndarray:
    # Accepts a raw unitary matrix or an Interferometer-like object.
    return np.asarray(getattr(R, "matrix", R), dtype=complex)


def _check_unitary(R: np.ndarray) -> None:
    n = R.shape[0]
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ScenarioError(f"interferometer matrix must be square, got {R.shape}")
    resid = np.linalg.norm(R.conj().T @ R - np.eye(n))
    if resid > UNITARITY_TOL:
        raise NumericalError(f"matrix is not unitary: ||R^dag R - I|| = {resid:.3e}")


def detection_probabilities(C: np.ndarray, R) -> np.ndarray:
    """Photon detection probabilities p_q = sum_s |(R C)_{qs}|^2."""
    R = _as_matrix(R)
    _check_unitary(R)
    C = np.asarray(C)
    if R.shape[1] != C.shape[0]:
        raise ScenarioError(
            f"interferometer size {R.shape[0]} != collector count {C.shape[0]}"
        )
    return (np.abs(R @ C) ** 2).sum(axis=1)


def classical_fidelity(C: np.ndarray, C_prime: np.ndarray, R) -> float:
    """Bhattacharyya overlap sum_q sqrt(p_q p'_q) of the two count distributions."""
    p = detection_probabilities(C, R)
    p_prime = detection_probabilities(C_prime, R)
    return float(np.sqrt(p * p_prime).sum())


# ---------------------------------------------------------------------------
# Richardson extrapolation
# ---------------------------------------------------------------------------


def _richardson(
    estimates: Sequence[float], rel_tol: float, abs_tol: float = 0.0
) -> tuple[float, bool, int]:
    """Extrapolate a sequence E(h), E(h/2), ... with leading error O(h^2).

    Returns (value, converged, n_used); stops as soon as two successive
    diagonal extrapolants agree to rel_tol (or to abs_tol, which callers
    set to the numerical noise floor of the estimates so that
    zero-information directions converge to zero instead of chasing
    round-off).
    """
    diag_prev = None
    row_prev: list[float] = []
    for i, e in enumerate(estimates):
        row = [e]
        for m in range(1, i + 1):
            fac = 4.0**m
            row.append((fac * row[m - 1] - row_prev[m - 1]) / (fac - 1.0))
        diag = row[-1]
        if diag_prev is not None:
            if abs(diag - diag_prev) <= rel_tol * max(abs(diag), abs(diag_prev)) + abs_tol:
                if abs(diag) <= abs_tol:
                    diag = 0.0
                return diag, True, i + 1
        diag_prev = diag
        row_prev = row
    return diag_prev if diag_prev is not None else 0.0, False, len(list(estimates))


def _default_step(scenario: Scenario) -> float:
    return STEP_SCALE / scenario.k


# ---------------------------------------------------------------------------
# Quantum Fisher information
# ---------------------------------------------------------------------------


def qfi(
    scenario: Scenario,
    direction: GeneralizedCoordinate,
    *,
    initial_step: float | None = None,
    max_halvings: int = MAX_HALVINGS,
    rel_tol: float = RICHARDSON_RTOL,
) -> FisherReport:
    """Quantum Fisher information of the parameter attached to ``direction``.

    Evaluates 8 (1 - ||M(r - a h/2, r + a h/2)||_1) / h^2 on a halving
    step sequence and Richardson-extrapolates.  The report carries the
    raw per-step estimates and the convergence flag; non-convergence is
    reported, not raised.
    """
    if direction.n_sources != scenario.n_sources:
        raise ScenarioError("direction length does not match the scenario")
    h0 = initial_step if initial_step is not None else _default_step(scenario)
    estimates: list[float] = []
    steps: list[tuple[float, float]] = []
    value, converged = 0.0, False
    for i in range(max_halvings + 1):
        h = h0 / 2.0**i
        one_minus_f = _precision.one_minus_trace_norm_fidelity(
            displace(scenario, direction, -h / 2.0),
            displace(scenario, direction, +h / 2.0),
        )
        e = 8.0 * one_minus_f / h**2
        estimates.append(e)
        steps.append((h, e))
        # Noise floor of the extended-precision fidelity difference.
        noise = 8.0 * 1e-26 / h**2
        value, converged, _ = _richardson(estimates, rel_tol, abs_tol=noise)
        if converged:
            break
    scale2 = direction.parameter_scale**2
    return FisherReport(
        direction=direction,
        qfi=scale2 * value,
        step_sequence=[(h, scale2 * e) for h, e in steps],
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Classical Fisher information
# ---------------------------------------------------------------------------


def _cfi_at_step(scenario, direction, R, h) -> tuple[float, bool]:
    """One central-difference CFI estimate; bool flags a diverging dark port."""
    from .geometry import build_amplitude_matrix

    p0 = detection_probabilities(build_amplitude_matrix(scenario), R)
    p_plus = detection_probabilities(
        build_amplitude_matrix(displace(scenario, direction, +h)), R
    )
    p_minus = detection_probabilities(
        build_amplitude_matrix(displace(scenario, direction, -h)), R
    )
    dp = (p_plus - p_minus) / (2.0 * h)
    total, diverging = 0.0, False
    for pq, dq in zip(p0, dp):
        if pq < DARK_P:
            if abs(dq) < DARK_DP:
                continue
            diverging = True
            continue
        total += dq * dq / pq
    return total, diverging


def cfi(
    scenario: Scenario,
    direction: GeneralizedCoordinate,
    R,
    *,
    initial_step: float | None = None,
    max_halvings: int = MAX_HALVINGS,
    rel_tol: float = RICHARDSON_RTOL,
) -> FisherReport:
    """Classical Fisher information of photon counting behind interferometer R.

    Central-differences the detection probabilities over the same halving
    step schedule as the quantum limit, accumulating sum_q p'_q^2 / p_q at
    the base configuration.  Ports darker than 1e-14 contribute nothing
    when their derivative also vanishes; a dark port with a live
    derivative marks the estimate as diverging at this point.
    """
    if direction.n_sources != scenario.n_sources:
        raise ScenarioError("direction length does not match the scenario")
    R = _as_matrix(R)
    h0 = initial_step if initial_step is not None else _default_step(scenario)
    estimates: list[float] = []
    steps: list[tuple[float, float]] = []
    value, converged, diverging = 0.0, False, False
    n_ports = scenario.n_collectors
    for i in range(max_halvings + 1):
        h = h0 / 2.0**i
        e, bad = _cfi_at_step(scenario, direction, R, h)
        diverging = diverging or bad
        estimates.append(e)
        steps.append((h, e))
        # Probability round-off propagated through the central difference.
        noise = n_ports * n_ports * (1e-15 / h) ** 2
        value, converged, _ = _richardson(estimates, rel_tol, abs_tol=noise)
        if converged:
            break
    scale2 = direction.parameter_scale**2
    return FisherReport(
        direction=direction,
        cfi=math.inf if diverging else scale2 * value,
        step_sequence=[(h, scale2 * e) for h, e in steps],
        converged=converged and not diverging,
        diverging_at_point=diverging,
    )


def information_report(
    scenario: Scenario, direction: GeneralizedCoordinate, R, **kwargs
) -> FisherReport:
    """Joint report with both qfi and cfi (and hence the saturation ratio)."""
    q = qfi(scenario, direction, **kwargs)
    c = cfi(scenario, direction, R, **kwargs)
    return FisherReport(
        direction=direction,
        qfi=q.qfi,
        cfi=c.cfi,
        step_sequence=q.step_sequence,
        converged=q.converged and c.converged,
        diverging_at_point=c.diverging_at_point,
    )


# ---------------------------------------------------------------------------
# Paraxial generator route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorMoments:
    """First and second moments of the displacement generators.

    Generators over the uniform collector state: g_x = k u / z0,
    g_y = k v / z0, g_z = k (u^2 + v^2) / (2 z0^2).  The x/y entries of
    the covariance carry 1/length^2; entries mixing z carry an extra
    1/length per z index (g_z is second order in the aperture).
    """

    mean: np.ndarray
    covariance: np.ndarray


def _collector_array(collectors) -> np.ndarray:
    if isinstance(collectors, Scenario):
        return collectors.collector_positions()
    arr = np.asarray(
        [[c.u, c.v] if isinstance(c, Collector) else (c[0], c[1]) for c in collectors],
        dtype=float,
    )
    return arr


def generator_moments(collectors, k: float, z0: float) -> GeneratorMoments:
    """Sample moments of (g_x, g_y, g_z) over the collector set."""
    uv = _collector_array(collectors)
    if uv.shape[0] < 1:
        raise ScenarioError("need at least one collector")
    u, v = uv[:, 0], uv[:, 1]
    g = np.stack([k * u / z0, k * v / z0, k * (u**2 + v**2) / (2.0 * z0**2)])
    mean = g.mean(axis=1)
    centered = g - mean[:, None]
    cov = centered @ centered.T / g.shape[1]
    cov = 0.5 * (cov + cov.T)
    return GeneratorMoments(mean=mean, covariance=cov)


def optimal_axial_phase(
    scenario: Scenario,
    direction: GeneralizedCoordinate | None = None,
    *,
    grid_points: int = 181,
) -> float:
    """Splitter phase maximizing the CFI of a direction on a two-collector pair.

    The single tuning phase of the phase-plus-splitter measurement must be
    retuned per parameter: zero is best for the transverse separation, but
    the axial separation (the default direction here) generally wants a
    different setting.  A coarse phase grid is scanned and the best point
    refined parabolically.
    """
    from .interferometer import beam_splitter_with_phase

    if scenario.n_collectors != 2:
        raise ScenarioError("phase tuning applies to two-collector scenarios")
    if direction is None:
        from .geometry import named_direction

        direction = named_direction("separation-z", scenario.n_sources)

    def value(alpha: float) -> float:
        report = cfi(scenario, direction, beam_splitter_with_phase(alpha))
        return report.cfi if math.isfinite(report.cfi) else 0.0

    grid = np.linspace(-math.pi, math.pi, grid_points, endpoint=False)
    values = [value(a) for a in grid]
    best = int(np.argmax(values))
    step = grid[1] - grid[0]
    a, b, c = grid[best] - step, grid[best], grid[best] + step
    fa, fb, fc = value(a), values[best], value(c)
    denom = (fa - 2 * fb + fc)
    if denom < 0:  # concave: parabolic vertex
        return float(b + 0.5 * step * (fa - fc) / denom)
    return float(b)


class ParaxialTarget(str, Enum):
    """Closed-form paraxial QFI matrix variants."""

    SINGLE_SOURCE = "single_source"
    TWO_SOURCE_SEPARATION = "two_source_separation"
    TWO_SOURCE_CENTROID = "two_source_centroid"


def _is_inversion_symmetric(uv: np.ndarray, tol: float = 1e-9) -> bool:
    remaining = list(range(len(uv)))
    while remaining:
        i = remaining.pop()
        p = uv[i]
        if np.linalg.norm(p) <= tol:
            continue
        match = None
        for j in remaining:
            if np.linalg.norm(uv[j] + p) <= tol:
                match = j
                break
        if match is None:
            return False
        remaining.remove(match)
    return True


def paraxial_qfi_matrix(collectors, k: float, z0: float, target: ParaxialTarget) -> np.ndarray:
    """Closed-form 3x3 QFI matrix from generator moments (no finite differences).

    single source: 4 * covariance; two-source separation: covariance;
    two-source centroid: 4 * covariance, valid only for inversion-symmetric
    collector sets (validated), where the transverse entries reduce to the
    raw second moments.
    """
    target = ParaxialTarget(target)
    moments = generator_moments(collectors, k, z0)
    if target is ParaxialTarget.TWO_SOURCE_CENTROID:
        uv = _collector_array(collectors)
        if not _is_inversion_symmetric(uv):
            raise ScenarioError(
                "centroid closed form requires an inversion-symmetric collector set"
            )
        return 4.0 * moments.covariance
    if target is ParaxialTarget.TWO_SOURCE_SEPARATION:
        return moments.covariance.copy()
    return 4.0 * moments.covariance


# ---------------------------------------------------------------------------
# Closed-form vs finite-difference cross check
# ---------------------------------------------------------------------------


@dataclass
class ConsistencyReport:
    target: ParaxialTarget
    closed_form: np.ndarray
    finite_difference: np.ndarray
    relative_errors: np.ndarray

    @property
    def max_relative_error(self) -> float:
        return float(np.nanmax(self.relative_errors))


def _tangent_for(target: ParaxialTarget, axis: int) -> np.ndarray:
    if target is ParaxialTarget.SINGLE_SOURCE:
        t = np.zeros(3)
        t[axis] = 1.0
    elif target is ParaxialTarget.TWO_SOURCE_SEPARATION:
        t = np.zeros(6)
        t[axis], t[3 + axis] = 0.5, -0.5
    else:
        t = np.zeros(6)
        t[axis], t[3 + axis] = 1.0, 1.0
    return t


def _fd_quadratic_form(scenario: Scenario, tangent: np.ndarray, **kwargs) -> float:
    report = qfi(scenario, GeneralizedCoordinate.from_tangent(tangent), **kwargs)
    return report.qfi


def qfi_matrix_consistency(
    scenario: Scenario,
    target: ParaxialTarget,
    *,
    entries: Sequence[tuple[int, int]] | None = None,
    **kwargs,
) -> ConsistencyReport:
    """Compare the paraxial closed form against the trace-norm limit.

    Diagonal entries come from single-direction finite differences; the
    off-diagonal ones from the polarization identity
    I_ab = (Q(t_a + t_b) - Q(t_a) - Q(t_b)) / 2.
    """
    target = ParaxialTarget(target)
    expected_ns = 1 if target is ParaxialTarget.SINGLE_SOURCE else 2
    if scenario.n_sources != expected_ns:
        raise ScenarioError(
            f"{target.value} check requires {expected_ns} source(s), "
            f"scenario has {scenario.n_sources}"
        )
    closed = paraxial_qfi_matrix(scenario.collectors, scenario.k, scenario.z0, target)
    fd = np.full((3, 3), np.nan)
    wanted = list(entries) if entries is not None else [
        (a, b) for a in range(3) for b in range(a, 3)
    ]
    diag_cache: dict[int, float] = {}

    def diag(axis: int) -> float:
        if axis not in diag_cache:
            diag_cache[axis] = _fd_quadratic_form(scenario, _tangent_for(target, axis), **kwargs)
        return diag_cache[axis]

    for a, b in wanted:
        if a == b:
            fd[a, a] = diag(a)
        else:
            combo = _fd_quadratic_form(
                scenario, _tangent_for(target, a) + _tangent_for(target, b), **kwargs
            )
            fd[a, b] = fd[b, a] = 0.5 * (combo - diag(a) - diag(b))
    # Entries far below the dominant one are held to an absolute standard
    # of 1e-3 * scale so that exact zeros do not produce spurious relative
    # errors from round-off.
    scale = np.max(np.abs(closed))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(fd - closed) / np.maximum(np.abs(closed), 1e-3 * scale)
    rel[np.isnan(fd)] = np.nan
    return ConsistencyReport(
        target=target, closed_form=closed, finite_difference=fd, relative_errors=rel
    )
