"""Geometry, amplitude model and scenario-file tests."""

import math

import numpy as np
import pytest

from emitterfisher import (
    Collector,
    DegenerateGeometryError,
    GeneralizedCoordinate,
    Mode,
    Scenario,
    ScenarioError,
    SourcePoint,
    amplitude,
    build_amplitude_matrix,
    displace,
    load_scenario,
    named_direction,
    save_scenario,
    scenario_digest,
)
from emitterfisher.geometry import scenario_from_dict

COLUMN_TOL = 1e-12


def make_scenario(sources, collectors, k=1.0, z0=100.0, mode=Mode.PARAXIAL):
    return Scenario(
        sources=tuple(SourcePoint(*s) for s in sources),
        collectors=tuple(Collector(*c) for c in collectors),
        k=k,
        z0=z0,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# amplitude
# ---------------------------------------------------------------------------


def test_paraxial_on_axis_amplitude():
    # On-axis source: zero phase, modulus 1/sqrt(N_C).
    gamma = amplitude(Collector(3.0, -2.0), SourcePoint(0, 0, 0), 1.0, 100.0, Mode.PARAXIAL, 2)
    assert gamma == pytest.approx(1 / math.sqrt(2))


def test_paraxial_phase_linear_in_x():
    k, z0, u, x = 2.0, 50.0, 3.0, 0.4
    gamma = amplitude(Collector(u, 0.0), SourcePoint(x, 0, 0), k, z0, Mode.PARAXIAL, 4)
    assert np.angle(gamma) == pytest.approx(-k * u * x / z0)


def test_exact_unit_distance_phase():
    # k = 1, distance 1 -> phase exactly 1 radian, modulus 1.
    gamma = amplitude(Collector(0.0, 0.0), SourcePoint(0, 0, 0), 1.0, 1.0, Mode.EXACT, 1)
    assert np.angle(gamma) == pytest.approx(1.0)
    assert abs(gamma) == pytest.approx(1.0)


def test_exact_source_on_collector_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        amplitude(Collector(0.0, 0.0), SourcePoint(0, 0, -1.0), 1.0, 1.0, Mode.EXACT, 1)


# ---------------------------------------------------------------------------
# build_amplitude_matrix
# ---------------------------------------------------------------------------


def test_on_axis_column_symmetric_collectors():
    s = make_scenario([(0, 0, 0)], [(5, 0), (-5, 0)])
    C = build_amplitude_matrix(s)
    np.testing.assert_allclose(C[:, 0], [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)


def test_equal_weight_column_norms():
    s = make_scenario([(0.1, 0, 0), (-0.1, 0, 0)], [(5, 0), (-5, 0), (1, 2)])
    C = build_amplitude_matrix(s)
    for col in C.T:
        assert np.sum(np.abs(col) ** 2) == pytest.approx(0.5, abs=COLUMN_TOL)


def test_exact_mode_inverse_distance_oracle():
    # Moduli proportional to inverse distances, renormalized per column.
    s = make_scenario([(0.3, -0.1, 0.2)], [(5, 1), (-2, -7), (0.5, 3)], mode=Mode.EXACT)
    C = build_amplitude_matrix(s)
    dists = np.array(
        [
            math.sqrt((0.3 - u) ** 2 + (-0.1 - v) ** 2 + (100.0 + 0.2) ** 2)
            for u, v in [(5, 1), (-2, -7), (0.5, 3)]
        ]
    )
    inv = 1.0 / dists
    expected = inv / np.linalg.norm(inv)
    np.testing.assert_allclose(np.abs(C[:, 0]), expected, atol=1e-14)
    assert np.sum(np.abs(C[:, 0]) ** 2) == pytest.approx(1.0, abs=COLUMN_TOL)


@pytest.mark.parametrize("mode", [Mode.PARAXIAL, Mode.EXACT])
def test_column_norm_equals_weight(mode):
    rng = np.random.default_rng(42)
    for _ in range(10):
        ns, nc = rng.integers(1, 4), rng.integers(2, 7)
        weights = rng.uniform(0.2, 2.0, ns)
        s = Scenario(
            sources=tuple(
                SourcePoint(*rng.normal(0, 0.5, 3), weight=w) for w in weights
            ),
            collectors=tuple(Collector(*rng.normal(0, 5, 2)) for _ in range(nc)),
            k=rng.uniform(0.5, 2.0),
            z0=100.0,
            mode=mode,
        )
        C = build_amplitude_matrix(s)
        np.testing.assert_allclose(
            (np.abs(C) ** 2).sum(axis=0), s.weights(), atol=COLUMN_TOL
        )


def test_weights_default_equal_and_normalized():
    s = make_scenario([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(1, 0)])
    np.testing.assert_allclose(s.weights(), [1 / 3] * 3)
    s2 = Scenario(
        sources=(SourcePoint(0, 0, 0, weight=3.0), SourcePoint(1, 0, 0, weight=1.0)),
        collectors=(Collector(1, 0),),
        k=1.0,
        z0=10.0,
    )
    np.testing.assert_allclose(s2.weights(), [0.75, 0.25])


def _phase(c, s, k, z0, mode):
    if mode is Mode.PARAXIAL:
        return np.angle(amplitude(c, s, k, z0, mode, 2))
    return k * math.sqrt((s.x - c.u) ** 2 + (s.y - c.v) ** 2 + (z0 + s.z) ** 2)


def _second_difference(src, ca, cb, k, z0, mode):
    # Source-dependent part of the collector phase difference (the
    # source-independent part is a detection-invariant mode phase).
    origin = SourcePoint(0.0, 0.0, 0.0)
    return (_phase(ca, src, k, z0, mode) - _phase(cb, src, k, z0, mode)) - (
        _phase(ca, origin, k, z0, mode) - _phase(cb, origin, k, z0, mode)
    )


@pytest.mark.parametrize(
    "scale_frac,with_axial",
    [(1e-3, False), (1e-4, True)],
    ids=["transverse-1e-3", "full3d-1e-4"],
)
def test_paraxial_consistency_with_exact_phases(scale_frac, with_axial):
    # In-plane sources agree to O(scale^2); axial offsets add O(z/z0)
    # relative terms, so the 3-D check runs at a smaller scale.
    k, z0 = 1.0, 100.0
    scale = scale_frac * z0
    rng = np.random.default_rng(7)
    for _ in range(20):
        u1, v1, u2, v2 = rng.uniform(-scale, scale, 4)
        x, y = rng.uniform(-scale, scale, 2)
        z = rng.uniform(-scale, scale) if with_axial else 0.0
        src = SourcePoint(x, y, z)
        ca, cb = Collector(u1, v1), Collector(u2, v2)
        exact = _second_difference(src, ca, cb, k, z0, Mode.EXACT)
        parax = _phase(ca, src, k, z0, Mode.PARAXIAL) - _phase(cb, src, k, z0, Mode.PARAXIAL)
        assert exact == pytest.approx(parax, rel=1e-4, abs=1e-18)


# ---------------------------------------------------------------------------
# displace
# ---------------------------------------------------------------------------


def test_displace_zero_is_identity():
    s = make_scenario([(0.1, 0, 0), (-0.1, 0, 0)], [(5, 0), (-5, 0)])
    d = named_direction("separation-x", 2)
    assert displace(s, d, 0.0) is s


def test_displace_single_axis():
    s = make_scenario([(0.0, 0, 0)], [(5, 0)])
    d = GeneralizedCoordinate(np.array([1.0, 0.0, 0.0]))
    moved = displace(s, d, 0.1)
    assert moved.sources[0].x == pytest.approx(0.1)
    assert moved.sources[0].y == 0.0


def test_displace_separation_componentwise():
    s = make_scenario([(0.0, 0, 0), (0.0, 0, 0)], [(5, 0), (-5, 0)])
    a = np.array([1, 0, 0, -1, 0, 0]) / math.sqrt(2)
    eps = 0.3
    moved = displace(s, GeneralizedCoordinate(a), eps)
    assert moved.sources[0].x == pytest.approx(eps / math.sqrt(2))
    assert moved.sources[1].x == pytest.approx(-eps / math.sqrt(2))


def test_displace_round_trip_bitwise():
    s = make_scenario([(0.125, 0.5, -0.25), (-0.375, 0.0, 1.0)], [(5, 0), (-5, 0)])
    a = np.zeros(6)
    a[0] = 1.0
    d = GeneralizedCoordinate(a)
    eps = 0.25  # exactly representable
    back = displace(displace(s, d, eps), d, -eps)
    assert back.source_positions().tolist() == s.source_positions().tolist()


# ---------------------------------------------------------------------------
# directions
# ---------------------------------------------------------------------------


def test_named_directions():
    d = named_direction("separation-x", 2)
    np.testing.assert_allclose(d.a, np.array([1, 0, 0, -1, 0, 0]) / math.sqrt(2))
    assert d.parameter_scale == pytest.approx(1 / math.sqrt(2))
    c = named_direction("centroid-y", 2)
    np.testing.assert_allclose(c.a, np.array([0, 1, 0, 0, 1, 0]) / math.sqrt(2))
    assert c.parameter_scale == pytest.approx(math.sqrt(2))
    x = named_direction("x", 1)
    assert x.parameter_scale == 1.0
    with pytest.raises(ScenarioError):
        named_direction("separation-x", 3)
    with pytest.raises(ScenarioError):
        named_direction("sideways", 1)


def test_direction_must_be_unit():
    with pytest.raises(ScenarioError):
        GeneralizedCoordinate(np.array([1.0, 1.0, 0.0]))
    d = GeneralizedCoordinate.from_tangent([2.0, 0.0, 0.0])
    assert d.parameter_scale == pytest.approx(2.0)
    np.testing.assert_allclose(d.a, [1, 0, 0])


# ---------------------------------------------------------------------------
# scenario validation and files
# ---------------------------------------------------------------------------


def test_scenario_invariants():
    with pytest.raises(ScenarioError):
        make_scenario([], [(1, 0)])
    with pytest.raises(ScenarioError):
        make_scenario([(0, 0, 0)], [])
    with pytest.raises(ScenarioError):
        make_scenario([(0, 0, 0)], [(1, 0)], k=-1.0)
    with pytest.raises(ScenarioError):
        make_scenario([(0, 0, 0)], [(1, 0)], z0=0.0)
    with pytest.raises(ScenarioError):
        SourcePoint(0, 0, 0, weight=-0.5)


def test_paraxial_scale_warning():
    with pytest.warns(UserWarning, match="paraxial"):
        make_scenario([(20.0, 0, 0)], [(5, 0)], z0=100.0)


def test_scenario_file_round_trip(tmp_path):
    s = make_scenario([(0.1, 0.2, -0.3), (-0.1, 0, 0)], [(5, 0), (-5, 1)], k=2.0, z0=80.0)
    path = tmp_path / "roundtrip.scn"
    save_scenario(s, path)
    loaded = load_scenario(path)
    assert loaded == s
    assert scenario_digest(loaded) == scenario_digest(s)


def test_scenario_file_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.scn"
    path.write_text(
        "mode: paraxial\nk: 1.0\nz0: 100.0\nwavelength: 0.5\n"
        "sources:\n  - {x: 0, y: 0, z: 0}\ncollectors:\n  - {u: 1, v: 0}\n"
    )
    with pytest.raises(ScenarioError, match="wavelength"):
        load_scenario(path)


def test_scenario_file_unknown_nested_key_rejected():
    data = {
        "mode": "paraxial",
        "k": 1.0,
        "z0": 100.0,
        "sources": [{"x": 0, "y": 0, "z": 0, "brightness": 2}],
        "collectors": [{"u": 1, "v": 0}],
    }
    with pytest.raises(ScenarioError, match="brightness"):
        scenario_from_dict(data)


def test_scenario_file_missing_key_rejected():
    data = {
        "mode": "exact",
        "k": 1.0,
        "z0": 100.0,
        "sources": [{"x": 0, "y": 0}],
        "collectors": [{"u": 1, "v": 0}],
    }
    with pytest.raises(ScenarioError, match="z"):
        scenario_from_dict(data)


def test_scenario_weight_optional(tmp_path):
    path = tmp_path / "weights.scn"
    path.write_text(
        "mode: exact\nk: 1.0\nz0: 50.0\n"
        "sources:\n  - {x: 0.1, y: 0, z: 0}\n  - {x: -0.1, y: 0, z: 0, weight: 3}\n"
        "collectors:\n  - {u: 1, v: 0}\n  - {u: -1, v: 0}\n"
    )
    s = load_scenario(path)
    np.testing.assert_allclose(s.weights(), [0.25, 0.75])
    assert s.mode is Mode.EXACT
