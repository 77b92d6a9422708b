"""Multipoint distributions against exact continuous-time enumeration.

The oracle builds the full ring CTMC on gap configurations augmented
with per-observation jump counters (capped at the needed count) and
applies the absorbing masks at each observation time, so it is an
independent route sharing no code with the contour formulas.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from pkpz.bethe import RingParams, solve_bethe, z_from_scaled
from pkpz.errors import PoleAtRho, QuadratureStall
from pkpz.finite_dist import (
    DistResult,
    ObservationPoint,
    QuadConfig,
    cauchy_det,
    f_factor,
    h_factor,
    j_factor,
    multipoint_prob,
    resolve_measure,
    script_c,
    script_d,
    script_d_term,
)
from pkpz.symmetric import InitialConfig, energy_direct


def exact_joint(L, N, Y, points):
    """P(all x_{k_i}(t_i) >= a_i) by exponentiating the augmented CTMC."""
    ks = [(p[0] - 1) % N + 1 for p in points]
    ts = [p[1] for p in points]
    needs = [
        max(p[2] + ((p[0] - 1) // N) * L - Y[(p[0] - 1) % N], 0)
        for p in points
    ]
    m = len(points)
    shapes = [
        s for s in itertools.product(range(1, L), repeat=N) if sum(s) == L
    ]

    def transitions(shape):
        out = []
        for i in range(N):
            if shape[i] > 1:
                ns = list(shape)
                ns[i] -= 1
                ns[(i + 1) % N] += 1
                out.append((i, tuple(ns)))
        return out

    ranges = [range(n + 1) for n in needs]
    states = [(s,) + c for s in shapes for c in itertools.product(*ranges)]
    idx = {st: i for i, st in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for st_, i in idx.items():
        s, cs = st_[0], st_[1:]
        for pi, ns in transitions(s):
            nc = tuple(
                min(c + 1, needs[j]) if pi == ks[j] - 1 else c
                for j, c in enumerate(cs)
            )
            Q[i, idx[(ns,) + nc]] += 1.0
            Q[i, i] -= 1.0
    gaps = [Y[N - 1] + L - Y[0]] + [Y[i - 1] - Y[i] for i in range(1, N)]
    p = np.zeros(len(states))
    p[idx[(tuple(gaps),) + (0,) * m]] = 1.0
    tprev = 0.0
    for j in range(m):
        p = p @ expm(Q * (ts[j] - tprev))
        tprev = ts[j]
        for st_, i in idx.items():
            if st_[1 + j] < needs[j]:
                p[i] = 0.0
    return float(p.sum())


P42 = RingParams(4, 2)
Y42 = InitialConfig(P42, (-1, -3))
Y63 = InitialConfig(RingParams(6, 3), (-1, -3, -5))


def spec_at(params, frac, ang=0.0):
    zz = frac * np.exp(1j * ang)
    return solve_bethe(params, z_from_scaled(params, complex(zz)))


# ------------------------------------------------------------ small pieces


def test_observation_point_validation():
    with pytest.raises(ValueError):
        ObservationPoint(1, -0.5, 0)
    with pytest.raises(ValueError):
        ObservationPoint(1, 0.0, 0)
    with pytest.raises(ValueError):
        multipoint_prob(Y42, [(1, 1.0, 0), (1, 1.0, 0)])
    with pytest.raises(ValueError):
        multipoint_prob(Y42, [(1, 1.0, 0), (1, 0.5, 0)])


def test_quadconfig_validation():
    with pytest.raises(ValueError):
        QuadConfig(radii_fractions=(0.4, 0.6))
    with pytest.raises(ValueError):
        QuadConfig(radii_fractions=(1.2,))
    with pytest.raises(ValueError):
        QuadConfig(radii_fractions=(0.6,), nodes_per_circle=2)


def test_j_factor_values():
    assert j_factor(P42, 0.0) == 0.0
    w = 0.3 + 0.1j
    want = w * (w + 1) / (4 * (w + 0.5))
    assert abs(j_factor(P42, w) - want) < 1e-15
    with pytest.raises(PoleAtRho):
        j_factor(P42, -P42.rho)


def test_h_factor_zero_spec_is_unity():
    assert h_factor(None, 0.3 + 0.2j) == 1.0


def test_h_factor_finite_on_own_spectrum():
    spec = spec_at(P42, 0.5, 0.7)
    for w in np.concatenate([spec.left, spec.right]):
        val = h_factor(spec, w)
        assert np.isfinite(val) and abs(val) > 1e-12


def test_f_factor_equal_points_is_unity():
    p = ObservationPoint(2, 1.3, -1)
    for w in (-0.8 + 0.1j, 0.2 - 0.3j):
        assert abs(f_factor(P42, p, p, w) - 1.0) < 1e-15


def test_cauchy_det_closed_form():
    ws = [0.3, 0.5 + 0.2j]
    wps = [-0.4, -0.6 + 0.1j]
    ws_a, wps_a = np.array(ws), np.array(wps)
    num = (ws_a[1] - ws_a[0]) * (wps_a[0] - wps_a[1])
    den = np.prod([w - wp for w in ws for wp in wps])
    assert abs(cauchy_det(ws, wps) - num / den) < 1e-13
    assert cauchy_det([], []) == 1.0
    with pytest.raises(ValueError):
        cauchy_det([0.1], [])


# ------------------------------------------------------------ script pieces


def test_script_c_energy_argument_consistent():
    spec = spec_at(P42, 0.6, 0.3)
    pts = [ObservationPoint(1, 0.8, 0)]
    default = script_c(Y42, [spec], pts)
    supplied = script_c(Y42, [spec], pts, energy=energy_direct(Y42, spec))
    assert abs(default - supplied) < 1e-12 * abs(default)


def test_script_c_requires_nested_spectra():
    s1 = spec_at(P42, 0.6)
    s2 = spec_at(P42, 0.6, 0.1)
    pts = [ObservationPoint(1, 0.5, 0), ObservationPoint(1, 1.0, 0)]
    with pytest.raises(ValueError):
        script_c(Y42, [s1, s2], pts)
    with pytest.raises(ValueError):
        script_c(Y42, [s1], pts)


def test_script_d_complete_series_has_zero_tail():
    s1, s2 = spec_at(P42, 0.6, 0.2), spec_at(P42, 0.3, 0.5)
    pts = [ObservationPoint(1, 0.5, 0), ObservationPoint(1, 1.0, 1)]
    cfg = QuadConfig(radii_fractions=(0.6, 0.3), series_cap=2)
    val, tail = script_d(Y42, [s1, s2], pts, cfg)
    assert tail == 0.0
    assert np.isfinite(val)


def test_script_d_incomplete_series_tail_bounds_remainder():
    s1 = spec_at(Y63.params, 0.5, 0.4)
    pts = [ObservationPoint(1, 1.0, 0)]
    full = script_d(Y63, [s1], pts, QuadConfig(series_cap=3))[0]
    part, tail = script_d(Y63, [s1], pts, QuadConfig(series_cap=2))
    assert tail > 0.0
    assert abs(full - part) < 10.0 * tail


def test_script_d_term_oversized_tuple_vanishes():
    spec = spec_at(P42, 0.5, 0.1)
    pts = [ObservationPoint(1, 0.7, 0)]
    scale = max(abs(script_d_term(Y42, [spec], pts, (1,))), 1e-30)
    assert abs(script_d_term(Y42, [spec], pts, (3,))) < 1e-10 * scale


def rotate_spec(spec, phase):
    from pkpz.bethe import BetheSpectrum

    return BetheSpectrum(
        params=spec.params,
        z=spec.z * phase,
        roots=spec.roots,
        left=spec.left,
        right=spec.right,
        residual=spec.residual,
    )


def test_integrand_invariant_under_z_rotation():
    # all z dependence must enter through z^L: rotating any level's z by
    # a 2 pi / L phase keeps the same root set and the same integrand
    pts = [ObservationPoint(1, 0.5, 0), ObservationPoint(1, 1.0, 1)]
    cfg = QuadConfig(radii_fractions=(0.6, 0.3), series_cap=2)
    s1, s2 = spec_at(P42, 0.6, 0.2), spec_at(P42, 0.3, 0.5)
    s2r = rotate_spec(s2, np.exp(2j * np.pi / P42.L))
    base = script_c(Y42, [s1, s2], pts) * script_d(Y42, [s1, s2], pts, cfg)[0]
    turned = (
        script_c(Y42, [s1, s2r], pts) * script_d(Y42, [s1, s2r], pts, cfg)[0]
    )
    assert abs(base - turned) < 1e-10 * abs(base)


@settings(max_examples=20, deadline=None)
@given(j=st.integers(1, 3), ang=st.floats(0.05, 6.2))
def test_integrand_relabel_invariance(j, ang):
    # shifting the label by j periods and the cutoff by j rings is the
    # identity on the process, and the integrand matches it exactly
    s1, s2 = spec_at(P42, 0.6, ang), spec_at(P42, 0.3, 1.1 * ang)
    cfg = QuadConfig(radii_fractions=(0.6, 0.3), series_cap=2)
    base_pts = [ObservationPoint(1, 0.5, 0), ObservationPoint(2, 1.0, -2)]
    moved = [
        ObservationPoint(1 + j * 2, 0.5, 0 - j * 4),
        ObservationPoint(2, 1.0, -2),
    ]
    f0 = script_c(Y42, [s1, s2], base_pts)
    f0 *= script_d(Y42, [s1, s2], base_pts, cfg)[0]
    f1 = script_c(Y42, [s1, s2], moved)
    f1 *= script_d(Y42, [s1, s2], moved, cfg)[0]
    assert abs(f0 - f1) < 1e-9 * max(abs(f0), 1e-30)


# ------------------------------------------------------------ probabilities


CFG1 = QuadConfig(radii_fractions=(0.6,), nodes_per_circle=24)
CFG2 = QuadConfig(
    radii_fractions=(0.6, 0.3), nodes_per_circle=16, series_cap=2
)


def test_single_point_matches_enumeration():
    for k, t, a in [
        (1, 0.5, -1),
        (1, 0.5, 2),  # beyond the canonical window depth L - N
        (2, 1.2, -2),
        (2, 1.2, 0),
        (3, 0.8, -4),  # label past N reduces through the ring period
    ]:
        got = multipoint_prob(Y42, [(k, t, a)], CFG1)
        want = exact_joint(4, 2, (-1, -3), [(k, t, a)])
        assert abs(got.probability - want) < 1e-7
        assert got.imag_residue < 1e-8


def test_single_point_trivial_cutoff_is_one():
    got = multipoint_prob(Y42, [(1, 0.5, -1)], CFG1)
    assert abs(got.probability - exact_joint(4, 2, (-1, -3), [(1, 0.5, -1)])) < 1e-8


def test_single_point_monotone_in_cutoff():
    vals = [
        multipoint_prob(Y42, [(1, 0.8, a)], CFG1).probability
        for a in (-1, 0, 1)
    ]
    assert vals[0] >= vals[1] >= vals[2]
    assert vals[0] <= 1.0 + 1e-9 and vals[2] >= -1e-9


def test_two_point_matches_enumeration():
    cases = [
        ((1, 0.5, 0), (1, 1.0, 1)),
        ((2, 0.5, -2), (1, 1.0, 0)),  # unequal labels
        ((1, 0.5, -1), (1, 1.0, 2)),  # second point past the window depth
    ]
    for raw in cases:
        got = multipoint_prob(Y42, list(raw), CFG2)
        want = exact_joint(4, 2, (-1, -3), list(raw))
        assert abs(got.probability - want) < 1e-6
        assert got.imag_residue < 1e-7
        assert got.series_tail == 0.0


def test_two_point_first_jump_closed_form():
    # x_1(t1) >= y_1 + 1 forces x_1(t2) >= y_1 + 1, and the first particle
    # is never blocked here, so the joint collapses to 1 - e^{-t1}
    cfg = QuadConfig(
        radii_fractions=(0.6, 0.25), nodes_per_circle=12, series_cap=3
    )
    got = multipoint_prob(Y63, [(1, 0.5, 0), (1, 1.0, 0)], cfg)
    assert abs(got.probability - (1.0 - np.exp(-0.5))) < 1e-6


def test_three_point_matches_enumeration():
    raw = [(1, 0.4, -1), (1, 0.8, 0), (1, 1.2, 1)]
    pts = [ObservationPoint(*p) for p in raw]
    cfg = QuadConfig(
        radii_fractions=(0.8, 0.28, 0.1), nodes_per_circle=12, series_cap=2
    )
    from pkpz.finite_dist import _integrand_sum, _NodeCache

    cache = _NodeCache(Y42, cfg.pch_tol)
    val, _ = _integrand_sum(Y42, pts, cfg, [12, 12, 12], cache)
    want = exact_joint(4, 2, (-1, -3), raw)
    assert abs(val.real - want) < 5e-5
    assert abs(val.imag) < 5e-5


def test_quadrature_stall_raises():
    cfg = QuadConfig(
        radii_fractions=(0.6,), nodes_per_circle=4, quad_tol=1e-30
    )
    with pytest.raises(QuadratureStall):
        multipoint_prob(Y42, [(1, 0.7, 0)], cfg, node_cap=8)


def test_literal_measure_is_a_foil():
    # the raw-z measure annihilates the zz dependence and cannot match
    # the process; keeping it separate guards the calibration route
    point = [(1, 0.8, 0)]
    want = exact_joint(4, 2, (-1, -3), point)
    lit = multipoint_prob(Y42, point, CFG1, measure="literal")
    assert abs(lit.probability - want) > 1e-2
    with pytest.raises(ValueError):
        multipoint_prob(
            Y42,
            [(1, 0.5, 0), (1, 1.0, 0)],
            CFG2,
            measure="literal",
        )
    with pytest.raises(ValueError):
        multipoint_prob(Y42, point, CFG1, measure="unknown")


def test_resolve_measure_picks_scaled():
    name, result, (est, err) = resolve_measure(
        Y42, [(1, 0.8, 0)], CFG1, trials=4000, seed=7
    )
    assert name == "scaled"
    assert isinstance(result, DistResult)
    assert abs(result.probability - est) <= 5.0 * err
