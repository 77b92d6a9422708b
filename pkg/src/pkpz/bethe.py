"""Bethe polynomial q_z(w) = w^N (w+1)^(L-N) - z^L: roots, partition, identities.

For 0 < |z| < r0 = rho^rho (1-rho)^(1-rho) the L roots split into L-N left
roots with Re(w) < -rho and N right roots with Re(w) > -rho.  All residual
arithmetic uses the scaled form

    q_z(w) = (-1)^N r0^L (E(w) - zz),
    E(w)   = (w/(-rho))^N ((w+1)/(1-rho))^(L-N),
    zz     = (-1)^N z^L / r0^L,

which stays inside double range for any L (z^L and r0^L separately underflow
near L ~ 1000 already).  E is evaluated as exp of a log sum; with integer
exponents the value is branch independent, so principal logs are safe even
when w+1 crosses the negative real axis.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceFailure,
    DomainViolation,
    IdentityViolation,
    RootsNearCritical,
)

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RingParams:
    """Ring geometry: period L, particles per period N."""

    L: int
    N: int
    rho: float = field(init=False)
    r0: float = field(init=False)

    def __post_init__(self):
        if not (0 < self.N < self.L):
            raise ValueError(f"need 0 < N < L, got N={self.N}, L={self.L}")
        rho = self.N / self.L
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "r0", rho**rho * (1.0 - rho) ** (1.0 - rho))


@dataclass(frozen=True, eq=False)
class BetheSpectrum:
    """All L roots of q_z, partitioned by the sign of Re(w) + rho.

    left/right are each sorted by angle around their lobe center (-1 and 0),
    roots is their concatenation, residual is the max relative residual
    |q_z(w)| / |z|^L over all roots.
    """

    params: RingParams
    z: complex
    roots: np.ndarray
    left: np.ndarray
    right: np.ndarray
    residual: float

    @property
    def log_zz(self) -> complex:
        return log_scaled_z(self.params, self.z)

    @property
    def zz(self) -> complex:
        return cmath.exp(self.log_zz)


def log_scaled_z(params: RingParams, z: complex) -> complex:
    """log of zz = (-1)^N z^L / r0^L (imaginary part not reduced)."""
    if z == 0:
        raise DomainViolation("z must be nonzero")
    return params.L * (cmath.log(z) - math.log(params.r0)) + 1j * math.pi * params.N


def scaled_z(params: RingParams, z: complex) -> complex:
    return cmath.exp(log_scaled_z(params, z))


def z_from_scaled(params: RingParams, zz: complex) -> complex:
    """Principal representative z with (-1)^N z^L / r0^L = zz."""
    if zz == 0:
        raise DomainViolation("zz must be nonzero")
    return params.r0 * cmath.exp(
        (cmath.log(zz) + 1j * math.pi * params.N) / params.L
    )


def log_scaled_monomial(params: RingParams, w) -> np.ndarray:
    """log E(w) with E(w) = (-1)^N w^N (w+1)^(L-N) / r0^L.

    E equals zz exactly when w is a Bethe root; for a right root v this is
    the per-period decay factor of the hitting expectation series.
    """
    w = np.asarray(w, dtype=complex)
    rho = params.rho
    return params.N * np.log(w / (-rho)) + (params.L - params.N) * np.log(
        (w + 1.0) / (1.0 - rho)
    )


def in_left_lobe(params: RingParams, w) -> bool:
    """Strict interior of the left lobe of {|E| < 1} (the one around -1).

    The line Re w = -rho lies entirely in {|E| >= 1}, so combining the
    half-plane test with |E| < 1 identifies the lobe exactly.
    """
    w = complex(w)
    if w == -1.0:
        return True
    return w.real < -params.rho and float(
        log_scaled_monomial(params, w).real
    ) < 0.0


def in_right_lobe(params: RingParams, w) -> bool:
    """Strict interior of the right lobe of {|E| < 1} (the one around 0)."""
    w = complex(w)
    if w == 0.0:
        return True
    return w.real > -params.rho and float(
        log_scaled_monomial(params, w).real
    ) < 0.0


def _wrap_angle(x):
    return x - _TWO_PI * np.round(x / _TWO_PI)


def _log_residual(params: RingParams, log_zz: complex, w) -> np.ndarray:
    """s with exp(s) = E(w)/zz and Im(s) reduced to (-pi, pi].

    Roots satisfy s = 0; |exp(s) - 1| = |q_z(w)| / |z|^L.
    """
    s = log_scaled_monomial(params, w) - log_zz
    return s.real + 1j * _wrap_angle(s.imag)


def _polish(params: RingParams, log_zz: complex, seeds, target: float,
            max_iter: int = 60):
    """Per-root Newton against the root's own disk target under the lobe map.

    Each seed is assigned the phase index of the nearest count-th root of zz
    under its side's conformal map; Newton then cannot hop to a neighboring
    root, which plain w-space Newton on q_z does when the lobes are tiny.
    """
    seeds = np.asarray(seeds, dtype=complex)
    # plain Newton sweeps first: coarse seeds (companion eigenvalues) can sit
    # half a spacing away from their root, where the phase index is ambiguous
    w0 = seeds.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(12):
            bad = ~np.isfinite(w0) | (w0 == 0) | (w0 == -1.0)
            if bad.any():
                w0[bad] = seeds[bad] * (1 + 1e-9) + 1e-12j
            s = _log_residual(params, log_zz, w0)
            if np.all(np.abs(np.expm1(s)) <= target):
                break
            w0 = w0 - s / (params.N / w0 + (params.L - params.N) / (w0 + 1.0))
    bad = ~np.isfinite(w0)
    if bad.any():
        w0[bad] = seeds[bad]
    seeds = w0
    theta = float(_wrap_angle(log_zz.imag))
    out = []
    for side in ("left", "right"):
        if side == "left":
            sel = seeds.real + params.rho < 0
        else:
            sel = seeds.real + params.rho >= 0
        if not sel.any():
            continue
        start = seeds[sel]
        count, f, df = _lobe_map(params, side)
        r = math.exp(log_zz.real / count)
        m = np.round((np.angle(f(start)) * count - theta) / _TWO_PI)
        if len(np.unique(m % count)) != len(start):
            raise ConvergenceFailure("ambiguous seed-to-root assignment")
        targets = r * np.exp(1j * (theta + _TWO_PI * m) / count)
        tol = max(target / count, 4e-16) * r
        ws = start.copy()
        for _ in range(max_iter):
            bad = ~np.isfinite(ws) | (ws == 0) | (ws == -1.0)
            if bad.any():
                ws[bad] = start[bad] * (1 + 1e-9) + 1e-12j
            fw = f(ws)
            err = np.abs(fw - targets)
            if np.all(err <= tol):
                break
            step = (fw - targets) / df(ws, fw)
            ws = np.where(err > tol, ws - step, ws)
        out.append(ws)
    w = np.concatenate(out)
    if np.all(np.isfinite(w)):
        res = np.abs(np.expm1(_log_residual(params, log_zz, w)))
    else:
        res = np.full(w.shape, np.inf)
    return w, res


def _companion_seeds(params: RingParams, z: complex) -> np.ndarray:
    L, N = params.L, params.N
    if L * math.log(abs(z)) < -668.0:
        raise DomainViolation("z^L underflows in the companion route")
    # coefficients of w^N (w+1)^(L-N) - z^L, descending powers
    coeffs = np.zeros(L + 1, dtype=complex)
    for k in range(L - N + 1):
        coeffs[L - (N + k)] = math.comb(L - N, k)
    coeffs[L] -= z**L
    return np.roots(coeffs)


def _quadratic_seeds(params: RingParams, z: complex) -> np.ndarray:
    # half filling: w(w+1) = z^2 exp(2 pi i m / N), solved exactly
    N = params.N
    zeta = z * z * np.exp(2j * math.pi * np.arange(N) / N)
    disc = np.sqrt(1.0 + 4.0 * zeta)  # Re > 0 since |4 zeta| < 1
    return np.concatenate([(-1.0 + disc) / 2.0, (-1.0 - disc) / 2.0])


def _lobe_map(params: RingParams, side: str):
    """Conformal map of one root lobe onto a disk; the roots on that side
    are the preimages of the count-th roots of zz."""
    rho = params.rho
    L, N = params.L, params.N
    if side == "right":
        count = N
        expo = (L - N) / N

        def f(w):
            return (w / -rho) * np.exp(expo * np.log((w + 1.0) / (1.0 - rho)))

    else:
        count = L - N
        expo = N / (L - N)

        def f(w):
            return ((w + 1.0) / (1.0 - rho)) * np.exp(expo * np.log(w / -rho))

    def df(w, fw):
        return fw * L * (w + rho) / (count * w * (w + 1.0))

    return count, f, df


def _bisect_anchor(params: RingParams, side: str, r: float) -> float:
    """Real solution of map = r on (-rho, 0) (right) or (-1, -rho) (left)."""
    rho = params.rho
    _, f, _ = _lobe_map(params, side)
    if side == "right":
        lo, hi = -rho * (1 - 1e-12), -1e-300
        # map decreases from 1 to 0 as w runs from -rho to 0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(f(np.asarray(mid, dtype=complex)).real) > r:
                lo = mid
            else:
                hi = mid
    else:
        lo, hi = -1 + 1e-14, -rho * (1 + 1e-12)
        # map increases from 0 to 1 as w runs from -1 to -rho
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(f(np.asarray(mid, dtype=complex)).real) < r:
                lo = mid
            else:
                hi = mid
    return 0.5 * (lo + hi)


def _continue_phase(w, ph0, ph1, r, f, df, depth=0):
    """Track the preimage of r e^{i phase} from phase ph0 to ph1."""
    target = r * cmath.exp(1j * ph1)
    wn = complex(w)
    for _ in range(30):
        fw = complex(f(np.asarray(wn, dtype=complex)))
        d = complex(df(np.asarray(wn, dtype=complex), fw))
        # one ulp of w moves f by |df| ulp(w); below that the residual
        # cannot be driven further, so the tolerance is floored there
        tol = max(1e-8 * r, 4.0 * abs(d) * 2.3e-16 * max(1.0, abs(wn)))
        if abs(fw - target) <= tol:
            return wn
        wn = wn - (fw - target) / d
        if not cmath.isfinite(wn):
            break
    if depth >= 24:
        raise ConvergenceFailure(f"phase continuation stalled near {ph1:.6f}")
    mid = 0.5 * (ph0 + ph1)
    w = _continue_phase(w, ph0, mid, r, f, df, depth + 1)
    return _continue_phase(w, mid, ph1, r, f, df, depth + 1)


def _levelcurve_seeds(params: RingParams, z: complex, log_zz: complex) -> np.ndarray:
    if params.L == 2 * params.N:
        return _quadratic_seeds(params, z)
    theta = float(_wrap_angle(log_zz.imag))
    seeds = []
    for side in ("right", "left"):
        count, f, df = _lobe_map(params, side)
        r = math.exp(log_zz.real / count)
        w = _bisect_anchor(params, side, r)
        prev = 0.0
        for m in range(count):
            ph = (theta + _TWO_PI * m) / count
            w = _continue_phase(w, prev, ph, r, f, df)
            seeds.append(w)
            prev = ph
    return np.asarray(seeds, dtype=complex)


def _partition(params: RingParams, roots: np.ndarray, crit_tol: float = 1e-8):
    d = roots.real + params.rho
    closest = float(np.min(np.abs(d)))
    if closest < crit_tol:
        raise RootsNearCritical(
            f"root at distance {closest:.3e} from Re(w) = -rho"
        )
    left = roots[d < 0]
    right = roots[d > 0]
    if len(left) != params.L - params.N or len(right) != params.N:
        raise ConvergenceFailure(
            f"partition sizes ({len(left)}, {len(right)}) != "
            f"({params.L - params.N}, {params.N})"
        )
    left = left[np.argsort(np.angle(left + 1.0))]
    right = right[np.argsort(np.angle(right))]
    for arr, center in ((left, -1.0), (right, 0.0)):
        if len(arr) > 1:
            ring = np.concatenate([arr, arr[:1]])
            gaps = np.abs(np.diff(ring))
            scale = 0.5 * (np.abs(ring[:-1] - center) + np.abs(ring[1:] - center))
            if np.min(gaps - 1e-6 * scale) < 0:
                raise ConvergenceFailure("coincident roots after polishing")
    return left, right


def solve_bethe(params: RingParams, z: complex, margin: float = 0.02,
                method: str = "auto") -> BetheSpectrum:
    """Solve q_z(w) = 0 and partition the roots.

    margin keeps |z| away from the critical radius r0 where the two root
    lobes touch at -rho; callers probing the relaxation scale can shrink it.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    z = complex(z)
    if z == 0:
        raise DomainViolation("z must be nonzero")
    if abs(z) >= params.r0 * (1.0 - margin):
        raise DomainViolation(
            f"|z| = {abs(z):.6g} not below r0 (1 - margin) = "
            f"{params.r0 * (1 - margin):.6g}"
        )
    log_zz = log_scaled_z(params, z)
    if log_zz.real < -690.0:
        raise DomainViolation("z^L underflows; increase |z| or decrease L")

    auto = method == "auto"
    if auto:
        method = "companion" if params.L <= 200 else "levelcurve"
    if method == "companion":
        if params.L > 500:
            raise DomainViolation("companion route limited to L <= 500")
        seeds = _companion_seeds(params, z)
    elif method == "quadratic":
        if params.L != 2 * params.N:
            raise DomainViolation("quadratic route needs L = 2N")
        seeds = _quadratic_seeds(params, z)
    elif method == "levelcurve":
        seeds = _levelcurve_seeds(params, z, log_zz)
    else:
        raise ValueError(f"unknown method {method!r}")

    try:
        return _finish(params, z, log_zz, seeds)
    except ConvergenceFailure:
        if not (auto and method == "companion"):
            raise
        # companion seeds can be too coarse near z = 0; re-seed by tracking
        # the level curve, which pins every phase index by construction
        seeds = _levelcurve_seeds(params, z, log_zz)
        return _finish(params, z, log_zz, seeds)


def _finish(params: RingParams, z: complex, log_zz: complex,
            seeds: np.ndarray) -> BetheSpectrum:
    # measurement floor of the scaled residual grows like L * eps
    target = max(2e-14, 6e-16 * params.L)
    roots, res = _polish(params, log_zz, seeds, target)
    if not np.all(np.isfinite(roots)):
        raise ConvergenceFailure("non-finite root after polishing")
    # a root stored as a double carries an O(eps |w|) position error, so the
    # certifiable relative residual is bounded below by |s'(w)| eps |w|; at
    # small |z| (roots hugging -1 or 0) that floor exceeds 1e-12
    sprime = np.abs(params.N / roots + (params.L - params.N) / (roots + 1.0))
    floor = 2.2e-16 * (sprime * np.abs(roots) + 2.0 * params.L)
    if np.any(res > np.maximum(1e-12, 4.0 * floor)):
        raise ConvergenceFailure(
            f"max relative residual {float(np.max(res)):.3e} after polishing"
        )
    worst = float(np.max(res))
    left, right = _partition(params, roots)
    return BetheSpectrum(
        params=params,
        z=z,
        roots=np.concatenate([left, right]),
        left=left,
        right=right,
        residual=worst,
    )


def q_partition(spec: BetheSpectrum, w):
    """(q_left(w), q_right(w)) = (prod over left (w-u), prod over right (w-v)).

    Plain products; for L beyond a few hundred use log_q_partition instead.
    """
    w = np.asarray(w, dtype=complex)
    q_left = np.prod(w[..., None] - spec.left, axis=-1)
    q_right = np.prod(w[..., None] - spec.right, axis=-1)
    return q_left, q_right


def log_q_partition(spec: BetheSpectrum, w):
    """(log q_left(w), log q_right(w)) as log sums (overflow-safe)."""
    w = np.asarray(w, dtype=complex)
    log_left = np.sum(np.log(w[..., None] - spec.left), axis=-1)
    log_right = np.sum(np.log(w[..., None] - spec.right), axis=-1)
    return log_left, log_right


def _rel_cycle_deviation(log_lhs: complex, log_rhs: complex) -> float:
    d = complex(log_lhs) - complex(log_rhs)
    return abs(cmath.exp(complex(d.real, float(_wrap_angle(d.imag)))) - 1.0)


def root_identities(spec: BetheSpectrum, tol: float = 1e-8) -> dict:
    """Exact product identities between the two root families.

    (a) prod_v q'_R(v) = (-1)^(N(N-1)/2) Delta(R)^2, (b) prod_v q_L(v) =
    Delta(R; L), (c) prod_u (-u)^N = prod_v (v+1)^(L-N), plus the Vieta
    product of all roots.  Everything is evaluated as log sums and the
    deviations are relative; raises if any exceeds tol.
    """
    params = spec.params
    L, N = params.L, params.N
    v = spec.right
    u = spec.left

    # (a) product of q'_R over the right roots vs the squared Vandermonde
    if N > 1:
        diff = v[:, None] - v[None, :]
        off = ~np.eye(N, dtype=bool)
        log_lhs_a = complex(np.sum(np.log(diff[off])))
        iu, ju = np.triu_indices(N, k=1)
        log_rhs_a = 2.0 * complex(np.sum(np.log(v[ju] - v[iu])))
    else:
        log_lhs_a = 0.0
        log_rhs_a = 0.0
    log_rhs_a = log_rhs_a + 1j * math.pi * (N * (N - 1) // 2)
    dev_a = _rel_cycle_deviation(log_lhs_a, log_rhs_a)

    # (b) product of the left polynomial over right roots vs the cross product
    cross = np.log(v[:, None] - u[None, :])
    if L <= 64:
        ql, _ = q_partition(spec, v)
        log_lhs_b = complex(np.sum(np.log(ql)))
    else:
        log_lhs_b = complex(np.sum(cross))
    log_rhs_b = complex(np.sum(np.ravel(cross)[::-1]))
    dev_b = _rel_cycle_deviation(log_lhs_b, log_rhs_b)

    # (c) left/right product identity, a genuine constraint on the solver
    log_lhs_c = N * complex(np.sum(np.log(-u)))
    log_rhs_c = (L - N) * complex(np.sum(np.log(v + 1.0)))
    dev_c = _rel_cycle_deviation(log_lhs_c, log_rhs_c)

    # Vieta for the constant coefficient of q_z
    log_lhs_v = complex(np.sum(np.log(spec.roots)))
    log_rhs_v = L * cmath.log(spec.z) + 1j * math.pi * (L + 1)
    dev_v = _rel_cycle_deviation(log_lhs_v, log_rhs_v)

    devs = {
        "derivative_product": dev_a,
        "cross_product": dev_b,
        "left_right_product": dev_c,
        "vieta": dev_v,
    }
    report = dict(devs)
    report["residual"] = spec.residual
    report["max_deviation"] = max(devs.values())
    if report["max_deviation"] > tol:
        worst = max(devs, key=devs.get)
        raise IdentityViolation(
            f"{worst} deviation {devs[worst]:.3e} > {tol:g}"
        )
    return report
