"""Hitting expectations of a geometric walk against a periodic barrier.

The walk steps down by a geometric increment, P(step = -d) = rho (1-rho)^(d-1),
and tau is the first time m with G_m > y_{m+1}.  This module builds the exact
joint law of (tau, G_tau) by a windowed DP, assembles the hitting-expectation
series ch(v, u), and extends it to the periodic characteristic value by adding
the second-visit stopping time tau* >= N.  The tau* series is summed period by
period: shifting one period down multiplies the summand by exactly
E(v) = (-1)^N v^N (v+1)^(L-N) / r0^L, so the truncation error is a certified
geometric tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from .bethe import (
    BetheSpectrum,
    in_left_lobe,
    in_right_lobe,
    log_scaled_monomial,
    q_partition,
)
from .errors import DomainViolation, TailBoundFailure, WindowOverflow
from .symmetric import InitialConfig

__all__ = [
    "GeoWalk",
    "HittingLaw",
    "hitting_law",
    "ch",
    "ch_batch",
    "pch_hitting",
    "martingale_check",
    "comb_signed",
]


@dataclass(frozen=True)
class GeoWalk:
    """Downward geometric walk; holds the density and one-step probabilities."""

    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must be in (0, 1)")

    def step_prob(self, y: int, x: int) -> float:
        if x >= y:
            return 0.0
        return self.rho / (1.0 - self.rho) * (1.0 - self.rho) ** (y - x)


@dataclass(frozen=True, eq=False)
class HittingLaw:
    """Joint law of (tau, G_tau) and the windowed survival profile.

    table[(k, a)] = P(tau = k, G_tau = a | G_0 = start) for k < horizon;
    survival[(k, g)] = P(tau > k, G_k = g) on the kept window; truncated is
    the total mass dropped below the windows.
    """

    start: int
    horizon: int
    table: dict
    survival: dict
    truncated: float
    window: int

    def to_csv(self) -> str:
        lines = ["k,a,probability"]
        for (k, a), p in sorted(self.table.items()):
            lines.append(f"{k},{a},{p!r}")
        return "\n".join(lines) + "\n"


def _geometric_step(arr: np.ndarray, rho: float):
    """One walk step on weights over an ascending contiguous grid.

    Returns (stepped weights on the same grid, weight leaked below it).
    new(g) = sum_{g' > g} arr(g') rho (1-rho)^(g'-g-1), evaluated by the
    backward recurrence new(g) = (1-rho) new(g+1) + rho arr(g+1).
    """
    d = arr[::-1]
    out = lfilter([0.0, rho], [1.0, -(1.0 - rho)], d)[::-1]
    # mass below the grid: sum_{g < bottom} new(g) telescopes exactly
    leak = np.sum(arr * (1.0 - rho) ** np.arange(arr.size))
    return out, leak


def hitting_law(
    config: InitialConfig, x0: int, horizon: int, tol: float = 1e-14,
    window_cap: int = 100_000,
) -> HittingLaw:
    """Exact-within-tol joint law of (tau, G_tau) up to the given horizon.

    Survivors at time k are kept on the window [y_{k+1}+1-W, y_{k+1}] with
    W chosen so that the geometric tail below it carries mass < tol.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    rho = config.params.rho
    w_size = math.ceil(math.log(1.0 / tol) / math.log(1.0 / (1.0 - rho)))
    if w_size > window_cap:
        raise WindowOverflow(f"window {w_size} exceeds cap {window_cap}")

    table: dict = {}
    survival: dict = {}
    truncated = 0.0
    x0 = int(x0)

    b0 = config.y_at(1)
    if x0 > b0:
        table[(0, x0)] = 1.0
        return HittingLaw(x0, horizon, table, survival, truncated, w_size)

    # survivors at time 0 live at x0 only
    bottom = b0 + 1 - w_size
    if x0 < bottom:
        # start already below every kept state; all mass is truncated
        return HittingLaw(x0, horizon, table, survival, 1.0, w_size)
    grid_lo, grid_hi = bottom, b0
    arr = np.zeros(grid_hi - grid_lo + 1)
    arr[x0 - grid_lo] = 1.0
    survival[(0, x0)] = 1.0

    for k in range(1, horizon):
        b = config.y_at(k + 1)
        new_bottom = b + 1 - w_size
        # widen the grid down to the new window before stepping so every
        # state that should be kept stays on the grid
        pad = grid_lo - new_bottom
        if pad > 0:
            arr = np.concatenate([np.zeros(pad), arr])
            grid_lo = new_bottom
        vals, leak = _geometric_step(arr, rho)
        truncated += float(leak)
        gs = np.arange(grid_lo, grid_hi + 1)

        hit = gs > b
        for g, p in zip(gs[hit], vals[hit]):
            if p != 0.0:
                table[(k, int(g))] = float(p)
        vals = np.where(hit, 0.0, vals)

        for g, p in zip(gs[~hit], vals[~hit]):
            if p != 0.0:
                survival[(k, int(g))] = float(p)

        # strict decrease empties the old top cell every step
        grid_hi = min(b, grid_hi - 1)
        if grid_hi < grid_lo:
            break
        arr = vals[: grid_hi - grid_lo + 1]

    return HittingLaw(x0, horizon, table, survival, truncated, w_size)


@lru_cache(maxsize=4096)
def _cached_law(config: InitialConfig, x0: int, horizon: int, tol: float):
    return hitting_law(config, x0, horizon, tol)


def ch(config: InitialConfig, v, u, tol: float = 1e-14) -> complex:
    """Hitting-expectation series ch(v, u) for the aperiodic stopping time.

    The x > y_1 part of the series is the exact closed form
    (u+1)^(y_1+1) / ((v+1)^(y_1+1) (v-u)); starts in [y_N + N, y_1] are
    evaluated through the DP law, and lower starts contribute nothing.
    """
    rho = config.params.rho
    v, u = complex(v), complex(u)
    if v == -1.0:
        raise DomainViolation("v = -1 is excluded")
    if not 0.0 < abs(u + 1.0) < 1.0 - rho:
        raise DomainViolation(
            f"|u+1| = {abs(u + 1.0):.6g} outside (0, 1-rho) = (0, {1 - rho:.6g})"
        )
    if not abs(u + 1.0) < abs(v + 1.0):
        raise DomainViolation("|u+1| < |v+1| required")

    n = config.params.N
    y1 = config.y[0]
    beta = (-v / (v + 1.0)) * ((1.0 - rho) / rho)
    total = (u + 1.0) ** (y1 + 1) / (v + 1.0) ** (y1 + 1) / (v - u)
    r_u = (1.0 + u) / (1.0 - rho)
    for x in range(config.y[-1] + n, y1 + 1):
        law = _cached_law(config, x, n, tol)
        acc = 0.0j
        for (k, a), p in law.table.items():
            acc += p * (1.0 - rho) ** a / (v + 1.0) ** (a + 1) * beta**k
        total += r_u**x * acc
    return complex(total)


def ch_batch(config: InitialConfig, v, us, tol: float = 1e-14) -> np.ndarray:
    """ch(v, u) over an array of u at fixed v, sharing the hitting laws.

    The per-start law profiles do not depend on u, so they are reduced
    once and the u dependence enters only through powers of (1+u).
    """
    rho = config.params.rho
    v = complex(v)
    us = np.asarray(us, dtype=complex)
    if v == -1.0:
        raise DomainViolation("v = -1 is excluded")
    au = np.abs(us + 1.0)
    if not np.all((au > 0.0) & (au < 1.0 - rho)):
        raise DomainViolation("|u+1| outside (0, 1-rho) for some u")
    if not np.all(au < abs(v + 1.0)):
        raise DomainViolation("|u+1| < |v+1| required")

    n = config.params.N
    y1 = config.y[0]
    beta = (-v / (v + 1.0)) * ((1.0 - rho) / rho)
    total = (us + 1.0) ** (y1 + 1) / (v + 1.0) ** (y1 + 1) / (v - us)
    r_u = (1.0 + us) / (1.0 - rho)
    for x in range(config.y[-1] + n, y1 + 1):
        law = _cached_law(config, x, n, tol)
        acc = 0.0j
        for (k, a), p in law.table.items():
            acc += p * (1.0 - rho) ** a / (v + 1.0) ** (a + 1) * beta**k
        total += r_u**x * acc
    return total


def _psi_grid(gs: np.ndarray, v: complex, beta: complex, rho: float, n: int):
    """psi(j, g) = (1-rho)^g (1+v)^(-g-1) beta^j on the grid, for j < n."""
    base = (1.0 - rho) ** gs / (v + 1.0) ** (gs + 1)
    return beta ** np.arange(n)[:, None] * base[None, :]


def pch_hitting(
    config: InitialConfig,
    spec: BetheSpectrum,
    v,
    u,
    tol: float = 1e-14,
    extra_periods: int = 0,
    start_cap: int = 20_000,
) -> complex:
    """Periodic characteristic value from the (tau, tau*) expectation.

    Valid for v strictly inside the right lobe and u strictly inside the
    left lobe (u != -1); v need not be a Bethe root.  The tau part equals
    ch(v, u); the tau* part is summed over K_max periods with the exact
    per-period factor E(v).
    """
    if config.params != spec.params:
        raise ValueError("ring mismatch between config and spectrum")
    params = config.params
    rho, L, n = params.rho, params.L, params.N
    v, u = complex(v), complex(u)
    if v == 0.0 or not in_right_lobe(params, v):
        raise DomainViolation(f"v = {v} not strictly inside the right lobe")
    if u == -1.0 or not in_left_lobe(params, u):
        raise DomainViolation(f"u = {u} not strictly inside the left lobe")

    zv = complex(np.exp(log_scaled_monomial(params, v)))
    if abs(zv) >= 1.0:
        raise TailBoundFailure(f"per-period factor |{zv:.6g}| >= 1")

    tau_part = ch(config, v, u, tol)
    # widen the DP window and retry if the certified budget misses; the
    # edge-leak bound is conservative and shrinks like (1-rho)^pad
    star_part = None
    for pad in (10, 60, 250):
        try:
            star_part = _tau_star_sum(
                config,
                v,
                u,
                zv,
                tol,
                extra_periods=extra_periods,
                start_cap=start_cap,
                pad=pad,
            )
            break
        except TailBoundFailure:
            if pad == 250:
                raise
    q_left_v = q_partition(spec, v)[0]
    q_right_u = q_partition(spec, u)[1]
    pref = u**n * (v + 1.0) ** (L - n) / (q_left_v * q_right_u)
    return complex(pref * (tau_part - star_part))


def _tau_star_sum(
    config: InitialConfig,
    v: complex,
    u: complex,
    zv: complex,
    tol: float,
    extra_periods: int = 0,
    start_cap: int = 20_000,
    pad: int = 10,
):
    """sum_x r_u^x E_x[psi(tau*, G_tau*) 1_{tau < N, tau* < oo}].

    One complex-weighted DP over all starts at once: weights r_u^x seed the
    grid, phase one runs the tau scan for N steps, then each period of the
    tau* scan reuses the same barriers after recentering the grid by L and
    multiplying by E(v)^period.
    """
    params = config.params
    rho, L, n = params.rho, params.L, params.N
    y = config.y
    y1, yn = y[0], y[-1]
    r_u = (1.0 + u) / (1.0 - rho)
    if abs(r_u) >= 1.0:
        raise DomainViolation("|u+1| must be below 1-rho")
    beta = (-v / (v + 1.0)) * ((1.0 - rho) / rho)

    # every hit of the tau* scan lands above y_N in recentered coordinates,
    # so the weight there bounds all truncation errors
    psi_hit_max = ((1.0 - rho) / abs(v + 1.0)) ** (yn + 1) / abs(v + 1.0)
    psi_hit_max *= max(1.0, abs(beta)) ** (n - 1)
    seed_mass = abs(r_u) ** (yn + n) / (1.0 - abs(r_u))

    # truncation windows must absorb the amplification factors that the
    # final error terms carry, not just reach tol in raw mass
    amp_k = max(1.0, seed_mass * psi_hit_max / (1.0 - abs(zv)))
    k_max = max(1, math.ceil(math.log(amp_k / tol) / math.log(1.0 / abs(zv))))
    k_max += extra_periods
    steps = n * (k_max + 1)
    amp_x = max(1.0, psi_hit_max / ((1.0 - abs(r_u)) * (1.0 - abs(zv))))
    x_extra = math.ceil(math.log(amp_x / tol) / math.log(1.0 / abs(r_u)))
    if x_extra > start_cap:
        raise TailBoundFailure(
            f"start tail needs {x_extra} sites (|r_u| = {abs(r_u):.6g})"
        )
    x_max = y1 + max(1, x_extra)
    scale = max(1.0, seed_mass * psi_hit_max * steps / (1.0 - abs(zv)))
    w_geo = math.ceil(math.log(scale / tol) / math.log(1.0 / (1.0 - rho))) + pad
    spread = math.ceil(3.0 * math.sqrt(steps * (1.0 - rho)) / rho)

    bottom = yn + 1 - (w_geo + spread + (y1 - yn))  # recentered phase-2 floor
    top = max(yn - 1 + L, x_max - n + L, y1 + 1)
    lo_raw = bottom - L  # raw grid must reach the recentered floor at time N
    gs_raw = np.arange(lo_raw, x_max + 1)

    unhit = np.zeros(gs_raw.size, dtype=complex)
    free = np.zeros(gs_raw.size, dtype=complex)
    sel = (gs_raw >= yn + n) & (gs_raw <= y1)
    unhit[sel] = r_u ** gs_raw[sel].astype(float)
    sel = gs_raw > y1
    free[sel] = r_u ** gs_raw[sel].astype(float)
    leak_abs = 0.0

    for j in range(n):
        hit = gs_raw > y[j]
        free[hit] += unhit[hit]
        unhit[hit] = 0.0
        unhit, lk_u = _geometric_step(unhit, rho)
        free, lk_f = _geometric_step(free, rho)
        leak_abs += abs(lk_u) + abs(lk_f)

    # survivors of the tau scan (tau >= N) are excluded by 1_{tau < N}
    gs = np.arange(bottom, top + 1)
    nu = np.zeros(gs.size, dtype=complex)
    src = (gs_raw >= bottom - L) & (gs_raw <= top - L)
    nu[(gs_raw[src] + L) - bottom] = free[src]
    leak_abs += float(np.sum(np.abs(free[gs_raw < bottom - L])))

    psi = _psi_grid(gs.astype(float), v, beta, rho, n)
    acc = 0.0j
    zp = zv
    for _ in range(1, k_max + 1):
        for j in range(n):
            hit = gs > y[j]
            acc += zp * np.sum(nu[hit] * psi[j, hit])
            nu[hit] = 0.0
            nu, lk = _geometric_step(nu, rho)
            leak_abs += abs(lk)
        shifted = np.zeros_like(nu)
        shifted[L:] = nu[:-L]
        nu = shifted
        zp *= zv

    # certified error budget: remaining mass, window leaks, and start tail
    tail = float(np.sum(np.abs(nu))) * psi_hit_max * abs(zp) / (1.0 - abs(zv))
    leak_term = leak_abs * psi_hit_max * abs(zv) / (1.0 - abs(zv))
    start_tail = (
        abs(r_u) ** (x_max + 1) / (1.0 - abs(r_u)) * psi_hit_max
        / (1.0 - abs(zv))
    )
    budget = tail + leak_term + start_tail
    if not np.isfinite(budget) or budget > max(1e2 * tol, 1e-10):
        raise TailBoundFailure(f"tau* truncation budget {budget:.3e} too large")
    return acc


def comb_signed(top: int, k: int) -> int:
    """Generalized binomial coefficient with integer (possibly negative) top."""
    if k < 0:
        return 0
    if top >= 0:
        return math.comb(top, k)
    return (-1) ** k * math.comb(k - top - 1, k)


def _exact_tau_counts(config: InitialConfig, x0: int, horizon: int) -> dict:
    """Path counts n(k, a) with P(tau=k, G_tau=a) = n rho^k (1-rho)^(x0-a-k).

    Pure integer DP; prunes survivor states too low to reach any barrier
    still ahead of them within the horizon.
    """
    if x0 > config.y_at(1):
        return {(0, x0): 1}
    counts = {x0: 1}
    table: dict = {}
    for k in range(1, horizon):
        b = config.y_at(k + 1)
        floors = [
            config.y_at(m + 1) + 1 + (m - k)
            for m in range(k, horizon)
        ]
        floor = min(floors)
        new: dict = {}
        for g, c in counts.items():
            for g2 in range(floor, g):
                new[g2] = new.get(g2, 0) + c
        counts = {}
        for g, c in new.items():
            if g > b:
                table[(k, g)] = table.get((k, g), 0) + c
            else:
                counts[g] = c
    return table


def martingale_check(config: InitialConfig, i: int, x: int, exact: bool = False,
                     tol: float = 1e-14):
    """Both sides of the optional-stopping identity for the hitting walk.

    lhs = (1-rho)^(-x) E_x[-C(G_tau - y_i - 1, i - tau - 1)
          (1-rho)^(G_tau) ((1-rho)/rho)^tau 1_{tau < i}],
    rhs = -1_{x >= y_i + i} C(x - y_i - 1, i - 1).

    With exact=True all density factors cancel and both sides are returned
    as exact integers.
    """
    n = config.params.N
    if not 1 <= i <= n:
        raise ValueError(f"i must be in 1..{n}")
    yi = config.y[i - 1]
    rhs_int = -comb_signed(x - yi - 1, i - 1) if x >= yi + i else 0

    if exact:
        lhs_int = 0
        for (k, a), cnt in _exact_tau_counts(config, x, i).items():
            lhs_int -= cnt * comb_signed(a - yi - 1, i - k - 1)
        return lhs_int, rhs_int

    rho = config.params.rho
    law = hitting_law(config, x, i, tol)
    lhs = 0.0
    for (k, a), p in law.table.items():
        lhs -= (
            p
            * comb_signed(a - yi - 1, i - k - 1)
            * (1.0 - rho) ** (a - x)
            * ((1.0 - rho) / rho) ** k
        )
    return lhs, float(rhs_int)
