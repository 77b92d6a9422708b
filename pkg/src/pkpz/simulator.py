"""Continuous-time Monte Carlo for TASEP on a ring.

Exact Gillespie dynamics: at each event the mobile particles (empty
right neighbor, periodically) race with rate 1 each; memorylessness
makes resampling the exponential after every jump equivalent to
independent per-particle clocks.  Positions are stored as absolute
integers for the N representative particles, so winding numbers and
the height-function counter are recoverable without extra bookkeeping.
"""

from dataclasses import dataclass

import numpy as np

from .bethe import RingParams
from .errors import ParityViolation
from .symmetric import InitialConfig

__all__ = [
    "RingState",
    "simulate",
    "simulate_at",
    "joint_indicator",
    "particle_position",
    "height_from_particles",
    "check_height_equivalence",
]


@dataclass(frozen=True)
class RingState:
    params: RingParams
    positions: tuple  # absolute positions of particles 1..N, decreasing
    time: float
    jump_count: int

    def __post_init__(self):
        p = self.positions
        if len(p) != self.params.N:
            raise ValueError("need one position per representative particle")
        for a, b in zip(p, p[1:]):
            if a <= b:
                raise ValueError("positions must decrease strictly")
        if p and p[0] - p[-1] > self.params.L - 1:
            raise ValueError("exclusion violated: x_1 >= x_N + L")


def _mobile(pos, L):
    free = [k for k in range(1, len(pos)) if pos[k] + 1 < pos[k - 1]]
    if pos[0] + 1 < pos[-1] + L:
        free.append(0)
    return free


def _evolve(pos, t0, t_until, rng, L):
    """Advance the position list in place, returning (time, jumps)."""
    t, jumps = t0, 0
    while True:
        mobile = _mobile(pos, L)
        t_next = t + rng.exponential(1.0 / len(mobile))
        if t_next > t_until:
            return t_until, jumps
        pos[mobile[rng.integers(len(mobile))]] += 1
        t, jumps = t_next, jumps + 1


def simulate(config: InitialConfig, t_max: float, seed=0) -> RingState:
    """State at time t_max, reproducible from the seed."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    rng = np.random.default_rng(seed)
    pos = list(config.y)
    _, jumps = _evolve(pos, 0.0, t_max, rng, config.params.L)
    return RingState(config.params, tuple(pos), t_max, jumps)


def simulate_at(config: InitialConfig, times, seed=0):
    """Snapshots along one trajectory at the given nondecreasing times."""
    times = list(times)
    if any(t < 0 for t in times) or any(
        a > b for a, b in zip(times, times[1:])
    ):
        raise ValueError("times must be nonnegative and nondecreasing")
    rng = np.random.default_rng(seed)
    pos = list(config.y)
    out, t, jumps = [], 0.0, 0
    for t_stop in times:
        t, j = _evolve(pos, t, t_stop, rng, config.params.L)
        jumps += j
        out.append(RingState(config.params, tuple(pos), t, jumps))
    return out


def particle_position(state: RingState, k: int) -> int:
    """x_k for any integer label via x_{k+N} = x_k - L."""
    n = state.params.N
    return state.positions[(k - 1) % n] - state.params.L * ((k - 1) // n)


def joint_indicator(config, points, trials, seed=0):
    """Monte Carlo estimate of P(all x_{k_i}(t_i) >= a_i).

    points: iterable of (k, t, a); returns (estimate, binomial stderr).
    """
    pts = sorted(points, key=lambda p: p[1])
    times = [t for _, t, _ in pts]
    root = np.random.SeedSequence(seed)
    hits = 0
    for child in root.spawn(trials):
        rng = np.random.default_rng(child)
        pos = list(config.y)
        t = 0.0
        ok = True
        for k, t_stop, a in pts:
            t, _ = _evolve(pos, t, t_stop, rng, config.params.L)
            state = RingState(config.params, tuple(pos), t, 0)
            if particle_position(state, k) < a:
                ok = False
                break
        hits += ok
    est = hits / trials
    return est, float(np.sqrt(est * (1.0 - est) / trials))


def _crossings(state: RingState) -> int:
    """Count of particles that have passed from site -1 to 0.

    Valid initial windows put every representative start in [-L, -1],
    whose floor by L is -1, so the count is N + sum floor(x_k / L).
    """
    n = state.params.N
    return n + sum(p // state.params.L for p in state.positions)


def height_from_particles(state: RingState, x: int, h0: int = 0) -> int:
    """Occupation-sum height H(x, t) with H(0, 0) = h0."""
    L, n = state.params.L, state.params.N
    occ = {p % L for p in state.positions}
    prefix = [0]
    for j in range(L):
        prefix.append(prefix[-1] + (1 - 2 * (j in occ)))
    q, r = divmod(x, L)
    return h0 + 2 * _crossings(state) + q * (L - 2 * n) + prefix[r]


def check_height_equivalence(state: RingState, b: int, ell: int, h0: int = 0):
    """Both sides of H(l, t) >= b + h0  <=>  x_{(b-l)/2}(t) >= l."""
    if (b - ell) % 2:
        raise ParityViolation("b - l must be even")
    lhs = height_from_particles(state, ell, h0) >= b + h0
    rhs = particle_position(state, (b - ell) // 2) >= ell
    return lhs, rhs
