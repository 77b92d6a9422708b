"""Symmetric-function route to energy and characteristic values.

Everything here is a ratio of generalized Vandermonde determinants
evaluated on Bethe roots.  Determinants are formed after scaling row i
by w_i^N, which keeps entries polynomial in w_i and cancels in every
ratio.  The plain denominator det[w_i^{N-j}] has the closed form
prod_{i<j}(w_i - w_j), so only the numerator needs an LU factorization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bethe import BetheSpectrum, RingParams, in_left_lobe
from .errors import DegenerateEnergy, DomainViolation, SingularDenominator

__all__ = [
    "InitialConfig",
    "g_lambda",
    "energy_direct",
    "pch_row",
    "pch_cramer",
    "pch_det_ratio",
    "shift_config",
    "energy_shift_factor",
    "pch_shift_factor",
]


@dataclass(frozen=True)
class InitialConfig:
    """One period of particle labels y_1 > ... > y_N.

    Labels are normalized so that -(L-N) <= y_j + j <= 0 for every j,
    which fixes the translation and relabeling freedom of the periodic
    extension y_{k+N} = y_k - L.
    """

    params: RingParams
    y: tuple = ()
    lam: tuple = field(init=False)

    def __post_init__(self):
        y = tuple(int(v) for v in self.y)
        object.__setattr__(self, "y", y)
        L, N = self.params.L, self.params.N
        if len(y) != N:
            raise ValueError(f"expected {N} labels, got {len(y)}")
        if any(a <= b for a, b in zip(y, y[1:])):
            raise ValueError(f"labels must be strictly decreasing, got {y}")
        if y[0] >= y[-1] + L:
            raise ValueError("labels must fit inside one period")
        for j, yj in enumerate(y, start=1):
            if not -(L - N) <= yj + j <= 0:
                raise ValueError(
                    f"label window violated: y_{j} + {j} = {yj + j} "
                    f"outside [{-(L - N)}, 0]"
                )
        object.__setattr__(self, "lam", tuple(yj + j for j, yj in enumerate(y, 1)))

    def y_at(self, j):
        """Periodically extended label y_j for any integer j."""
        N = self.params.N
        return self.y[(j - 1) % N] - self.params.L * ((j - 1) // N)

    def to_json(self):
        return json.dumps({"L": self.params.L, "N": self.params.N, "y": list(self.y)})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        for key in ("L", "N", "y"):
            if key not in data:
                raise ValueError(f"missing key {key!r}")
        if not isinstance(data["L"], int) or not isinstance(data["N"], int):
            raise ValueError("L and N must be integers")
        if not isinstance(data["y"], list) or not all(
            isinstance(v, int) for v in data["y"]
        ):
            raise ValueError("y must be a list of integers")
        return cls(RingParams(data["L"], data["N"]), tuple(data["y"]))


def g_lambda(w, lam):
    """det[w_i^{-j} (w_i+1)^{lam_j}] / det[w_i^{-j}] on distinct nodes.

    Requires lam weakly decreasing integers and nodes away from 0, -1.
    The lam = 0 specialization is identically 1.
    """
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    lam_arr = np.atleast_1d(np.asarray(lam))
    n = w.size
    if lam_arr.shape != (n,):
        raise ValueError("lam must have one entry per node")
    if not np.all(lam_arr == np.round(lam_arr.real)):
        raise ValueError("lam must be integer")
    lam_arr = np.round(lam_arr.real).astype(np.int64)
    if np.any(np.diff(lam_arr) > 0):
        raise ValueError("lam must be weakly decreasing")
    if np.any(w == 0.0) or np.any(w == -1.0):
        raise DomainViolation("nodes 0 and -1 are excluded")
    if n == 1:
        return complex((w[0] + 1.0) ** lam_arr[0])

    iu, ju = np.triu_indices(n, 1)
    gaps = w[iu] - w[ju]
    scale = np.abs(w[iu]) + np.abs(w[ju])
    if np.any(np.abs(gaps) <= 1e-14 * scale):
        raise SingularDenominator("coincident nodes")
    log_den = np.sum(np.log(gaps))

    cols = np.arange(1, n + 1)
    a = w[:, None] ** (n - cols)[None, :] * (w[:, None] + 1.0) ** lam_arr[None, :]
    sign, logabs = np.linalg.slogdet(a)
    if sign == 0:
        return 0.0j
    return complex(sign * np.exp(logabs - log_den))


def _check_same_ring(a: RingParams, b: RingParams):
    if a != b:
        raise ValueError(f"ring mismatch: {a} vs {b}")


def energy_direct(config: InitialConfig, spec: BetheSpectrum):
    """Energy of the configuration: the determinant ratio on the right roots."""
    _check_same_ring(config.params, spec.params)
    return g_lambda(spec.right, config.lam)


def _require_left_domain(spec: BetheSpectrum, u):
    u = complex(u)
    if u == -1.0:
        raise DomainViolation("u = -1 is excluded")
    if not in_left_lobe(spec.params, u):
        raise DomainViolation(f"u = {u} lies outside the left lobe")
    return u


def _locate_right_root(spec: BetheSpectrum, v):
    v = complex(v)
    dist = np.abs(spec.right - v)
    idx = int(np.argmin(dist))
    if dist[idx] > 1e-9 * max(1.0, abs(v)):
        raise DomainViolation(f"v = {v} is not a right Bethe root")
    return idx


def _pch_lhs_matrix(config: InitialConfig, spec: BetheSpectrum):
    # u-independent part of the linear system; the u-dependence of the
    # coefficient matrix is a scalar multiple folded into the RHS.
    v = spec.right
    N = spec.params.N
    dq = np.prod(v[:, None] - v[None, :] + np.eye(N), axis=1)
    rows = np.arange(1, N + 1)[:, None]
    y = np.asarray(config.y)[:, None]
    return (v[None, :] ** N / dq[None, :]) * v[None, :] ** (-rows) * (
        v[None, :] + 1.0
    ) ** (y + rows)


def pch_row(config: InitialConfig, spec: BetheSpectrum, u, min_energy=1e-6):
    """Characteristic values pch(v, u) for every right root v of the spectrum.

    Solves the N x N linear system that characterizes them; the system is
    uniquely solvable exactly when the energy is nonzero, so a nearly
    degenerate energy is rejected rather than inverted.
    """
    _check_same_ring(config.params, spec.params)
    u = _require_left_domain(spec, u)
    en = energy_direct(config, spec)
    if abs(en) <= min_energy:
        raise DegenerateEnergy(f"|energy| = {abs(en):.3e} <= {min_energy:.1e}")
    v = spec.right
    N = spec.params.N
    rows = np.arange(1, N + 1)
    y = np.asarray(config.y)
    q_r_u = np.prod(u - v)
    rhs = -(u ** (-rows)) * (u + 1.0) ** (y + rows) * u**N / q_r_u
    return np.linalg.solve(_pch_lhs_matrix(config, spec), rhs)


def pch_cramer(config: InitialConfig, spec: BetheSpectrum, v, u, min_energy=1e-6):
    """pch(v, u) for a single right root v, via the linear system."""
    idx = _locate_right_root(spec, v)
    return complex(pch_row(config, spec, u, min_energy=min_energy)[idx])


def pch_det_ratio(config: InitialConfig, spec: BetheSpectrum, v, u, min_energy=1e-6):
    """pch(v, u) from its defining determinant ratio, for cross-checks."""
    _check_same_ring(config.params, spec.params)
    u = _require_left_domain(spec, u)
    idx = _locate_right_root(spec, v)
    en = energy_direct(config, spec)
    if abs(en) <= min_energy:
        raise DegenerateEnergy(f"|energy| = {abs(en):.3e} <= {min_energy:.1e}")
    nodes = spec.right.copy()
    v = nodes[idx]
    nodes[idx] = u
    return complex(g_lambda(nodes, config.lam) / ((v - u) * en))


def shift_config(config: InitialConfig, k: int, c: int):
    """Relabel by k steps along the periodic extension and translate by c."""
    N = config.params.N
    if not 1 <= k <= N:
        raise ValueError(f"k must be in 1..{N}")
    yhat = tuple(config.y_at(i + k) + c for i in range(1, N + 1))
    return InitialConfig(config.params, yhat)


def energy_shift_factor(spec: BetheSpectrum, k: int, c: int):
    """Exact multiplier taking the energy of Y to that of the (k, c) shift."""
    L, N = spec.params.L, spec.params.N
    v = spec.right
    log = (
        1j * np.pi * (k * (N - k))
        - k * L * np.log(spec.z)
        + np.sum(k * np.log(v) + (c - k) * np.log(v + 1.0))
    )
    return complex(np.exp(log))


def pch_shift_factor(v, u, k: int, c: int):
    """Multiplier taking pch(v, u) of Y to that of the (k, c) shift."""
    v, u = complex(v), complex(u)
    return (u**k * (u + 1.0) ** (c - k)) / (v**k * (v + 1.0) ** (c - k))
