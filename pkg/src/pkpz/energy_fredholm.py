"""Fredholm-determinant route to the energy function.

The kernel acts on the nonpositive integers.  Its u-integral is a
residue sum over the left Bethe roots (exact, no contour placement
needed), while the v-integral runs over a small circle around the
origin and is evaluated by the trapezoid rule, which converges
geometrically for integrands analytic in an annulus.  Assembling the
determinant at increasing truncation depth and comparing with the
direct symmetric-function evaluation gives a two-route consistency
check on the same quantity.
"""

from dataclasses import dataclass

import numpy as np

from .bethe import BetheSpectrum
from .errors import AdaptivityFailure, QuadratureStall
from .hitting import ch_batch
from .symmetric import InitialConfig, _check_same_ring


@dataclass(frozen=True, eq=False)
class EnergyKernel:
    config: InitialConfig
    spec: BetheSpectrum
    entries: np.ndarray  # entries[i, j] = K(-i, -j), shape (M+1, M+1)
    M: int
    v_radius: float
    v_nodes: int


def _q_prime(spec, u):
    L, N = spec.params.L, spec.params.N
    return N * u ** (N - 1) * (u + 1.0) ** (L - N) + (L - N) * u**N * (
        u + 1.0
    ) ** (L - N - 1)


def _v_circle_radius(spec):
    rho = spec.params.rho
    return min(0.3 * float(np.min(np.abs(spec.right))), 0.3 * rho)


def _u_residue_weights(config, spec, xs, tol):
    """Residue factors at the left roots, one row per left root.

    Returns (weights[i, jx], us) with weights = u^N (u+1)^(L-N-x) z^L / q'(u).
    """
    L, N = spec.params.L, spec.params.N
    us = spec.left
    zl = spec.z**L
    base = us**N * zl / _q_prime(spec, us)
    return base[:, None] * (us[:, None] + 1.0) ** (L - N - xs[None, :]), us


def _assemble(config, spec, xs, ys, m_v, tol):
    """Kernel block K(x, y) for the given index vectors.

    ch does not depend on (x, y), so the hitting expectations are
    evaluated once per (v node, left root) pair and the block follows
    by matrix products.
    """
    L, N = spec.params.L, spec.params.N
    r_v = _v_circle_radius(spec)
    vs = r_v * np.exp(2j * np.pi * np.arange(m_v) / m_v)
    uw, us = _u_residue_weights(config, spec, xs, tol)
    ch_mat = np.empty((m_v, us.size), dtype=complex)
    for k, v in enumerate(vs):
        ch_mat[k] = ch_batch(config, v, us, tol)
    # contour measure dv/(2 pi i) on the circle contributes v_k / m_v
    vpart = vs[None, :] ** (1 - N) * (vs[None, :] + 1.0) ** (
        ys[:, None] - (L - N + 1)
    ) / m_v
    return (vpart @ ch_mat @ uw).T  # [jx, jy]


def _kernel_block(config, spec, xs, ys, v_nodes, tol, node_cap=4096):
    m_v = v_nodes
    block = _assemble(config, spec, xs, ys, m_v, tol)
    while True:
        if 2 * m_v > node_cap:
            raise QuadratureStall(
                f"v-circle quadrature not stable at {m_v} nodes"
            )
        refined = _assemble(config, spec, xs, ys, 2 * m_v, tol)
        gap = float(np.max(np.abs(refined - block)))
        scale = max(1.0, float(np.max(np.abs(refined))))
        if gap <= tol * scale:
            return refined, 2 * m_v
        block, m_v = refined, 2 * m_v


def ken_entry(config, spec, x, y, tol=1e-12, v_nodes=128,
              u_quadrature=False, u_nodes=512):
    """Single kernel entry K(x, y) for nonpositive integers x, y.

    With u_quadrature=True the residue sum is replaced by a trapezoid
    rule on a circle centered at -1 that encloses all left roots and no
    right roots (|u+1| < 1-rho separates the two families); this slower
    route exists purely as a cross-check.
    """
    _check_same_ring(config.params, spec.params)
    if x > 0 or y > 0 or x != int(x) or y != int(y):
        raise ValueError("kernel indices must be nonpositive integers")
    if not u_quadrature:
        block, _ = _kernel_block(
            config, spec, np.array([int(x)]), np.array([int(y)]),
            v_nodes, tol,
        )
        return complex(block[0, 0])

    L, N = spec.params.L, spec.params.N
    rho = spec.params.rho
    r_in = float(np.max(np.abs(spec.left + 1.0)))
    r_u = np.sqrt(r_in * (1.0 - rho))
    us = -1.0 + r_u * np.exp(2j * np.pi * np.arange(u_nodes) / u_nodes)
    r_v = _v_circle_radius(spec)
    vs = r_v * np.exp(2j * np.pi * np.arange(v_nodes) / v_nodes)
    zl = spec.z**L
    qz = us**N * (us + 1.0) ** (L - N) - zl
    # du measure on the circle around -1 contributes (u+1)/u_nodes
    uweights = us**N * (us + 1.0) ** (L - N - x + 1) * zl / qz / u_nodes
    total = 0.0j
    for v in vs:
        inner = np.sum(uweights * ch_batch(config, v, us, tol))
        total += inner * v ** (1 - N) * (v + 1.0) ** (y - (L - N + 1))
    return complex(total / v_nodes)


def build_energy_kernel(config, spec, depth, tol=1e-12, v_nodes=128):
    """Kernel matrix on x, y in {0, -1, ..., -depth}."""
    _check_same_ring(config.params, spec.params)
    idx = -np.arange(depth + 1)
    block, m_v = _kernel_block(config, spec, idx, idx, v_nodes, tol)
    return EnergyKernel(
        config=config, spec=spec, entries=block, M=depth,
        v_radius=_v_circle_radius(spec), v_nodes=m_v,
    )


def fredholm_det(kernel, conjugate=True):
    """det(I - K) on the truncated index set.

    The raw kernel decays fast in x but grows in y; rescaling row x and
    column y by (1-rho)^x / (1-rho)^y balances both directions without
    changing the determinant, which keeps the truncated matrix well
    conditioned.
    """
    K = kernel.entries
    if conjugate:
        rho = kernel.spec.params.rho
        e = (1.0 - rho) ** (-np.arange(K.shape[0]))
        K = K * (e[:, None] / e[None, :])
    return complex(np.linalg.det(np.eye(K.shape[0]) - K))


def energy_prefactor(spec):
    """Delta(R; L) / (prod_u (-u)^N prod_v (v+1)^(L-N))."""
    L, N = spec.params.L, spec.params.N
    delta = np.prod(spec.right[:, None] - spec.left[None, :])
    return complex(
        delta
        / np.prod((-spec.left) ** N)
        / np.prod((spec.right + 1.0) ** (L - N))
    )


def energy_fredholm(config, spec, tol=1e-8, depth_cap=512, v_nodes=128):
    """Energy function via the determinant route, adaptive in depth."""
    _check_same_ring(config.params, spec.params)
    L = spec.params.L
    depth = max(4, int(np.ceil(4.0 * np.sqrt(L))))
    ch_tol = min(1e-13, 1e-3 * tol)
    det_prev = fredholm_det(
        build_energy_kernel(config, spec, depth, ch_tol, v_nodes)
    )
    while True:
        if 2 * depth > depth_cap:
            raise AdaptivityFailure(
                f"determinant not stable at truncation depth {depth}"
            )
        det_next = fredholm_det(
            build_energy_kernel(config, spec, 2 * depth, ch_tol, v_nodes)
        )
        if abs(det_next - det_prev) <= tol * max(1.0, abs(det_next)):
            return energy_prefactor(spec) * det_next
        det_prev, depth = det_next, 2 * depth
