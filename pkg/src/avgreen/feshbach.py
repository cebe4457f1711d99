"""Dense verification of the Schur complement identity on finite probability spaces.

On ``L^2(sites x Omega)`` with ``P = E[.]`` the averaged operator satisfies

    (P L^{-1} P)^{-1} = PLP - PLP^perp (P^perp L P^perp)^{-1} P^perp L P.

Everything here is built from dense matrices, independently of the FFT and
pattern machinery in :mod:`avgreen.series`, so it serves as an oracle for it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .environment import SigmaDistribution, enumerate_probability_space
from .lattice import TorusGrid

__all__ = [
    "FeshbachReport",
    "difference_matrices",
    "probability_basis",
    "operator_series_kernels",
    "feshbach_verify",
]


@dataclass
class FeshbachReport:
    """Outcome of a dense Schur complement check.

    ``discrepancy`` compares the Schur complement with ``(E[L^{-1}])^{-1}``;
    ``block_discrepancy`` compares it with the inverse of the ``P``-block of
    the inverse of the full product-space matrix. ``series_errors[k]`` is the
    max-norm error of the series truncated after ``k`` terms and
    ``remainder_ratios`` are successive quotients of those errors, taken
    over the terms that do not vanish identically.
    """

    grid: dict
    distribution: str
    delta: float
    mu: float
    n_outcomes: int
    dimension: int
    discrepancy: float
    block_discrepancy: float
    series_errors: list = field(default_factory=list)
    remainder_ratios: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_json(self) -> dict:
        return dict(self.__dict__)


def difference_matrices(grid: TorusGrid) -> list[np.ndarray]:
    """Dense forward-difference matrices ``D_j`` with ``(D_j u)(x) = u(x+e_j) - u(x)``."""
    S = grid.volume
    idx = np.arange(S).reshape(grid.shape)
    out = []
    for j in range(grid.d):
        D = -np.eye(S)
        shifted = np.roll(idx, -1, axis=j).ravel()
        D[np.arange(S), shifted] += 1.0
        out.append(D)
    return out


def probability_basis(p: np.ndarray) -> np.ndarray:
    """Columns orthonormal in ``L^2(Omega, p)``, the first being the constant 1."""
    q = len(p)
    sp = np.sqrt(p)
    M = np.eye(q)
    M[:, 0] = sp
    U, _ = np.linalg.qr(M)
    if U[0, 0] * sp[0] < 0:
        U[:, 0] *= -1
    return U / sp[:, None]


def _sector(grid: TorusGrid, mu: float) -> np.ndarray:
    """Orthonormal basis of the sites space (mean-zero subspace when ``mu = 0``)."""
    S = grid.volume
    if mu > 0:
        return np.eye(S)
    M = np.eye(S)
    M[:, 0] = 1.0
    U, _ = np.linalg.qr(M)
    return U[:, 1:]


def operator_series_kernels(grid: TorusGrid, sigmas: np.ndarray, probs: np.ndarray, mu: float,
                            n_max: int) -> list[np.ndarray]:
    """Dense ``P sigma (K P^perp sigma)^n`` for ``n = 1..n_max``.

    Returns matrices of shape ``(d S, d S)`` indexed by ``(component, site)``,
    with ``K_{i i'} = D_i (-Delta + mu)^{+} D_{i'}^T``.
    """
    d, S = grid.d, grid.volume
    D = difference_matrices(grid)
    lap = sum(Dj.T @ Dj for Dj in D)
    G = np.linalg.pinv(lap + mu * np.eye(S)) if mu == 0 else np.linalg.inv(lap + mu * np.eye(S))
    Kbig = np.block([[D[i] @ G @ D[k].T for k in range(d)] for i in range(d)])
    sig = sigmas.reshape(len(probs), S)
    sig_c = np.tile(sig, (1, d))
    v = np.broadcast_to(np.eye(d * S), (len(probs), d * S, d * S)).copy()
    out = []
    for _ in range(n_max):
        v = sig_c[:, :, None] * v
        v = v - np.tensordot(probs, v, axes=(0, 0))[None]
        v = np.einsum("ab,wbc->wac", Kbig, v)
        out.append(np.tensordot(probs, sig_c[:, :, None] * v, axes=(0, 0)))
    return out


def feshbach_verify(grid: TorusGrid, dist: SigmaDistribution, delta: float, mu: float,
                    n_max: int = 4, dim_cap: int = 4096, outcome_cap: int = 2**16) -> FeshbachReport:
    """Check the Schur complement identity and the truncated series densely.

    Parameters
    ----------
    grid, dist : the instance; all ``|atoms|**(N**d)`` outcomes are enumerated.
    delta, mu : operator parameters. With ``mu = 0`` the check is restricted
        to the mean-zero sector.
    n_max : number of series terms to compare.
    dim_cap : largest allowed product-space dimension.
    """
    t0 = time.perf_counter()
    if not abs(delta) < 1:
        raise ValueError("|delta| must be < 1")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    space = enumerate_probability_space(grid, dist, cap=outcome_cap)
    p = space.probabilities
    q = len(p)
    W = _sector(grid, mu)
    s = W.shape[1]
    if q * s > dim_cap:
        raise ValueError(f"product-space dimension {q * s} exceeds the cap {dim_cap}")
    D = difference_matrices(grid)
    S = grid.volume
    sig = space.sigmas.reshape(q, S)
    Ls = np.empty((q, S, S))
    for w in range(q):
        c = 1.0 + delta * sig[w]
        Ls[w] = sum(Dj.T @ (c[:, None] * Dj) for Dj in D) + mu * np.eye(S)
    Lw = np.einsum("ia,wab,bj->wij", W.T, Ls, W)

    Q = probability_basis(p)
    Lt = np.einsum("w,wk,wl,wxy->kxly", p, Q, Q, Lw).reshape(q * s, q * s)
    A = Lt[:s, :s]
    B = Lt[:s, s:]
    C = Lt[s:, :s]
    Dm = Lt[s:, s:]
    schur = A - B @ np.linalg.solve(Dm, C) if q > 1 else A
    avg_inv = np.einsum("w,wij->ij", p, np.linalg.inv(Lw))
    lhs = np.linalg.inv(avg_inv)
    block = np.linalg.inv(np.linalg.inv(Lt)[:s, :s])
    disc = float(np.max(np.abs(lhs - schur)))
    bdisc = float(np.max(np.abs(block - schur)))

    m1 = float(dist.mean)
    lap = sum(Dj.T @ Dj for Dj in D)
    base = W.T @ ((1 + delta * m1) * lap + mu * np.eye(S)) @ W
    grad = np.vstack(D) @ W
    errors = [float(np.max(np.abs(lhs - base)))]
    approx = base.copy()
    nonzero = []
    for n, T in enumerate(operator_series_kernels(grid, space.sigmas, p, mu, n_max), start=1):
        term = delta * (-delta) ** n * (grad.T @ T @ grad)
        approx = approx + term
        errors.append(float(np.max(np.abs(lhs - approx))))
        if np.max(np.abs(term)) > 1e-14 * max(1.0, np.max(np.abs(base))):
            nonzero.append(n)
    # terms that vanish identically (odd moments of symmetric laws) are skipped
    kept = [0] + nonzero
    ratios = [errors[b] / errors[a] if errors[a] > 0 else 0.0 for a, b in zip(kept, kept[1:])]
    return FeshbachReport(grid.to_dict(), dist.name, float(delta), float(mu), q, q * s, disc, bdisc,
                          errors, ratios, time.perf_counter() - t0)
