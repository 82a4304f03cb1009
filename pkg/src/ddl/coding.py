"""Per-patch sparse approximation: greedy OMP and proximal-gradient ISTA.

Both coders solve variants of min_s ||y - D s||^2: OMP under an atom-count
budget, ISTA under an l1 penalty. OMP is used for denoising, ISTA for the
coding step inside dictionary learning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDictionaryError, NonFiniteError, SingularGramWarning

OMP_RELATIVE_TOL = 1e-6  # default residual tolerance, relative to ||y||
ISTA_STEP_TOL = 1e-8
ISTA_MAX_ITER = 1000


@dataclass
class SparseCode:
    """Coefficients with explicit support and the final residual norm."""

    coefficients: np.ndarray  # (N,), zero outside support
    support: list[int] = field(default_factory=list)  # active atoms, selection order
    residual_norm: float = 0.0


@dataclass
class CoderConfig:
    mode: str = "omp"  # "omp" | "ista"
    sparsity: int = 5  # max atoms (omp)
    lam: float = 0.1  # l1 weight (ista)
    max_iter: int = ISTA_MAX_ITER
    tol: float | None = None  # omp: absolute residual tol; ista: step tol

    def __post_init__(self):
        if self.mode not in ("omp", "ista"):
            raise ValueError(f"unknown coder mode {self.mode!r}")
        if self.mode == "omp" and self.sparsity < 1:
            raise ValueError("omp sparsity budget must be >= 1")
        if self.mode == "ista" and self.lam < 0:
            raise ValueError("ista l1 weight must be >= 0")


def _atom_matrix(dictionary) -> np.ndarray:
    atoms = dictionary.atoms if hasattr(dictionary, "atoms") else np.asarray(dictionary)
    if atoms.ndim != 2:
        raise ValueError(f"dictionary must be 2-D, got shape {atoms.shape}")
    return atoms


def omp_encode(y: np.ndarray, dictionary, sparsity: int, tol: float | None = None) -> SparseCode:
    """Greedy sparse coding by orthogonal matching pursuit.

    Repeatedly selects the inactive atom most correlated with the residual
    (correlations of sub-unit-norm atoms are normalized by atom norm, ties
    go to the lowest index), then refits all active coefficients by the
    orthogonal projection of y onto the active atoms via a rank-growing
    Cholesky factorization of the active Gram matrix. Stops at ``sparsity``
    atoms or once the residual norm falls to ``tol`` (default 1e-6 ||y||).
    Atoms that would make the Gram factor numerically singular trigger a
    SingularGramWarning and are skipped.
    """
    d = _atom_matrix(dictionary)
    y = np.asarray(y, dtype=np.float64)
    m, n = d.shape
    norms = np.linalg.norm(d, axis=0)
    if n == 0 or not np.any(norms > 0):
        raise EmptyDictionaryError("dictionary has no nonzero atoms")
    if sparsity < 1:
        raise ValueError("sparsity budget must be >= 1")
    budget = min(sparsity, m, n)
    if tol is None:
        tol = OMP_RELATIVE_TOL * np.linalg.norm(y)

    eligible = norms > 0
    scale = np.where(eligible, norms, 1.0)
    residual = y.copy()
    active: list[int] = []
    chol = np.zeros((budget, budget))  # lower factor of D_Q^T D_Q
    coeffs = np.zeros(n)
    res_norm = float(np.linalg.norm(residual))

    while len(active) < budget and res_norm > tol and eligible.any():
        scores = np.abs(d.T @ residual) / scale
        scores[~eligible] = -np.inf
        j = int(np.argmax(scores))
        if scores[j] <= 0.0:
            break  # residual orthogonal to every remaining atom

        # Grow the Cholesky factor with the candidate column.
        k = len(active)
        if k == 0:
            pivot_sq = float(d[:, j] @ d[:, j])
        else:
            cross = d[:, active].T @ d[:, j]
            w = np.linalg.solve(chol[:k, :k], cross)
            pivot_sq = float(d[:, j] @ d[:, j] - w @ w)
            chol[k, :k] = w
        if pivot_sq <= 1e-12 * max(float(d[:, j] @ d[:, j]), 1e-300):
            warnings.warn(
                f"atom {j} numerically dependent on active set, skipped",
                SingularGramWarning,
            )
            eligible[j] = False
            continue
        chol[k, k] = np.sqrt(pivot_sq)
        active.append(j)
        eligible[j] = False

        sub = chol[: k + 1, : k + 1]
        rhs = d[:, active].T @ y
        s_active = np.linalg.solve(sub.T, np.linalg.solve(sub, rhs))
        residual = y - d[:, active] @ s_active
        res_norm = float(np.linalg.norm(residual))

    if active:
        coeffs[active] = s_active
    return SparseCode(coeffs, active, res_norm)


def _estimate_lipschitz(gram: np.ndarray) -> float:
    """Power-iteration estimate of the largest eigenvalue of D^T D, padded 1%."""
    n = gram.shape[0]
    v = np.random.default_rng(0).standard_normal(n)
    v /= np.linalg.norm(v)
    eig = 0.0
    for _ in range(200):
        z = gram @ v
        new_eig = float(np.linalg.norm(z))
        if new_eig <= 1e-300:
            return 1e-300
        v = z / new_eig
        if abs(new_eig - eig) <= 1e-12 * new_eig:
            eig = new_eig
            break
        eig = new_eig
    return eig * 1.01


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def ista_encode(
    y: np.ndarray,
    dictionary,
    lam: float,
    max_iter: int = ISTA_MAX_ITER,
    tol: float = ISTA_STEP_TOL,
) -> SparseCode:
    """l1-regularized sparse coding by iterative shrinkage-thresholding.

    Minimizes 0.5 ||y - D s||^2 + lam ||s||_1 with the proximal gradient
    iteration s <- soft_threshold(s - (1/L) D^T (D s - y), lam / L), where
    L exceeds the largest eigenvalue of D^T D so the objective never
    increases. Stops when the sup-norm step falls to ``tol`` or at
    ``max_iter``.
    """
    d = _atom_matrix(dictionary)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError("l1 weight must be >= 0")
    n = d.shape[1]
    # D^T (D s - y) factored through the Gram matrix: one matvec per iteration.
    gram = d.T @ d
    dty = d.T @ y
    lip = _estimate_lipschitz(gram)
    step = 1.0 / lip
    thresh = lam / lip
    s = np.zeros(n)
    for _ in range(max_iter):
        grad = gram @ s - dty
        s_new = _soft_threshold(s - step * grad, thresh)
        if not np.all(np.isfinite(s_new)):
            raise NonFiniteError("non-finite coefficients during ISTA iteration")
        delta = float(np.max(np.abs(s_new - s))) if n else 0.0
        s = s_new
        if delta <= tol:
            break

    residual = y - d @ s
    support = [int(i) for i in np.flatnonzero(s)]
    return SparseCode(s, support, float(np.linalg.norm(residual)))


def batch_encode(columns: np.ndarray, dictionary, config: CoderConfig) -> list[SparseCode]:
    """Apply the configured coder to every column; output order matches input."""
    d = _atom_matrix(dictionary)
    out = []
    for j in range(columns.shape[1]):
        try:
            if config.mode == "omp":
                out.append(omp_encode(columns[:, j], d, config.sparsity, config.tol))
            else:
                out.append(
                    ista_encode(
                        columns[:, j],
                        d,
                        config.lam,
                        config.max_iter,
                        config.tol if config.tol is not None else ISTA_STEP_TOL,
                    )
                )
        except (EmptyDictionaryError, NonFiniteError, ValueError) as exc:
            raise type(exc)(f"column {j}: {exc}") from exc
    return out
