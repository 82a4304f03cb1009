"""Online dictionary learning over patch streams.

One pass draws a patch, sparse-codes it with ISTA, folds the code into the
running second-moment statistics A and B, then takes one block coordinate
descent sweep over dictionary columns, projecting each onto the unit-norm
ball. Atoms whose accumulated energy stays at zero are re-seeded from a
random stored patch so they cannot stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coding import ista_encode
from .data import read_kv_file, save_matrix, load_matrix, write_kv_file
from .errors import NotEnoughPatchesError

DEAD_ATOM_EPS = 1e-10


@dataclass
class Dictionary:
    """Atoms (columns, l2 norm <= 1) plus the learning accumulators."""

    atoms: np.ndarray  # (M, N)
    stat_A: np.ndarray  # (N, N), sum of s s^T over draws
    stat_B: np.ndarray  # (M, N), sum of y s^T over draws
    trained_on: str = "clean-train"  # "clean-train" | "perturbed-test"
    seed: int = 0
    lam: float = 0.1

    @property
    def num_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass
class DictLearnConfig:
    num_atoms: int = 38
    lam: float = 0.1
    epochs: int = 2
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_atoms < 1:
            raise ValueError("num_atoms must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _patch_columns(patches) -> np.ndarray:
    cols = patches.data if hasattr(patches, "data") else np.asarray(patches)
    if cols.ndim != 2:
        raise ValueError(f"patches must form a 2-D column matrix, got shape {cols.shape}")
    return cols


def surrogate_objective(atoms: np.ndarray, stat_A: np.ndarray, stat_B: np.ndarray) -> float:
    """Quadratic model 0.5 Tr(D^T D A) - Tr(D^T B) the update sweep minimizes."""
    return 0.5 * float(np.sum((atoms @ stat_A) * atoms)) - float(np.sum(atoms * stat_B))


def init_dictionary(
    patches, num_atoms: int, seed: int, trained_on: str = "clean-train"
) -> Dictionary:
    """Seeded initialization: distinct nonzero patches scaled to unit norm."""
    cols = _patch_columns(patches)
    nonzero = cols[:, np.linalg.norm(cols, axis=0) > 1e-12]
    distinct = np.unique(nonzero.T, axis=0).T if nonzero.shape[1] else nonzero
    if distinct.shape[1] < num_atoms:
        raise NotEnoughPatchesError(
            f"{distinct.shape[1]} distinct nonzero patches < {num_atoms} atoms"
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(distinct.shape[1], size=num_atoms, replace=False)
    atoms = distinct[:, chosen] / np.linalg.norm(distinct[:, chosen], axis=0)
    m, n = atoms.shape
    return Dictionary(atoms, np.zeros((n, n)), np.zeros((m, n)), trained_on, seed)


def dictionary_update_step(
    atoms: np.ndarray,
    stat_A: np.ndarray,
    stat_B: np.ndarray,
    patches: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One block coordinate descent sweep over dictionary columns.

    Column j moves to u_j = (b_j - D a_j) / A_jj + d_j projected onto the
    unit ball, using columns already updated in this sweep. Columns with
    A_jj at zero are re-seeded from a random stored patch when patches and
    rng are supplied, otherwise left alone.
    """
    d = atoms.copy()
    for j in range(d.shape[1]):
        ajj = stat_A[j, j]
        if ajj > DEAD_ATOM_EPS:
            u = (stat_B[:, j] - d @ stat_A[:, j]) / ajj + d[:, j]
            d[:, j] = u / max(1.0, float(np.linalg.norm(u)))
        elif patches is not None and rng is not None:
            d[:, j] = _random_unit_patch(patches, rng, fallback=d[:, j])
    return d


def _random_unit_patch(cols: np.ndarray, rng: np.random.Generator, fallback: np.ndarray):
    for _ in range(100):
        candidate = cols[:, rng.integers(cols.shape[1])]
        norm = float(np.linalg.norm(candidate))
        if norm > 1e-12:
            return candidate / norm
    return fallback


def learn(
    patches,
    config: DictLearnConfig,
    trained_on: str = "clean-train",
    on_pass=None,
    on_epoch=None,
) -> Dictionary:
    """Run the online learning loop over a seeded shuffle of the patch set.

    Every draw sparse-codes one batch of patches (ISTA, weight config.lam),
    accumulates A += s s^T and B += y s^T, and runs one update sweep; draws
    that code to all-zero leave A, B and the dictionary untouched. The
    shuffle repeats for config.epochs passes. ``on_pass(step, before,
    after, max_norm)`` observes each sweep's surrogate objective;
    ``on_epoch(epoch, mean_residual)`` observes per-epoch mean coding
    residuals.
    """
    cols = _patch_columns(patches)
    dictionary = init_dictionary(cols, config.num_atoms, config.seed, trained_on)
    dictionary.lam = config.lam
    atoms, stat_a, stat_b = dictionary.atoms, dictionary.stat_A, dictionary.stat_B

    draw_rng = np.random.default_rng([config.seed, 1])
    reinit_rng = np.random.default_rng([config.seed, 2])
    n_patches = cols.shape[1]
    step = 0
    for epoch in range(config.epochs):
        order = draw_rng.permutation(n_patches)
        residuals = []
        for start in range(0, n_patches, config.batch_size):
            batch = order[start : start + config.batch_size]
            touched = False
            for i in batch:
                code = ista_encode(cols[:, i], atoms, config.lam)
                residuals.append(code.residual_norm)
                if code.support:
                    stat_a += np.outer(code.coefficients, code.coefficients)
                    stat_b += np.outer(cols[:, i], code.coefficients)
                    touched = True
            if not touched:
                continue
            before = surrogate_objective(atoms, stat_a, stat_b) if on_pass else None
            atoms[:] = dictionary_update_step(atoms, stat_a, stat_b, cols, reinit_rng)
            if on_pass:
                after = surrogate_objective(atoms, stat_a, stat_b)
                on_pass(step, before, after, float(np.linalg.norm(atoms, axis=0).max()))
            step += 1
        if on_epoch:
            on_epoch(epoch, float(np.mean(residuals)) if residuals else 0.0)
    return dictionary


def save_dictionary(dictionary: Dictionary, prefix) -> None:
    """Persist atoms as <prefix>.ddl1 plus a key=value metadata sidecar."""
    save_matrix(dictionary.atoms, str(prefix) + ".ddl1")
    write_kv_file(
        str(prefix) + ".meta",
        {
            "trained_on": dictionary.trained_on,
            "seed": dictionary.seed,
            "lambda": dictionary.lam,
            "num_atoms": dictionary.num_atoms,
        },
    )


def load_dictionary(prefix) -> Dictionary:
    atoms = load_matrix(str(prefix) + ".ddl1")
    meta = read_kv_file(str(prefix) + ".meta")
    m, n = atoms.shape
    return Dictionary(
        atoms,
        np.zeros((n, n)),
        np.zeros((m, n)),
        trained_on=meta.get("trained_on", "clean-train"),
        seed=int(meta.get("seed", 0)),
        lam=float(meta.get("lambda", 0.1)),
    )
