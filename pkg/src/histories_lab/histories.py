"""Coarse-grained histories of a closed system.

A history is a sequence of alternatives, one exhaustive projective
decomposition per time.  Chaining the Heisenberg-picture projectors
(latest time leftmost) gives the class operator of each history; applied
to the initial state it produces the branch state vectors, whose Gram
matrix is the decoherence functional.  The diagonal carries candidate
probabilities; they obey the probability sum rules exactly when the
off-diagonal interference vanishes, and only approximately otherwise.
``check_decoherence`` measures that interference with a normalized
off-diagonal statistic and ``coarse_grain`` merges alternatives so the
additivity of probabilities under coarse graining can be tested directly.

Histories are enumerated lexicographically in their index tuples
(alpha_1, ..., alpha_n); every array in this module follows that order.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .hilbert import (
    Decomposition,
    Operator,
    Projector,
    StateVector,
    evolve_unitary,
    heisenberg_projector,
    max_abs,
)

__all__ = [
    "HistoryGrid",
    "HistoryIndex",
    "ClassOperator",
    "DecoherenceReport",
    "class_operator",
    "branch_vector",
    "branch_table",
    "decoherence_matrix",
    "check_decoherence",
    "probabilities",
    "coarse_grain",
    "history_labels",
]

DEFAULT_MAX_HISTORIES = 4096
DEFAULT_EPSILON_EXACT = 1e-8
DEFAULT_EPSILON_GENERIC = 1e-3

# Relative floor below which a branch counts as zero-probability and is
# excluded from the normalized interference measure (0/0 is undefined and
# such branches cannot affect the sum rules).
ZERO_BRANCH_FLOOR = 1e-14


@dataclass(frozen=True)
class HistoryGrid:
    """Times, one exhaustive decomposition per time, and the Hamiltonian."""

    times: tuple
    decompositions: tuple
    hamiltonian: Operator

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        decomps = tuple(self.decompositions)
        if len(times) == 0:
            raise ValueError("a history grid needs at least one time")
        if len(times) != len(decomps):
            raise ValueError(f"{len(times)} times but {len(decomps)} decompositions")
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError(f"times must be strictly increasing, got {times}")
        dim = self.hamiltonian.dim
        for k, d in enumerate(decomps):
            if d.dim != dim:
                raise ValueError(
                    f"decomposition at t={times[k]} has dim {d.dim}, Hamiltonian has {dim}"
                )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "decompositions", decomps)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def n_histories(self) -> int:
        n = 1
        for d in self.decompositions:
            n *= len(d)
        return n


@dataclass(frozen=True)
class HistoryIndex:
    """One alternative per time, indexing into the grid's decompositions."""

    alternatives: tuple

    def __post_init__(self):
        object.__setattr__(self, "alternatives", tuple(int(a) for a in self.alternatives))

    def validate_for(self, grid: HistoryGrid) -> None:
        if len(self.alternatives) != grid.n_times:
            raise ValueError(
                f"index has {len(self.alternatives)} entries for a {grid.n_times}-time grid"
            )
        for k, a in enumerate(self.alternatives):
            if not 0 <= a < len(grid.decompositions[k]):
                raise ValueError(
                    f"alternative {a} out of range at time {grid.times[k]} "
                    f"(decomposition has {len(grid.decompositions[k])} members)"
                )


@dataclass(frozen=True)
class ClassOperator:
    """Chain of Heisenberg projectors for one history (not itself a projector for n > 1)."""

    op: Operator
    index: HistoryIndex

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix


@dataclass(frozen=True)
class DecoherenceReport:
    """Decoherence functional, its diagonal, and the interference diagnostics."""

    matrix: np.ndarray
    probabilities: np.ndarray
    epsilon: float
    decoherent: bool
    max_normalized_offdiag: float
    labels: tuple

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        p = np.array(self.probabilities, dtype=float)
        m.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", tuple(self.labels))


def heisenberg_decompositions(grid: HistoryGrid) -> list:
    """Projector matrices per time, conjugated to Heisenberg picture."""
    out = []
    for t, decomp in zip(grid.times, grid.decompositions):
        u = evolve_unitary(grid.hamiltonian, t).matrix
        out.append([u.conj().T @ p.matrix @ u for p in decomp.projectors])
    return out


def history_labels(sizes: Sequence[int]) -> list:
    """All index tuples in lexicographic order for the given per-time sizes."""
    return list(product(*(range(s) for s in sizes)))


def class_operator(grid: HistoryGrid, index: HistoryIndex) -> ClassOperator:
    """Time-ordered product of Heisenberg projectors, latest time leftmost."""
    index.validate_for(grid)
    mat = np.eye(grid.dim, dtype=np.complex128)
    for t, decomp, a in zip(grid.times, grid.decompositions, index.alternatives):
        pk = heisenberg_projector(decomp.projectors[a], grid.hamiltonian, t)
        mat = pk.matrix @ mat
    return ClassOperator(Operator(mat), index)


def branch_vector(c: ClassOperator, psi: StateVector) -> StateVector:
    """|Psi_alpha> = C_alpha |Psi>; generally sub-normalized."""
    return c.op.apply(psi)


def branch_table(projector_sets: Sequence[Sequence[np.ndarray]], psi: np.ndarray,
                 max_histories: int = DEFAULT_MAX_HISTORIES):
    """Branch vectors for every history of already-Heisenberg projector sets.

    Expands time by time, so the K vectors cost K chained matrix-vector
    products instead of K full operator chains.  Returns (branches, labels)
    with branches[k] the branch vector of labels[k], lexicographic order.
    """
    sizes = [len(s) for s in projector_sets]
    total = int(np.prod(sizes)) if sizes else 1
    if total > max_histories:
        raise ValueError(
            f"history count {total} exceeds the cap {max_histories}; "
            "coarse-grain or raise max_histories"
        )
    vectors = [np.asarray(psi, dtype=np.complex128)]
    for mats in projector_sets:
        vectors = [m @ v for v in vectors for m in mats]
    labels = history_labels(sizes)
    return np.array(vectors), labels


def decoherence_matrix(grid: HistoryGrid, psi: StateVector,
                       max_histories: int = DEFAULT_MAX_HISTORIES) -> np.ndarray:
    """Gram matrix <Psi_alpha|Psi_alpha'> of all branch vectors (hermitian K x K)."""
    if psi.dim != grid.dim:
        raise ValueError(f"state dim {psi.dim} does not match grid dim {grid.dim}")
    decomps = heisenberg_decompositions(grid)
    branches, _ = branch_table(decomps, psi.amplitudes, max_histories)
    return branches.conj() @ branches.T


def check_decoherence(matrix: np.ndarray, epsilon: float, labels=None,
                      weak: bool = False) -> DecoherenceReport:
    """Judge a decoherence functional against a normalized interference bound.

    Decoherent iff |D_ab| / sqrt(p_a p_b) <= epsilon for every pair of
    branches with non-negligible probability; ``weak=True`` tests only the
    real part of the interference.  Zero-probability branches (relative
    floor ZERO_BRANCH_FLOOR) are skipped.
    """
    d = np.asarray(matrix, dtype=np.complex128)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("decoherence matrix must be square")
    herm = max_abs(d - d.conj().T)
    if herm > 1e-9:
        raise ValueError(f"matrix is not hermitian: max|D - D^dagger| = {herm:.3e}")
    p = np.real(np.diag(d)).copy()
    k = d.shape[0]
    if labels is None:
        labels = tuple(range(k))
    floor = ZERO_BRANCH_FLOOR * max(p.max(initial=0.0), 0.0)
    max_norm = 0.0
    for a in range(k):
        if p[a] <= floor:
            continue
        for b in range(a + 1, k):
            if p[b] <= floor:
                continue
            off = abs(d[a, b].real) if weak else abs(d[a, b])
            max_norm = max(max_norm, off / np.sqrt(p[a] * p[b]))
    return DecoherenceReport(
        matrix=d,
        probabilities=p,
        epsilon=float(epsilon),
        decoherent=bool(max_norm <= epsilon),
        max_normalized_offdiag=float(max_norm),
        labels=tuple(labels),
    )


def decoherence_report(grid: HistoryGrid, psi: StateVector, epsilon: float = DEFAULT_EPSILON_GENERIC,
                       max_histories: int = DEFAULT_MAX_HISTORIES,
                       weak: bool = False) -> DecoherenceReport:
    """decoherence_matrix followed by check_decoherence, labels included."""
    d = decoherence_matrix(grid, psi, max_histories)
    labels = history_labels([len(dc) for dc in grid.decompositions])
    return check_decoherence(d, epsilon, labels=labels, weak=weak)


def probabilities(report: DecoherenceReport) -> np.ndarray:
    """The diagonal of the decoherence functional.

    Meaningful as additive probabilities only when report.decoherent; the
    flag in the report is the caller's warning.
    """
    return report.probabilities.copy()


def coarse_grain(grid: HistoryGrid, merges: Sequence[Sequence[tuple]]) -> HistoryGrid:
    """Merge alternatives per time into a coarser exhaustive grid.

    merges[k] lists (new_label, old_labels) pairs that must partition the
    labels of decomposition k; merged projectors are the sums.
    """
    if len(merges) != grid.n_times:
        raise ValueError(f"need one merge map per time ({grid.n_times}), got {len(merges)}")
    new_decomps = []
    for k, (decomp, merge) in enumerate(zip(grid.decompositions, merges)):
        pos = {lab: i for i, lab in enumerate(decomp.labels)}
        used = []
        projs, labels = [], []
        for new_label, old_labels in merge:
            group = list(old_labels)
            if not group:
                raise ValueError(f"empty merge group {new_label!r} at time {grid.times[k]}")
            for lab in group:
                if lab not in pos:
                    raise ValueError(f"unknown label {lab!r} at time {grid.times[k]}")
            used.extend(group)
            total = sum(decomp.projectors[pos[lab]].matrix for lab in group)
            projs.append(Projector(Operator(total)))
            labels.append(new_label)
        if sorted(map(str, used)) != sorted(map(str, decomp.labels)):
            raise ValueError(
                f"merge map at time {grid.times[k]} is not a partition of the labels "
                f"{decomp.labels}"
            )
        new_decomps.append(Decomposition(tuple(projs), tuple(labels)))
    return HistoryGrid(grid.times, tuple(new_decomps), grid.hamiltonian)
