"""Finite-dimensional Hilbert-space core.

States, operators, projective decompositions, unitary evolution and the
small model builders (ring lattices, qubit registers) that the rest of
the package works on.  Everything is dense complex linear algebra: the
target systems are desk-scale (dim up to a few thousand), where dense
eigendecompositions are both exact enough and fast enough.

All types are immutable after construction: underlying arrays are copies
with the writeable flag cleared, so instances can be shared freely
across threads.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "StateVector",
    "Operator",
    "Projector",
    "Decomposition",
    "ModelSpec",
    "build_ring_hamiltonian",
    "build_qubit_hamiltonian",
    "evolve_unitary",
    "heisenberg_projector",
    "position_decomposition",
    "tensor",
]

HERMITIAN_TOL = 1e-10
PROJECTOR_TOL = 1e-10
DECOMPOSITION_TOL = 1e-10
STATE_NORM_TOL = 1e-10


def _frozen_complex(a, shape_check=None) -> np.ndarray:
    arr = np.array(a, dtype=np.complex128)
    if shape_check is not None and arr.shape != shape_check:
        raise ValueError(f"expected array of shape {shape_check}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def max_abs(a) -> float:
    """Max-entry norm used by every tolerance check in this package."""
    a = np.asarray(a)
    return 0.0 if a.size == 0 else float(np.max(np.abs(a)))


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over a finite basis.

    Physical states are unit-normalized; branch vectors produced by class
    operators are sub-normalized and deliberately skip the check.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex(self.amplitudes)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("state vector must be a non-empty 1-d complex array")
        object.__setattr__(self, "amplitudes", arr)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def require_normalized(self) -> "StateVector":
        if abs(self.norm - 1.0) > STATE_NORM_TOL:
            raise ValueError(f"state is not normalized: |norm - 1| = {abs(self.norm - 1.0):.3e}")
        return self

    @staticmethod
    def basis(dim: int, index: int) -> "StateVector":
        if not 0 <= index < dim:
            raise ValueError(f"basis index {index} outside [0, {dim})")
        amp = np.zeros(dim, dtype=np.complex128)
        amp[index] = 1.0
        return StateVector(amp)

    @staticmethod
    def uniform(dim: int) -> "StateVector":
        return StateVector(np.full(dim, 1.0 / np.sqrt(dim), dtype=np.complex128))


@dataclass(frozen=True)
class Operator:
    """Dense complex square matrix on the model Hilbert space."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = _frozen_complex(self.matrix)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError("operator must be a non-empty square complex matrix")
        object.__setattr__(self, "matrix", arr)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> "Operator":
        return Operator(self.matrix.conj().T)

    def hermiticity_defect(self) -> float:
        return max_abs(self.matrix - self.matrix.conj().T)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_defect() <= tol

    def unitarity_defect(self) -> float:
        return max_abs(self.matrix.conj().T @ self.matrix - np.eye(self.dim))

    def __matmul__(self, other: "Operator") -> "Operator":
        return Operator(self.matrix @ other.matrix)

    def apply(self, state: StateVector) -> StateVector:
        if state.dim != self.dim:
            raise ValueError(f"dimension mismatch: operator {self.dim}, state {state.dim}")
        return StateVector(self.matrix @ state.amplitudes)


@dataclass(frozen=True)
class Projector:
    """Hermitian idempotent operator; validated at construction."""

    op: Operator

    def __post_init__(self):
        m = self.op.matrix
        idem = max_abs(m @ m - m)
        if idem > PROJECTOR_TOL:
            raise ValueError(f"not idempotent: max|P^2 - P| = {idem:.3e}")
        if self.op.hermiticity_defect() > PROJECTOR_TOL:
            raise ValueError(
                f"not hermitian: max|P - P^dagger| = {self.op.hermiticity_defect():.3e}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @property
    def dim(self) -> int:
        return self.op.dim

    @property
    def rank(self) -> float:
        return float(np.trace(self.matrix).real)

    @staticmethod
    def onto_indices(dim: int, indices: Iterable[int]) -> "Projector":
        diag = np.zeros(dim)
        idx = list(indices)
        if any(not 0 <= i < dim for i in idx):
            raise ValueError(f"projector indices out of range for dim {dim}")
        diag[idx] = 1.0
        return Projector(Operator(np.diag(diag).astype(np.complex128)))


@dataclass(frozen=True)
class Decomposition:
    """Exhaustive set of mutually orthogonal projectors, one label each."""

    projectors: tuple
    labels: tuple

    def __post_init__(self):
        projs = tuple(self.projectors)
        labels = tuple(self.labels)
        if not projs:
            raise ValueError("decomposition needs at least one projector")
        if len(labels) != len(projs):
            raise ValueError(f"{len(projs)} projectors but {len(labels)} labels")
        if len(set(labels)) != len(labels):
            raise ValueError("decomposition labels must be unique")
        dim = projs[0].dim
        if any(p.dim != dim for p in projs):
            raise ValueError("all projectors in a decomposition must share one dimension")
        total = sum(p.matrix for p in projs)
        defect = max_abs(total - np.eye(dim))
        if defect > DECOMPOSITION_TOL:
            raise ValueError(f"not exhaustive: max|sum P - I| = {defect:.3e}")
        for a in range(len(projs)):
            for b in range(a + 1, len(projs)):
                cross = max_abs(projs[a].matrix @ projs[b].matrix)
                if cross > DECOMPOSITION_TOL:
                    raise ValueError(
                        f"projectors {labels[a]!r} and {labels[b]!r} not orthogonal: "
                        f"max|P_a P_b| = {cross:.3e}"
                    )
        object.__setattr__(self, "projectors", projs)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.projectors[0].dim

    def __len__(self) -> int:
        return len(self.projectors)

    @staticmethod
    def trivial(dim: int) -> "Decomposition":
        return Decomposition((Projector(Operator(np.eye(dim, dtype=np.complex128))),), ("all",))


# ---------------------------------------------------------------------------
# model builders


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def build_ring_hamiltonian(sites: int, hopping: float, potential: Sequence[float]) -> Operator:
    """Nearest-neighbor ring: -hopping on the links, potential on the diagonal."""
    if sites < 2:
        raise ValueError(f"ring needs at least 2 sites, got {sites}")
    pot = np.asarray(potential, dtype=float)
    if pot.shape != (sites,):
        raise ValueError(f"potential length {pot.shape} does not match sites {sites}")
    h = np.diag(pot).astype(np.complex128)
    for i in range(sites):
        j = (i + 1) % sites
        h[i, j] = -hopping
        h[j, i] = -hopping
    return Operator(h)


def build_qubit_hamiltonian(qubits: int, couplings: dict) -> Operator:
    """Transverse/longitudinal fields plus optional nearest-neighbor zz chain.

    couplings: {"hx": float, "hz": float, "jzz": float}, all defaulting to 0.
    """
    if qubits < 1:
        raise ValueError(f"need at least 1 qubit, got {qubits}")
    known = {"hx", "hz", "jzz"}
    unknown = set(couplings) - known
    if unknown:
        raise ValueError(f"unknown qubit couplings: {sorted(unknown)}")
    hx = float(couplings.get("hx", 0.0))
    hz = float(couplings.get("hz", 0.0))
    jzz = float(couplings.get("jzz", 0.0))
    dim = 2**qubits
    h = np.zeros((dim, dim), dtype=np.complex128)

    def one_site(op, site):
        mats = [np.eye(2, dtype=np.complex128)] * qubits
        mats[site] = op
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    for q in range(qubits):
        h += hx * one_site(_PAULI["x"], q) + hz * one_site(_PAULI["z"], q)
    for q in range(qubits - 1):
        h += jzz * one_site(_PAULI["z"], q) @ one_site(_PAULI["z"], q + 1)
    return Operator(h)


@dataclass(frozen=True)
class ModelSpec:
    """Declarative model description used by the scenario layer.

    kind "ring-lattice": sites_or_qubits sites, hopping + per-site potential.
    kind "qubit-register": 2**n dimensional, couplings {hx, hz, jzz}.
    kind "composite" is reserved for measurement scenarios, which carry the
    event structure a flat spec cannot.
    """

    kind: str
    sites_or_qubits: int
    hopping: float = 0.0
    potential: tuple = ()
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("ring-lattice", "qubit-register", "composite"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.sites_or_qubits < 1:
            raise ValueError("sites_or_qubits must be positive")

    @property
    def dim(self) -> int:
        if self.kind == "qubit-register":
            return 2**self.sites_or_qubits
        return self.sites_or_qubits

    def build_hamiltonian(self) -> Operator:
        if self.kind == "ring-lattice":
            pot = self.potential if self.potential else (0.0,) * self.sites_or_qubits
            return build_ring_hamiltonian(self.sites_or_qubits, self.hopping, pot)
        if self.kind == "qubit-register":
            return build_qubit_hamiltonian(self.sites_or_qubits, dict(self.couplings))
        raise ValueError("composite models are assembled by the measurement scenario layer")


# ---------------------------------------------------------------------------
# operations


def evolve_unitary(H: Operator, t: float) -> Operator:
    """U = exp(-iHt) through the eigendecomposition of hermitian H (hbar = 1)."""
    defect = H.hermiticity_defect()
    if defect > HERMITIAN_TOL:
        raise ValueError(f"Hamiltonian not hermitian: max|H - H^dagger| = {defect:.3e}")
    w, v = np.linalg.eigh(H.matrix)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return Operator(u)


def heisenberg_projector(P: Projector, H: Operator, t: float) -> Projector:
    """Conjugate P into the Heisenberg picture at time t: U(t)^dagger P U(t)."""
    u = evolve_unitary(H, t).matrix
    return Projector(Operator(u.conj().T @ P.matrix @ u))


def position_decomposition(dim: int, regions: Sequence[Iterable[int]], labels=None) -> Decomposition:
    """Diagonal 0/1 projectors onto disjoint index regions covering the basis."""
    region_lists = [sorted(int(i) for i in r) for r in regions]
    flat = [i for r in region_lists for i in r]
    out_of_range = sorted({i for i in flat if not 0 <= i < dim})
    if out_of_range:
        raise ValueError(f"regions contain indices {out_of_range} outside [0, {dim})")
    counts = Counter(flat)
    dups = sorted(i for i, c in counts.items() if c > 1)
    if dups:
        raise ValueError(f"regions overlap at indices {dups}")
    missing = sorted(set(range(dim)) - counts.keys())
    if missing:
        raise ValueError(f"regions leave indices {missing} uncovered")
    if labels is None:
        labels = tuple(range(len(region_lists)))
    projs = tuple(Projector.onto_indices(dim, r) for r in region_lists)
    return Decomposition(projs, tuple(labels))


def tensor(A: Operator, B: Operator) -> Operator:
    """Kronecker product, left factor on the most-significant axis."""
    return Operator(np.kron(A.matrix, B.matrix))
