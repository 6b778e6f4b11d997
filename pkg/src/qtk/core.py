"""State-vector simulation of qutrit registers.

Basis index convention: the base-3 number d0 d1 ... d_{n-1}, with qutrit 0
the most significant digit.  All routines work on plain ``numpy`` arrays
internally; :class:`QutritRegister` and :class:`GateMatrix` are thin validated
wrappers used at the public boundary.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

D = 3
MAX_QUTRITS = 12
MAX_UNITARY_QUTRITS = 6


class CapabilityError(RuntimeError):
    """Requested size exceeds what a dense routine is allowed to build."""


@dataclass(frozen=True, eq=False)
class GateMatrix:
    """Dense unitary on one or two qutrits."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape not in ((3, 3), (9, 9)):
            raise ValueError(f"gate matrix must be 3x3 or 9x9, got {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if err > 1e-12:
            raise ValueError(f"gate matrix is not unitary (max deviation {err:.2e})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def arity(self) -> int:
        return 1 if self.matrix.shape[0] == 3 else 2

    def dagger(self) -> "GateMatrix":
        return GateMatrix(self.matrix.conj().T)

    def __matmul__(self, other: "GateMatrix") -> "GateMatrix":
        return GateMatrix(self.matrix @ other.matrix)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


@dataclass
class QutritRegister:
    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUTRITS:
            raise ValueError(f"qutrit count must be in [1, {MAX_QUTRITS}], got {self.n}")
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != D**self.n:
            raise ValueError(f"expected {D**self.n} amplitudes, got {self.amplitudes.size}")

    @classmethod
    def basis(cls, digits: Sequence[int]) -> "QutritRegister":
        digits = tuple(int(d) for d in digits)
        amps = np.zeros(D ** len(digits), dtype=complex)
        amps[digits_to_index(digits)] = 1.0
        return cls(len(digits), amps)

    @classmethod
    def zeros(cls, n: int) -> "QutritRegister":
        return cls.basis((0,) * n)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "QutritRegister":
        return QutritRegister(self.n, self.amplitudes.copy())


@dataclass(frozen=True)
class BasisOutcome:
    digits: tuple

    def __post_init__(self):
        if any(d not in (0, 1, 2) for d in self.digits):
            raise ValueError(f"trits must be 0, 1 or 2: {self.digits}")

    def __str__(self):
        return "".join(str(d) for d in self.digits)


def digits_to_index(digits: Sequence[int]) -> int:
    idx = 0
    for d in digits:
        idx = idx * D + int(d)
    return idx


def index_to_digits(index: int, n: int) -> tuple:
    out = []
    for _ in range(n):
        index, r = divmod(index, D)
        out.append(r)
    return tuple(reversed(out))


def qubit_subspace_indices(n: int) -> np.ndarray:
    """Indices of the 2**n basis states with every trit in {0, 1}, in binary order."""
    weights = D ** np.arange(n - 1, -1, -1)
    bits = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(-1, n)
    return bits @ weights


# -- batched kernels ---------------------------------------------------------
# ``psi`` has shape (batch, 3**n); every kernel returns a new array.


def apply_1q(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    view = psi.reshape(b, D**q, D, D ** (n - q - 1))
    return np.matmul(u, view).reshape(b, -1)


def apply_1q_each(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    """Apply a per-batch-row 3x3 matrix ``u[k]`` to qutrit ``q`` of row ``k``."""
    b = psi.shape[0]
    view = psi.reshape(b, D**q, D, D ** (n - q - 1))
    return np.einsum("kij,kajc->kaic", u, view).reshape(b, -1)


def apply_2q(psi: np.ndarray, u: np.ndarray, a: int, c: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    t = psi.reshape((b,) + (D,) * n)
    u4 = u.reshape(D, D, D, D)
    t = np.tensordot(u4, t, axes=([2, 3], [a + 1, c + 1]))
    t = np.moveaxis(t, [0, 1], [a + 1, c + 1])
    return np.ascontiguousarray(t).reshape(b, -1)


def _check_targets(targets: Sequence[int], n: int, arity: int) -> tuple:
    targets = tuple(int(t) for t in targets)
    if len(targets) != arity:
        raise ValueError(f"gate of arity {arity} given {len(targets)} targets")
    if len(set(targets)) != len(targets):
        raise ValueError(f"duplicate targets {targets}")
    if any(not 0 <= t < n for t in targets):
        raise ValueError(f"targets {targets} out of range for {n} qutrits")
    return targets


def apply_gate(state: QutritRegister, gate: GateMatrix, targets: Sequence[int]) -> QutritRegister:
    """Return ``state`` with ``gate`` applied on ``targets`` (identity elsewhere)."""
    targets = _check_targets(targets, state.n, gate.arity)
    psi = state.amplitudes[None, :]
    if gate.arity == 1:
        out = apply_1q(psi, gate.matrix, targets[0], state.n)
    else:
        out = apply_2q(psi, gate.matrix, targets[0], targets[1], state.n)
    return QutritRegister(state.n, out[0])


def embed(gate: GateMatrix | np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """Full 3**n matrix of ``gate`` acting on ``targets``."""
    u = np.asarray(gate, dtype=complex)
    arity = 1 if u.shape[0] == 3 else 2
    targets = _check_targets(targets, n, arity)
    eye = np.eye(D**n, dtype=complex)
    if arity == 1:
        out = apply_1q(eye.T, u, targets[0], n)
    else:
        out = apply_2q(eye.T, u, targets[0], targets[1], n)
    return out.T


def circuit_unitary(circuit, n: int | None = None) -> np.ndarray:
    """Product of the embedded instruction unitaries, in circuit order."""
    from .gates import instruction_ops

    n = circuit.n if n is None else n
    if n > MAX_UNITARY_QUTRITS:
        raise CapabilityError(f"full unitary limited to {MAX_UNITARY_QUTRITS} qutrits, got {n}")
    psi = np.eye(D**n, dtype=complex)
    for instr in circuit.instructions:
        for u, targets in instruction_ops(instr, n):
            psi = _apply(psi, u, targets, n)
    return psi.T


def _apply(psi, u, targets, n):
    if len(targets) == 1:
        return apply_1q(psi, u, targets[0], n)
    return apply_2q(psi, u, targets[0], targets[1], n)


def simulate(circuit, state: QutritRegister | np.ndarray | None = None) -> QutritRegister:
    """Noiseless evolution of ``state`` (default |0...0>) through the unitary part of ``circuit``."""
    return QutritRegister(circuit.n, simulate_batch(circuit, _as_batch(state, circuit.n))[0])


def simulate_batch(circuit, psi: np.ndarray) -> np.ndarray:
    """Noiseless evolution of each row of ``psi`` (shape (batch, 3**n))."""
    from .gates import instruction_ops

    n = circuit.n
    psi = np.array(psi, dtype=complex)
    for instr in circuit.instructions:
        for u, targets in instruction_ops(instr, n):
            psi = _apply(psi, u, targets, n)
    return psi


def _as_batch(state, n):
    if state is None:
        psi = np.zeros((1, D**n), dtype=complex)
        psi[0, 0] = 1.0
        return psi
    amps = state.amplitudes if isinstance(state, QutritRegister) else np.asarray(state)
    return amps.reshape(1, -1)


def cnx_permutation(n: int) -> np.ndarray:
    """Index map of the generalized Toffoli on the 3**n basis (controls 0..n-2, target n-1)."""
    ones = digits_to_index((1,) * (n - 1)) * D
    perm = np.arange(D**n)
    perm[ones], perm[ones + 1] = ones + 1, ones
    return perm


def embedded_cnx_oracle(n: int) -> np.ndarray:
    """Permutation matrix of C^{n-1}X; identity on every basis state containing a 2."""
    if not 3 <= n <= MAX_UNITARY_QUTRITS:
        raise CapabilityError(f"oracle matrix available for 3 <= n <= {MAX_UNITARY_QUTRITS}")
    perm = cnx_permutation(n)
    out = np.zeros((D**n, D**n), dtype=complex)
    out[perm, np.arange(D**n)] = 1.0
    return out


def apply_cnx_oracle(state: QutritRegister) -> QutritRegister:
    if not 3 <= state.n <= MAX_QUTRITS:
        raise CapabilityError(f"oracle defined for 3 <= n <= {MAX_QUTRITS}")
    perm = cnx_permutation(state.n)
    out = np.empty_like(state.amplitudes)
    out[perm] = state.amplitudes
    return QutritRegister(state.n, out)


def state_fidelity(a: QutritRegister, b: QutritRegister) -> float:
    if a.n != b.n:
        raise ValueError(f"register sizes differ: {a.n} vs {b.n}")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def phase_aligned_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Max entrywise |u - e^{ia} v| with the phase fixed on v's largest-magnitude entry."""
    u = np.asarray(u)
    v = np.asarray(v)
    k = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    if abs(u[k]) < 1e-15:
        return float(np.max(np.abs(u - v)) + 1.0)
    phase = u[k] / v[k]
    phase /= abs(phase)
    return float(np.max(np.abs(u - phase * v)))


def sample_outcome(state: QutritRegister, rng: np.random.Generator) -> BasisOutcome:
    p = state.probabilities()
    k = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    k = min(k, p.size - 1)
    return BasisOutcome(index_to_digits(k, state.n))


def haar_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def embed_qubit_state(vec: np.ndarray, n: int) -> QutritRegister:
    amps = np.zeros(D**n, dtype=complex)
    amps[qubit_subspace_indices(n)] = vec
    return QutritRegister(n, amps)


def iter_bitstrings(n: int) -> Iterable[tuple]:
    return itertools.product((0, 1), repeat=n)
