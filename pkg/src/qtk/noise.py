"""Error channels and the Monte-Carlo trajectory engine.

Shots run in batches.  Every stochastic site of a circuit consumes a fixed
number of uniform draws, so a shot's random stream is laid out identically
whatever batch or thread it lands in.  Per-shot generators are seeded from
(master_seed, stream, shot_index), which makes results independent of the
degree of parallelism.

Three state backends share one compiled plan:

* dense: a (batch, 3**n) array of amplitudes;
* qubit: (batch, 2**n) amplitudes plus a leaked-ion mask, for circuits that
  never drive the 0-2 transition;
* classical: a (batch, n) array of trits.  Used when the input is a basis
  state and every gate maps basis states to basis states up to a phase.  All
  Kraus operators of the model then keep the state a single basis vector, so
  computational-basis statistics are exact.  Cross-talk rotations are the one
  non-monomial piece; they are Born-collapsed when the spectator is next used.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from . import readout
from .core import D, QutritRegister, apply_1q, apply_2q, qubit_subspace_indices
from .gates import (
    BARRIER,
    DEFAULT_HARDWARE,
    MEASURE_LEAK,
    MEASURE_MAIN,
    MEASURE_MID2,
    R0J,
    RZJ,
    XX,
    XXTILDE,
    Circuit,
    HardwareProfile,
    Instruction,
    _QB,
    _r0j,
    instruction_matrix,
    legality_check,
    measure_main,
)

SHOT_CHUNK = 1024


@dataclass(frozen=True)
class NoiseProfile:
    t1: float = 53e-3
    t2_star: float = 31e-3
    xx_fidelity: float = 0.963
    xx_leak_prob: float = 0.015
    decay_branch_to_0: float = 0.5
    crosstalk_ratio: float = 0.02
    spam_flip: float = 0.01
    # optional asymmetric readout errors; None falls back to spam_flip
    spam_bright_to_dark: float | None = None
    spam_dark_to_bright: float | None = None
    stark_phase: float = 0.0
    mid_discard_all_ions: bool = True
    decay: bool = True
    dephasing: bool = True
    depolarizing: bool = True
    leakage: bool = True
    crosstalk: bool = True
    spam: bool = True
    master_seed: int = 0

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2_star > 0):
            raise ValueError("t1 and t2_star must be positive")
        probs = ["xx_fidelity", "xx_leak_prob", "decay_branch_to_0", "spam_flip"]
        probs += [p for p in ("spam_bright_to_dark", "spam_dark_to_bright") if getattr(self, p) is not None]
        for name in probs:
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.crosstalk_ratio < 1.0:
            raise ValueError("crosstalk_ratio must lie in [0, 1)")
        if self.depol_prob > 1.0:
            raise ValueError("xx_fidelity below 0.2 has no depolarizing equivalent")

    @classmethod
    def noiseless(cls, master_seed: int = 0, **overrides) -> "NoiseProfile":
        off = dict(decay=False, dephasing=False, depolarizing=False, leakage=False, crosstalk=False, spam=False)
        off.update(overrides)
        return cls(master_seed=master_seed, **off)

    def with_(self, **changes) -> "NoiseProfile":
        return replace(self, **changes)

    @property
    def depol_prob(self) -> float:
        # uniform over the 15 non-identity Paulis; 3 of them fix a Bell state,
        # so the Bell-state fidelity of a noisy gate equals xx_fidelity
        return 1.25 * (1.0 - self.xx_fidelity)

    @property
    def flip_bright(self) -> float:
        if not self.spam:
            return 0.0
        return self.spam_flip if self.spam_bright_to_dark is None else self.spam_bright_to_dark

    @property
    def flip_dark(self) -> float:
        if not self.spam:
            return 0.0
        return self.spam_flip if self.spam_dark_to_bright is None else self.spam_dark_to_bright

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseProfile":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown noise keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "NoiseProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT_NOISE = NoiseProfile()


# -- schedule ------------------------------------------------------------------


@dataclass
class ScheduledCircuit:
    circuit: Circuit
    starts: list
    # per qutrit: (t0, t1, busy) segments tiling [0, total]
    intervals: list
    total: float

    def idle_time(self, q: int) -> float:
        return sum(t1 - t0 for t0, t1, busy in self.intervals[q] if not busy)


def schedule(circuit: Circuit, profile: HardwareProfile = DEFAULT_HARDWARE) -> ScheduledCircuit:
    """Serial schedule: one instruction at a time, in circuit order."""
    problems = legality_check(circuit, profile)
    if problems:
        raise ValueError("illegal circuit: " + "; ".join(problems))
    t = 0.0
    starts = []
    intervals = [[] for _ in range(circuit.n)]
    for ins in circuit.instructions:
        starts.append(t)
        if ins.duration > 0:
            busy = set(ins.targets or range(circuit.n))
            for q in range(circuit.n):
                intervals[q].append((t, t + ins.duration, q in busy))
        t += ins.duration
    return ScheduledCircuit(circuit, starts, intervals, t)


# -- batched channel kernels -----------------------------------------------------
# Dense kernels take psi of shape (b, 3**n) plus one uniform per row per draw.


def _level_view(psi, q, n):
    b = psi.shape[0]
    return psi.reshape(b, D**q, D, D ** (n - q - 1))


def _normalize(psi):
    return psi / np.linalg.norm(psi, axis=1, keepdims=True)


def _pop(view, level):
    return np.sum(np.abs(view[:, :, level, :]) ** 2, axis=(1, 2))


def _jump_to(psi, q, n, src, dst, rows):
    """Kraus |dst><src| on qutrit q for the selected rows (state renormalized)."""
    v = _level_view(psi, q, n)
    moved = v[rows, :, src, :].copy()
    v[rows] = 0.0
    v[rows, :, dst, :] = moved


def decay_dense(psi, q, n, dt, t1, branch0, u_jump, u_branch):
    if dt <= 0:
        return psi
    psi = psi.copy()
    v = _level_view(psi, q, n)
    gamma = 1.0 - math.exp(-dt / t1)
    jump = u_jump < _pop(v, 1) * gamma
    to0 = jump & (u_branch < branch0)
    to2 = jump & ~to0
    _jump_to(psi, q, n, 1, 0, to0)
    _jump_to(psi, q, n, 1, 2, to2)
    stay = ~jump
    v[stay, :, 1, :] *= math.exp(-dt / (2 * t1))
    return _normalize(psi)


def dephase_dense(psi, q, n, dt, t2, u):
    if dt <= 0:
        return psi
    phi = math.sqrt(2.0 * dt / t2) * ndtri(u)
    psi = psi.copy()
    v = _level_view(psi, q, n)
    v[:, :, 1, :] *= np.exp(1j * phi)[:, None, None]
    return psi


_PAULI = [
    np.eye(3, dtype=complex),
    np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex),
    np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 1]], dtype=complex),
    np.diag([1, -1, 1]).astype(complex),
]


def xx_error_dense(psi, a, b, n, p_dep, q_leak, u_dep, u_pauli, u_leak_a, u_leak_b):
    psi = psi.copy()
    if p_dep > 0:
        which = np.where(u_dep < p_dep, 1 + np.minimum((u_pauli * 15).astype(int), 14), 0)
        for k in np.unique(which[which > 0]):
            rows = which == k
            pa, pb = divmod(int(k), 4)
            sub = psi[rows]
            sub = apply_1q(sub, _PAULI[pa], a, n)
            sub = apply_1q(sub, _PAULI[pb], b, n)
            psi[rows] = sub
    if q_leak > 0:
        keep = math.sqrt(1.0 - q_leak)
        for q, u in ((a, u_leak_a), (b, u_leak_b)):
            v = _level_view(psi, q, n)
            jump = u < q_leak * _pop(v, 1)
            _jump_to(psi, q, n, 1, 2, jump)
            v[~jump, :, 1, :] *= keep
        psi = _normalize(psi)
    return psi


def decay_classical(trits, q, dt, t1, branch0, u_jump, u_branch):
    if dt <= 0:
        return
    jump = (trits[:, q] == 1) & (u_jump < 1.0 - math.exp(-dt / t1))
    trits[jump, q] = np.where(u_branch[jump] < branch0, 0, 2)


def xx_error_classical(trits, a, b, p_dep, q_leak, u_dep, u_pauli, u_leak_a, u_leak_b):
    if p_dep > 0:
        k = np.where(u_dep < p_dep, 1 + np.minimum((u_pauli * 15).astype(int), 14), 0)
        for q, pauli in ((a, k // 4), (b, k % 4)):
            flip = ((pauli == 1) | (pauli == 2)) & (trits[:, q] < 2)
            trits[flip, q] ^= 1
    if q_leak > 0:
        for q, u in ((a, u_leak_a), (b, u_leak_b)):
            trits[(trits[:, q] == 1) & (u < q_leak), q] = 2


# -- single-trajectory channel API ------------------------------------------


def _single(state: QutritRegister):
    return state.amplitudes[None, :].copy()


def apply_idle_decay(state: QutritRegister, qutrit: int, dt: float, rng: np.random.Generator,
                     profile: NoiseProfile = DEFAULT_NOISE) -> QutritRegister:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    u = rng.random(2)
    psi = decay_dense(_single(state), qutrit, state.n, dt, profile.t1, profile.decay_branch_to_0, u[:1], u[1:])
    return QutritRegister(state.n, psi[0])


def apply_dephasing(state: QutritRegister, qutrit: int, dt: float, rng: np.random.Generator,
                    profile: NoiseProfile = DEFAULT_NOISE) -> QutritRegister:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    u = rng.random(1)
    psi = dephase_dense(_single(state), qutrit, state.n, dt, profile.t2_star, u)
    return QutritRegister(state.n, psi[0])


def apply_xx_error(state: QutritRegister, pair: Sequence[int], profile: NoiseProfile,
                   rng: np.random.Generator) -> QutritRegister:
    a, b = pair
    u = rng.random(4)
    p_dep = profile.depol_prob if profile.depolarizing else 0.0
    q_leak = profile.xx_leak_prob if profile.leakage else 0.0
    psi = xx_error_dense(_single(state), a, b, state.n, p_dep, q_leak, u[0:1], u[1:2], u[2:3], u[3:4])
    return QutritRegister(state.n, psi[0])


def crosstalk_ops(instr: Instruction, n: int, ratio: float) -> list:
    """(matrix, spectator) pairs for an individually addressed R^{01} pulse."""
    if instr.kind != R0J or instr.params["j"] != 1 or not instr.targets or ratio == 0:
        return []
    u = _r0j(1, ratio * instr.params["theta"], instr.params["phi"])
    out = []
    for t in instr.targets:
        for s in (t - 1, t + 1):
            if 0 <= s < n and s not in instr.targets:
                out.append((u, s))
    return out


def apply_crosstalk(state: QutritRegister, instruction: Instruction, rng: np.random.Generator | None = None,
                    profile: NoiseProfile = DEFAULT_NOISE) -> QutritRegister:
    """Coherent spectator rotation; ``rng`` is unused and kept for a uniform channel signature."""
    psi = _single(state)
    for u, s in crosstalk_ops(instruction, state.n, profile.crosstalk_ratio if profile.crosstalk else 0.0):
        psi = apply_1q(psi, u, s, state.n)
    return QutritRegister(state.n, psi[0])


# -- compiled plan -------------------------------------------------------------------

FLUSH, GATE1, GATE2, XXERR, MAIN, LEAK, MID = range(7)


@dataclass
class _Step:
    op: int
    col: int = 0
    q: tuple = ()
    dt: float = 0.0
    mat: np.ndarray | None = None
    perm: np.ndarray | None = None
    extra: object = None


def _is_multiple(x, unit):
    k = x / unit
    return abs(k - round(k)) < 1e-9


def _monomial_perm(ins: Instruction):
    """Basis permutation of a monomial gate, or None if the gate is not monomial."""
    p = ins.params
    if ins.kind == RZJ:
        return np.arange(D)
    if ins.kind == R0J:
        if not _is_multiple(p["theta"], math.pi):
            return None
        perm = np.arange(D)
        if round(p["theta"] / math.pi) % 2:
            perm[[0, p["j"]]] = perm[[p["j"], 0]]
        return perm
    if ins.kind in (XX, XXTILDE):
        if not _is_multiple(p["chi"], math.pi / 2):
            return None
        perm = np.arange(D * D)
        if round(p["chi"] / (math.pi / 2)) % 2:
            perm[[0, 4]] = perm[[4, 0]]
            perm[[1, 3]] = perm[[3, 1]]
        return perm
    return None


def _compile(circuit: Circuit, noise: NoiseProfile) -> tuple:
    n = circuit.n
    steps = []
    col = 0
    pending_dt = [0.0] * n
    pending_rot = [None] * n
    ratio = noise.crosstalk_ratio if noise.crosstalk else 0.0
    idle = noise.decay or noise.dephasing
    monomial = True

    def flush(q):
        nonlocal col
        if (idle and pending_dt[q] > 0) or pending_rot[q] is not None:
            steps.append(_Step(FLUSH, col, (q,), pending_dt[q], pending_rot[q]))
            col += 4
        pending_dt[q] = 0.0
        pending_rot[q] = None

    def accrue(dt):
        for q in range(n):
            pending_dt[q] += dt

    for ins in circuit.instructions:
        if ins.kind == BARRIER:
            continue
        if ins.kind == MEASURE_MAIN:
            for q in range(n):
                flush(q)
            steps.append(_Step(MAIN, col))
            col += 1 + n
            continue
        if ins.kind == MEASURE_LEAK:
            steps.append(_Step(LEAK, col))
            col += n
            continue
        if ins.kind == MEASURE_MID2:
            for q in range(n):
                flush(q)
            scope = tuple(range(n)) if noise.mid_discard_all_ions or not ins.targets else ins.targets
            steps.append(_Step(MID, col, scope, extra=int(ins.params["half"])))
            col += 2 * n
            accrue(ins.duration)
            continue
        u = instruction_matrix(ins)
        perm = _monomial_perm(ins)
        monomial &= perm is not None
        if ins.kind in (XX, XXTILDE):
            a, b = ins.targets
            flush(a)
            flush(b)
            steps.append(_Step(GATE2, 0, (a, b), mat=u, perm=perm))
            if noise.depolarizing or noise.leakage:
                steps.append(_Step(XXERR, col, (a, b)))
                col += 4
        else:
            for q in ins.targets or range(n):
                flush(q)
                steps.append(_Step(GATE1, 0, (q,), mat=u, perm=perm))
            for m, s in crosstalk_ops(ins, n, ratio):
                pending_rot[s] = m if pending_rot[s] is None else m @ pending_rot[s]
        accrue(ins.duration)
    return steps, col, monomial


# -- execution -------------------------------------------------------------------------


@dataclass
class ShotBatch:
    """Array form of a run: main-readout bits, leak flags and mid-circuit flags per shot."""

    n: int
    bits: np.ndarray
    leaked: np.ndarray
    mid_flag: np.ndarray
    shot_index: np.ndarray
    master_seed: int
    stream: int
    has_leak_readout: bool = False
    has_mid_readout: bool = False

    def __len__(self):
        return self.bits.shape[0]

    def outcome_index(self) -> np.ndarray:
        weights = 1 << np.arange(self.n - 1, -1, -1)
        return self.bits.astype(np.int64) @ weights

    def counts(self, mask: np.ndarray | None = None) -> np.ndarray:
        idx = self.outcome_index()
        if mask is not None:
            idx = idx[mask]
        return np.bincount(idx, minlength=2**self.n)

    def any_leak(self) -> np.ndarray:
        return self.leaked.any(axis=1)

    def keep_mask(self) -> np.ndarray:
        return ~(self.any_leak() | self.mid_flag)

    def to_records(self) -> list:
        out = []
        for k in range(len(self)):
            out.append(ShotRecord(
                "".join(map(str, self.bits[k])),
                tuple(bool(x) for x in self.leaked[k]),
                bool(self.mid_flag[k]),
                (self.master_seed, self.stream, int(self.shot_index[k])),
            ))
        return out

    @classmethod
    def concat(cls, parts: list) -> "ShotBatch":
        p0 = parts[0]
        return cls(
            p0.n,
            np.concatenate([p.bits for p in parts]),
            np.concatenate([p.leaked for p in parts]),
            np.concatenate([p.mid_flag for p in parts]),
            np.concatenate([p.shot_index for p in parts]),
            p0.master_seed, p0.stream, p0.has_leak_readout, p0.has_mid_readout,
        )


@dataclass(frozen=True)
class ShotRecord:
    outcome: str
    leaked: tuple
    mid_flag: bool
    trajectory_seed: tuple

    def __post_init__(self):
        if len(self.leaked) != len(self.outcome):
            raise ValueError("one leak flag per ion required")
        if any(f and b != "1" for f, b in zip(self.leaked, self.outcome)):
            raise ValueError("a leaked ion must have read dark in the main readout")


def shot_uniforms(master_seed: int, stream: int, shots: np.ndarray, width: int) -> np.ndarray:
    out = np.empty((len(shots), width))
    for k, s in enumerate(shots):
        out[k] = np.random.default_rng([master_seed, stream, int(s)]).random(width)
    return out


def _apply_d(psi, u, q, n, d):
    b = psi.shape[0]
    return np.matmul(u, psi.reshape(b, d**q, d, d ** (n - q - 1))).reshape(b, -1)


def _apply2_d(psi, u, a, c, n, d):
    b = psi.shape[0]
    t = np.tensordot(u.reshape(d, d, d, d), psi.reshape((b,) + (d,) * n), axes=([2, 3], [a + 1, c + 1]))
    return np.ascontiguousarray(np.moveaxis(t, [0, 1], [a + 1, c + 1])).reshape(b, -1)


class _Dense:
    """Full 3**n amplitudes per shot."""

    def __init__(self, init, b, n, noise):
        self.n, self.noise = n, noise
        self.psi = np.repeat(np.asarray(init, dtype=complex)[None, :], b, axis=0)

    def gate1(self, st):
        self.psi = apply_1q(self.psi, st.mat, st.q[0], self.n)

    def gate2(self, st):
        self.psi = apply_2q(self.psi, st.mat, st.q[0], st.q[1], self.n)

    def flush(self, st, u):
        q, nz = st.q[0], self.noise
        if st.mat is not None:
            self.psi = apply_1q(self.psi, st.mat, q, self.n)
        if nz.decay:
            self.psi = decay_dense(self.psi, q, self.n, st.dt, nz.t1, nz.decay_branch_to_0, u[:, 0], u[:, 1])
        if nz.dephasing:
            self.psi = dephase_dense(self.psi, q, self.n, st.dt, nz.t2_star, u[:, 2])

    def xx_error(self, st, p_dep, q_leak, u):
        self.psi = xx_error_dense(self.psi, st.q[0], st.q[1], self.n, p_dep, q_leak, *u.T)

    def measure(self, u):
        return readout.sample_trits(self.psi, self.n, u)

    def mid(self, u):
        self.psi, bright = readout.project_mid2(self.psi, self.n, u)
        self.psi = readout.stark_shift(self.psi, self.n, self.noise.stark_phase)
        return bright


class _Qubit:
    """2**n amplitudes plus a leaked mask.

    Valid for circuits without R^{02} pulses: an ion in |2> is then untouched
    by every gate, so it factors out of the state.  Its bit becomes a dummy
    that single-ion gates may rotate freely; two-ion gates and Kraus operators
    skip it.
    """

    def __init__(self, init, b, n, noise):
        self.n, self.noise = n, noise
        self.psi = np.repeat(np.asarray(init, dtype=complex)[None, :], b, axis=0)
        self.leaked = np.zeros((b, n), dtype=bool)

    def _view(self, q):
        b = self.psi.shape[0]
        return self.psi.reshape(b, 2**q, 2, 2 ** (self.n - q - 1))

    def gate1(self, st):
        self.psi = _apply_d(self.psi, st.mat[:2, :2], st.q[0], self.n, 2)

    def gate2(self, st):
        a, c = st.q
        new = _apply2_d(self.psi, st.mat[np.ix_(_QB, _QB)], a, c, self.n, 2)
        skip = self.leaked[:, a] | self.leaked[:, c]
        if skip.any():
            new[skip] = self.psi[skip]
        self.psi = new

    def _p1(self, v):
        return np.sum(np.abs(v[:, :, 1, :]) ** 2, axis=(1, 2))

    def _leak(self, q, rows):
        v = self._view(q)
        v[rows, :, 0, :] = 0.0
        self.leaked[rows, q] = True

    def flush(self, st, u):
        q, nz = st.q[0], self.noise
        if st.mat is not None:
            self.psi = _apply_d(self.psi, st.mat[:2, :2], q, self.n, 2)
        self.psi = self.psi.copy()
        v = self._view(q)
        if nz.decay and st.dt > 0:
            active = ~self.leaked[:, q]
            gamma = 1.0 - math.exp(-st.dt / nz.t1)
            jump = active & (u[:, 0] < self._p1(v) * gamma)
            to0 = jump & (u[:, 1] < nz.decay_branch_to_0)
            v[to0, :, 0, :] = v[to0, :, 1, :]
            v[to0, :, 1, :] = 0.0
            self._leak(q, jump & ~to0)
            v[active & ~jump, :, 1, :] *= math.exp(-st.dt / (2 * nz.t1))
            self.psi = _normalize(self.psi)
            v = self._view(q)
        if nz.dephasing and st.dt > 0:
            phi = math.sqrt(2.0 * st.dt / nz.t2_star) * ndtri(u[:, 2])
            v[:, :, 1, :] *= np.exp(1j * phi)[:, None, None]

    def xx_error(self, st, p_dep, q_leak, u):
        a, c = st.q
        n = self.n
        if p_dep > 0:
            which = np.where(u[:, 0] < p_dep, 1 + np.minimum((u[:, 1] * 15).astype(int), 14), 0)
            for k in np.unique(which[which > 0]):
                rows = which == k
                pa, pb = divmod(int(k), 4)
                sub = _apply_d(self.psi[rows], _PAULI[pa][:2, :2], a, n, 2)
                self.psi[rows] = _apply_d(sub, _PAULI[pb][:2, :2], c, n, 2)
        if q_leak > 0:
            self.psi = self.psi.copy()
            keep = math.sqrt(1.0 - q_leak)
            for q, uq in ((a, u[:, 2]), (c, u[:, 3])):
                v = self._view(q)
                active = ~self.leaked[:, q]
                jump = active & (uq < q_leak * self._p1(v))
                self._leak(q, jump)
                v[active & ~jump, :, 1, :] *= keep
            self.psi = _normalize(self.psi)

    def measure(self, u):
        idx = readout.sample_rows(np.abs(self.psi) ** 2, u)
        trits = ((idx[:, None] >> np.arange(self.n - 1, -1, -1)) & 1).astype(np.int8)
        trits[self.leaked] = 2
        return trits

    def mid(self, u):
        if self.noise.stark_phase:
            z = np.diag([1.0, np.exp(1j * self.noise.stark_phase)])
            for q in range(self.n):
                self.psi = _apply_d(self.psi, z, q, self.n, 2)
        return self.leaked.copy()


class _Classical:
    """One basis state per shot, stored as trits."""

    def __init__(self, init, b, n, noise):
        self.n, self.noise = n, noise
        self.trits = np.repeat(np.array(init, dtype=np.int8)[None, :], b, axis=0)

    def gate1(self, st):
        q = st.q[0]
        self.trits[:, q] = st.perm[self.trits[:, q]]

    def gate2(self, st):
        a, c = st.q
        pair = st.perm[self.trits[:, a] * 3 + self.trits[:, c]]
        self.trits[:, a], self.trits[:, c] = pair // 3, pair % 3

    def flush(self, st, u):
        q, nz = st.q[0], self.noise
        if st.mat is not None:
            probs = np.abs(st.mat[:, self.trits[:, q]].T) ** 2
            self.trits[:, q] = readout.sample_rows(probs, u[:, 3])
        if nz.decay:
            decay_classical(self.trits, q, st.dt, nz.t1, nz.decay_branch_to_0, u[:, 0], u[:, 1])

    def xx_error(self, st, p_dep, q_leak, u):
        xx_error_classical(self.trits, st.q[0], st.q[1], p_dep, q_leak, *u.T)

    def measure(self, u):
        return self.trits.copy()

    def mid(self, u):
        return self.trits == 2


_BACKENDS = {"dense": _Dense, "qubit": _Qubit, "classical": _Classical}


def _initial_state(initial, n, backend):
    if isinstance(initial, QutritRegister):
        if backend == "qubit":
            return initial.amplitudes[qubit_subspace_indices(n)]
        return initial.amplitudes
    digits = (0,) * n if initial is None else tuple(int(d) for d in initial)
    if len(digits) != n or any(d not in (0, 1, 2) for d in digits):
        raise ValueError(f"initial basis state must have {n} trits")
    if backend == "classical":
        return digits
    if backend == "qubit":
        v = np.zeros(2**n, dtype=complex)
        v[int("".join(map(str, digits)), 2)] = 1.0
        return v
    return QutritRegister.basis(digits).amplitudes


def _run_chunk(steps, width, n, noise, backend, init, shots, stream):
    b = len(shots)
    u = shot_uniforms(noise.master_seed, stream, shots, width)
    state = _BACKENDS[backend](init, b, n, noise)
    p_dep = noise.depol_prob if noise.depolarizing else 0.0
    q_leak = noise.xx_leak_prob if noise.leakage else 0.0
    trits = bits = None
    leaked = np.zeros((b, n), dtype=bool)
    mid_flag = np.zeros(b, dtype=bool)
    has_leak = has_mid = False
    bright_seen = np.zeros((b, n), dtype=bool)
    for st in steps:
        c = st.col
        if st.op == GATE1:
            state.gate1(st)
        elif st.op == GATE2:
            state.gate2(st)
        elif st.op == FLUSH:
            state.flush(st, u[:, c : c + 4])
        elif st.op == XXERR:
            state.xx_error(st, p_dep, q_leak, u[:, c : c + 4])
        elif st.op == MAIN:
            trits = state.measure(u[:, c])
            bits = readout.main_bits(trits, noise, u[:, c + 1 : c + 1 + n])
        elif st.op == LEAK:
            has_leak = True
            leaked = readout.leak_flags(trits, bits, noise, u[:, c : c + n])
        elif st.op == MID:
            has_mid = True
            bright_seen |= state.mid(u[:, c : c + n])
            if st.extra == 1:
                seen = readout.mid_bits(bright_seen, noise, u[:, c + n : c + 2 * n])
                mid_flag |= seen[:, list(st.q)].any(axis=1)
                bright_seen[:] = False
    return ShotBatch(n, bits.astype(np.uint8), leaked, mid_flag, np.asarray(shots), noise.master_seed, stream,
                     has_leak, has_mid)


def choose_backend(circuit: Circuit, initial=None, backend: str = "auto") -> str:
    """Pick the cheapest exact state representation for ``circuit`` on ``initial``."""
    if backend not in ("auto",) + tuple(_BACKENDS):
        raise ValueError(f"unknown backend {backend!r}")
    if backend != "auto":
        return backend
    _, _, monomial = _compile(circuit, NoiseProfile.noiseless())
    register = isinstance(initial, QutritRegister)
    if monomial and not register:
        return "classical"
    no_02 = not any(i.kind == R0J and i.params["j"] == 2 for i in circuit.instructions)
    if register:
        outside = np.delete(initial.amplitudes, qubit_subspace_indices(initial.n))
        in_qubits = not np.any(np.abs(outside) > 0)
    else:
        in_qubits = initial is None or all(int(d) in (0, 1) for d in initial)
    return "qubit" if no_02 and in_qubits else "dense"


def simulate_shots(circuit: Circuit, noise: NoiseProfile, n_shots: int, *, hardware: HardwareProfile = DEFAULT_HARDWARE,
                   initial=None, stream: int = 0, jobs: int = 1, backend: str = "auto") -> ShotBatch:
    """Run ``n_shots`` trajectories and return the array form of the records."""
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    problems = legality_check(circuit, hardware)
    if problems:
        raise ValueError("illegal circuit: " + "; ".join(problems))
    if not any(i.kind == MEASURE_MAIN for i in circuit.instructions):
        circuit = Circuit(circuit.n, circuit.instructions + [measure_main(hardware)])
    backend = choose_backend(circuit, initial, backend)
    if backend == "classical" and isinstance(initial, QutritRegister):
        raise ValueError("classical backend needs a basis-state input")
    if backend == "qubit" and any(i.kind == R0J and i.params["j"] == 2 for i in circuit.instructions):
        raise ValueError("qubit backend cannot run R^02 pulses")
    steps, width, monomial = _compile(circuit, noise)
    if backend == "classical" and not monomial:
        raise ValueError("circuit has non-monomial gates; use the dense backend")
    init = _initial_state(initial, circuit.n, backend)
    chunks = [np.arange(s, min(s + SHOT_CHUNK, n_shots)) for s in range(0, n_shots, SHOT_CHUNK)]

    def work(shots):
        return _run_chunk(steps, width, circuit.n, noise, backend, init, shots, stream)

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return ShotBatch.concat(parts)


def run_shots(circuit: Circuit, profile: NoiseProfile, n_shots: int, **kwargs) -> list:
    """Trajectory executor; returns one :class:`ShotRecord` per shot in shot-index order."""
    return simulate_shots(circuit, profile, n_shots, **kwargs).to_records()
