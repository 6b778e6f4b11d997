"""Fluorescence readout models, confusion matrices and SPAM correction.

Readout is modeled logically: a trit-resolved projection followed by classical
misassignment.  |0> fluoresces ("bright", read as 0); |1> and |2> stay dark
(read as 1).  The leakage check repeats the readout after moving |2> to a
bright level, so a leaked ion reads dark then bright.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .core import D, QutritRegister, apply_1q, iter_bitstrings
from .gates import _r0j, _rzj

if TYPE_CHECKING:
    from .noise import NoiseProfile

MAX_CONDITION = 1e6


# -- vectorized pieces shared with the trajectory engine ----------------------


def sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index drawn from each row of ``probs`` using one uniform per row."""
    cum = np.cumsum(probs, axis=1)
    k = np.sum(cum < (u * cum[:, -1])[:, None], axis=1)
    return np.minimum(k, probs.shape[1] - 1)


def sample_trits(psi: np.ndarray, n: int, u: np.ndarray) -> np.ndarray:
    idx = sample_rows(np.abs(psi) ** 2, u)
    trits = np.empty((psi.shape[0], n), dtype=np.int8)
    for q in range(n - 1, -1, -1):
        idx, trits[:, q] = np.divmod(idx, D)
    return trits


def _flip(dark: np.ndarray, noise, u: np.ndarray) -> np.ndarray:
    p = np.where(dark, noise.flip_dark, noise.flip_bright)
    return dark ^ (u < p)


def main_bits(trits: np.ndarray, noise, u: np.ndarray) -> np.ndarray:
    """Read bit 1 for a dark ion (trit 1 or 2), with misassignment."""
    return _flip(trits != 0, noise, u).astype(np.uint8)


def leak_flags(trits: np.ndarray, bits: np.ndarray, noise, u: np.ndarray) -> np.ndarray:
    """Second readout with |2> made bright; flag = dark in the first, bright in the second."""
    second_dark = _flip(trits != 2, noise, u)
    return (bits == 1) & ~second_dark


def project_mid2(psi: np.ndarray, n: int, u: np.ndarray) -> tuple:
    """Project every qutrit onto |2> or span{|0>,|1>}; returns the new state and the bright mask."""
    psi = psi.copy()
    b = psi.shape[0]
    bright = np.zeros((b, n), dtype=bool)
    for q in range(n):
        v = psi.reshape(b, D**q, D, D ** (n - q - 1))
        p2 = np.sum(np.abs(v[:, :, 2, :]) ** 2, axis=(1, 2)) / np.sum(np.abs(v) ** 2, axis=(1, 2, 3))
        hit = u[:, q] < p2
        bright[:, q] = hit
        v[hit, :, :2, :] = 0.0
        v[~hit, :, 2, :] = 0.0
        psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    return psi, bright


def stark_shift(psi: np.ndarray, n: int, phase: float) -> np.ndarray:
    """Light shift accrued during one detection half: R_z^1(phase) on every ion."""
    if phase == 0:
        return psi
    z = _rzj(1, float(phase))
    for q in range(n):
        psi = apply_1q(psi, z, q, n)
    return psi


def mid_bits(bright: np.ndarray, noise, u: np.ndarray) -> np.ndarray:
    """Detected brightness after misassignment (a dark ion may read bright)."""
    return ~_flip(~bright, noise, u)


# -- single-shot API ------------------------------------------------------------


def main_readout(state: QutritRegister, profile: "NoiseProfile", rng: np.random.Generator) -> tuple:
    """Returns (bitstring, projected trit state)."""
    trits, bits = _main(state, profile, rng)
    return "".join(map(str, bits)), QutritRegister.basis(trits)


def _main(state, profile, rng):
    u = rng.random(1 + state.n)
    trits = sample_trits(state.amplitudes[None, :], state.n, u[:1])
    bits = main_bits(trits, profile, u[None, 1:])
    return trits[0], bits[0]


def leak_readout(state: QutritRegister, profile: "NoiseProfile", rng: np.random.Generator) -> tuple:
    """Main readout followed by the leakage check; returns (bitstring, per-ion leak flags)."""
    trits, bits = _main(state, profile, rng)
    flags = leak_flags(trits[None, :], bits[None, :], profile, rng.random((1, state.n)))[0]
    return "".join(map(str, bits)), tuple(bool(f) for f in flags)


def midcircuit_measure2(state: QutritRegister, profile: "NoiseProfile", rng: np.random.Generator,
                        dd: bool = True, involved: Sequence[int] | None = None) -> tuple:
    """|2>-only detection in two halves; with ``dd`` an R_x^{01}(pi) echo sits between them
    and R_x^{01}(-pi) follows, so the light shift leaves qubit-subspace states untouched."""
    n = state.n
    involved = tuple(range(n)) if involved is None else tuple(involved)
    psi = state.amplitudes[None, :].copy()
    seen = np.zeros((1, n), dtype=bool)
    for half in (0, 1):
        psi, bright = project_mid2(psi, n, rng.random((1, n)))
        seen |= bright
        psi = stark_shift(psi, n, profile.stark_phase)
        if dd:
            pulse = _r0j(1, np.pi if half == 0 else -np.pi, 0.0)
            for q in involved:
                psi = apply_1q(psi, pulse, q, n)
    read = mid_bits(seen, profile, rng.random((1, n)))
    scope = list(range(n)) if profile.mid_discard_all_ions else list(involved)
    return bool(read[0, scope].any()), QutritRegister(n, psi[0])


# -- distributions and confusion matrices -------------------------------------


def bitstrings(n: int) -> list:
    return ["".join(map(str, b)) for b in iter_bitstrings(n)]


@dataclass
class Distribution:
    """(Quasi-)probabilities over the 2**n bitstrings in binary order."""

    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != 2**self.n:
            raise ValueError(f"expected {2**self.n} values, got {self.values.size}")
        if abs(self.values.sum() - 1.0) > 1e-6:
            raise ValueError(f"distribution sums to {self.values.sum():.9f}, not 1")

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "Distribution":
        counts = np.asarray(counts, dtype=float)
        total = counts.sum()
        if total <= 0:
            raise ValueError("no counts")
        return cls(int(np.log2(counts.size)), counts / total)

    def __getitem__(self, bitstring: str) -> float:
        return float(self.values[int(bitstring, 2)])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bitstring", "value"])
        for s, v in zip(bitstrings(self.n), self.values):
            w.writerow([s, repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Distribution":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        vals = [float(v) for _, v in sorted(rows, key=lambda r: int(r[0], 2))]
        return cls(len(rows[0][0]), vals)


@dataclass
class ConfusionMatrix:
    """Column-stochastic: entry (i, j) = P(read i | prepared j)."""

    n: int
    matrix: np.ndarray
    shots: int = 0

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        dim = 2**self.n
        if self.matrix.shape != (dim, dim):
            raise ValueError(f"confusion matrix must be {dim}x{dim}")
        if np.any(self.matrix < 0):
            raise ValueError("confusion matrix entries must be non-negative")
        if np.max(np.abs(self.matrix.sum(axis=0) - 1.0)) > 1e-9:
            raise ValueError("confusion matrix columns must sum to 1")

    @classmethod
    def identity(cls, n: int) -> "ConfusionMatrix":
        return cls(n, np.eye(2**n))

    @classmethod
    def from_flip_rates(cls, n: int, p_bright: float, p_dark: float | None = None) -> "ConfusionMatrix":
        """Independent per-ion misassignment: 0 read as 1 with ``p_bright``, 1 read as 0 with ``p_dark``."""
        p_dark = p_bright if p_dark is None else p_dark
        one = np.array([[1 - p_bright, p_dark], [p_bright, 1 - p_dark]])
        m = np.ones((1, 1))
        for _ in range(n):
            m = np.kron(m, one)
        return cls(n, m)

    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "shots"])
        w.writerow([self.n, self.shots])
        for row in self.matrix:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        n, shots = int(rows[1][0]), int(rows[1][1])
        return cls(n, np.array([[float(x) for x in r] for r in rows[2:]]), shots)

    def save(self, path: str | Path):
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> "ConfusionMatrix":
        return cls.from_csv(Path(path).read_text())


def estimate_confusion(n: int, profile: "NoiseProfile", shots_per_state: int, *, hardware=None,
                       jobs: int = 1, stream: int = 1 << 20) -> ConfusionMatrix:
    """Prepare each basis state with SK1 pulses, read it out, and tabulate the frequencies."""
    from .decomposer import basis_prep
    from .gates import DEFAULT_HARDWARE, measure_main
    from .noise import simulate_shots

    hw = hardware or DEFAULT_HARDWARE
    dim = 2**n
    m = np.zeros((dim, dim))
    for j, x in enumerate(bitstrings(n)):
        c = basis_prep(x, use_sk1=True, hw=hw)
        c.append(measure_main(hw))
        batch = simulate_shots(c, profile, shots_per_state, hardware=hw, stream=stream + j, jobs=jobs)
        m[:, j] = batch.counts() / shots_per_state
    return ConfusionMatrix(n, m, shots_per_state)


def spam_correct(dist: Distribution | np.ndarray, cm: ConfusionMatrix) -> Distribution:
    """Undo readout errors: solve C d = m for the prepared-state distribution d.

    The result may hold negative entries; they are kept as is.
    """
    m = dist.values if isinstance(dist, Distribution) else np.asarray(dist, dtype=float)
    if m.size != cm.matrix.shape[0]:
        raise ValueError("distribution and confusion matrix sizes differ")
    cond = cm.condition()
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise np.linalg.LinAlgError(f"confusion matrix is ill-conditioned (condition number {cond:.3g})")
    return Distribution(cm.n, np.linalg.solve(cm.matrix, m))


def post_select(records) -> tuple:
    """Keep shots with no mid-circuit brightness and no leak flag; returns (kept, kept fraction)."""
    from .noise import ShotBatch

    if isinstance(records, ShotBatch):
        if len(records) == 0:
            raise ValueError("no shots to post-select")
        mask = records.keep_mask()
        return mask, float(mask.mean())
    records = list(records)
    if not records:
        raise ValueError("no shots to post-select")
    kept = [r for r in records if not r.mid_flag and not any(r.leaked)]
    return kept, len(kept) / len(records)
