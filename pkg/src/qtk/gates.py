"""Native trapped-ion qutrit gate set, instruction IR and the addressing checker.

Single-qutrit rotations act in the two-level subspace {|0>, |j>}; the
Molmer-Sorensen interaction acts on {|0>, |1>} of each ion.  R^{02} pulses and
the R_z^0 / R_z^2 virtual phases come from a global microwave field, so under
the default hardware profile they can only address every ion at once.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import GateMatrix

R0J = "R0J"
RZJ = "RZJ"
XX = "XX"
XXTILDE = "XXTILDE"
BARRIER = "BARRIER"
MEASURE_MAIN = "MEASURE_MAIN"
MEASURE_LEAK = "MEASURE_LEAK"
MEASURE_MID2 = "MEASURE_MID2"

KINDS = (R0J, RZJ, XX, XXTILDE, BARRIER, MEASURE_MAIN, MEASURE_LEAK, MEASURE_MID2)
MEASURE_KINDS = (MEASURE_MAIN, MEASURE_LEAK, MEASURE_MID2)
UNITARY_KINDS = (R0J, RZJ, XX, XXTILDE)


@dataclass(frozen=True)
class HardwareProfile:
    """Addressing capabilities and nominal gate durations (seconds).

    ``crosstalk_ratio`` is descriptive here; the trajectory simulator reads the
    value carried by its noise profile.
    """

    individual_02_control: bool = False
    crosstalk_ratio: float = 0.02
    t_pi_01: float = 10e-6
    t_pi_02: float = 10e-6
    t_xx: float = 916e-6
    t_readout: float = 0.5e-3
    t_mid_half: float = 0.25e-3

    def __post_init__(self):
        for name in ("t_pi_01", "t_pi_02", "t_xx", "t_readout", "t_mid_half"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.crosstalk_ratio < 1:
            raise ValueError("crosstalk_ratio must lie in [0, 1)")


DEFAULT_HARDWARE = HardwareProfile()


# -- matrices ----------------------------------------------------------------


@lru_cache(maxsize=4096)
def _r0j(j: int, theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    m = np.eye(3, dtype=complex)
    m[0, 0] = m[j, j] = c
    m[0, j] = -1j * s * np.exp(-1j * phi)
    m[j, 0] = -1j * s * np.exp(1j * phi)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=1024)
def _rzj(j: int, theta: float) -> np.ndarray:
    m = np.eye(3, dtype=complex)
    m[j, j] = np.exp(1j * theta)
    m.setflags(write=False)
    return m


# basis positions of |00>, |01>, |10>, |11> in the 9-dim two-qutrit space
_QB = (0, 1, 3, 4)


@lru_cache(maxsize=1024)
def _xx(chi: float, chi_a: float = 0.0, chi_b: float = 0.0) -> np.ndarray:
    m = np.eye(9, dtype=complex)
    c, s = math.cos(chi), -1j * math.sin(chi)
    i00, i01, i10, i11 = _QB
    m[i00, i00] = m[i01, i01] = m[i10, i10] = m[i11, i11] = c
    m[i00, i11] = m[i11, i00] = s
    m[i01, i10] = m[i10, i01] = s
    if chi_a or chi_b:
        p = np.array([1.0, 1.0, 0.0])
        phase = np.exp(-1j * (chi_a * np.kron(p, np.ones(3)) + chi_b * np.kron(np.ones(3), p)))
        m = m * phase[None, :]
    m.setflags(write=False)
    return m


def r_0j(j: int, theta: float, phi: float) -> GateMatrix:
    """exp(-i sigma_phi theta / 2) in the {|0>, |j>} subspace."""
    if j not in (1, 2):
        raise ValueError(f"R0J level must be 1 or 2, got {j}")
    return GateMatrix(_r0j(j, float(theta), float(phi)))


def rz_j(j: int, theta: float) -> GateMatrix:
    """Virtual phase exp(i theta |j><j|)."""
    if j not in (0, 1, 2):
        raise ValueError(f"RZJ level must be 0, 1 or 2, got {j}")
    return GateMatrix(_rzj(j, float(theta)))


def xx(chi: float) -> GateMatrix:
    return GateMatrix(_xx(float(chi)))


def xx_tilde(chi: float, chi_a: float, chi_b: float) -> GateMatrix:
    """MS gate with the residual single-ion phases on levels 0 and 1 of each ion."""
    return GateMatrix(_xx(float(chi), float(chi_a), float(chi_b)))


# -- IR ------------------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    kind: str
    targets: tuple = ()
    params: dict = field(default_factory=dict)
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.duration < 0:
            raise ValueError("duration must be non-negative")

    @property
    def is_global(self) -> bool:
        return not self.targets

    def dagger(self) -> "Instruction":
        p = dict(self.params)
        if self.kind in (R0J, RZJ):
            p["theta"] = -p["theta"]
        elif self.kind == XX:
            p["chi"] = -p["chi"]
        elif self.kind == XXTILDE:
            for k in ("chi", "chi_a", "chi_b"):
                p[k] = -p[k]
        elif self.kind != BARRIER:
            raise ValueError(f"{self.kind} has no inverse")
        return replace(self, params=p)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "targets": list(self.targets),
            "params": dict(self.params),
            "duration_s": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Instruction":
        return cls(d["kind"], tuple(d.get("targets", ())), dict(d.get("params", {})), d.get("duration_s", 0.0))


@dataclass
class Circuit:
    n: int
    instructions: list = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("circuit needs at least one qutrit")
        self.instructions = list(self.instructions)

    def append(self, instr: Instruction) -> "Circuit":
        self.instructions.append(instr)
        return self

    def extend(self, instrs: Iterable[Instruction]) -> "Circuit":
        if isinstance(instrs, Circuit):
            instrs = instrs.instructions
        self.instructions.extend(instrs)
        return self

    def __add__(self, other: "Circuit") -> "Circuit":
        if other.n != self.n:
            raise ValueError("cannot concatenate circuits of different size")
        return Circuit(self.n, self.instructions + other.instructions)

    def __len__(self):
        return len(self.instructions)

    def __iter__(self):
        return iter(self.instructions)

    def count(self, kind: str) -> int:
        return sum(1 for i in self.instructions if i.kind == kind)

    def xx_count(self) -> int:
        return self.count(XX) + self.count(XXTILDE)

    def dagger(self) -> "Circuit":
        return Circuit(self.n, [i.dagger() for i in reversed(self.instructions)])

    def duration(self) -> float:
        return float(sum(i.duration for i in self.instructions))

    def to_dict(self) -> dict:
        return {"n": self.n, "instructions": [i.to_dict() for i in self.instructions]}

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(int(d["n"]), [Instruction.from_dict(i) for i in d["instructions"]])

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


# -- instruction builders ---------------------------------------------------


def rot(j: int, theta: float, phi: float, target: int | None = None, hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    """R^{0j}_phi(theta) on ``target``; ``None`` means every ion."""
    if j not in (1, 2):
        raise ValueError(f"R0J level must be 1 or 2, got {j}")
    t_pi = hw.t_pi_01 if j == 1 else hw.t_pi_02
    targets = () if target is None else (target,)
    return Instruction(R0J, targets, {"j": j, "theta": float(theta), "phi": float(phi)}, t_pi * abs(theta) / math.pi)


def rx(j: int, theta: float, target: int | None = None, hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return rot(j, theta, 0.0, target, hw)


def ry(j: int, theta: float, target: int | None = None, hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return rot(j, theta, math.pi / 2, target, hw)


def vz(j: int, theta: float, target: int | None = None) -> Instruction:
    """Virtual R_z^j(theta); zero duration."""
    if j not in (0, 1, 2):
        raise ValueError(f"RZJ level must be 0, 1 or 2, got {j}")
    targets = () if target is None else (target,)
    return Instruction(RZJ, targets, {"j": j, "theta": float(theta)}, 0.0)


def ms(chi: float, a: int, b: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return Instruction(XX, (a, b), {"chi": float(chi)}, hw.t_xx)


def ms_tilde(chi: float, chi_a: float, chi_b: float, a: int, b: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return Instruction(XXTILDE, (a, b), {"chi": float(chi), "chi_a": float(chi_a), "chi_b": float(chi_b)}, hw.t_xx)


def measure_main(hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return Instruction(MEASURE_MAIN, (), {}, hw.t_readout)


def measure_leak(hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    return Instruction(MEASURE_LEAK, (), {}, hw.t_readout)


def measure_mid2(half: int, targets: Sequence[int] = (), hw: HardwareProfile = DEFAULT_HARDWARE) -> Instruction:
    """One half of the |2>-only fluorescence detection; ``targets`` are the DD-protected ions."""
    return Instruction(MEASURE_MID2, tuple(targets), {"half": int(half)}, hw.t_mid_half)


def barrier() -> Instruction:
    return Instruction(BARRIER)


def sk1(theta: float, phi: float, target: int = 0, hw: HardwareProfile = DEFAULT_HARDWARE) -> list:
    """SK1 composite R^{01}_phi(theta): the target pulse then two 2*pi correction pulses."""
    if abs(theta) > 2 * math.pi:
        raise ValueError("SK1 needs |theta| <= 2*pi")
    delta = math.acos(-theta / (4 * math.pi))
    return [
        rot(1, theta, phi, target, hw),
        rot(1, 2 * math.pi, phi - delta, target, hw),
        rot(1, 2 * math.pi, phi + delta, target, hw),
    ]


# -- matrices of instructions ---------------------------------------------


def instruction_matrix(instr: Instruction) -> np.ndarray:
    p = instr.params
    if instr.kind == R0J:
        return _r0j(int(p["j"]), float(p["theta"]), float(p["phi"]))
    if instr.kind == RZJ:
        return _rzj(int(p["j"]), float(p["theta"]))
    if instr.kind == XX:
        return _xx(float(p["chi"]))
    if instr.kind == XXTILDE:
        return _xx(float(p["chi"]), float(p["chi_a"]), float(p["chi_b"]))
    raise ValueError(f"{instr.kind} is not unitary")


def instruction_ops(instr: Instruction, n: int) -> list:
    """(matrix, targets) pairs realising ``instr`` on ``n`` qutrits; measurements and barriers yield none."""
    if instr.kind not in UNITARY_KINDS:
        return []
    u = instruction_matrix(instr)
    if instr.kind in (XX, XXTILDE):
        return [(u, instr.targets)]
    targets = instr.targets or tuple(range(n))
    return [(u, (t,)) for t in targets]


# -- legality ------------------------------------------------------------------


def legality_check(circuit: Circuit, profile: HardwareProfile = DEFAULT_HARDWARE) -> list:
    """Addressing-rule violations of ``circuit``; an empty list means the circuit is legal."""
    out = []
    n = circuit.n
    seen_main = False
    for k, ins in enumerate(circuit.instructions):
        where = f"#{k} {ins.kind}"
        if any(not 0 <= t < n for t in ins.targets):
            out.append(f"{where}: target out of range for {n} qutrits")
        if len(set(ins.targets)) != len(ins.targets):
            out.append(f"{where}: duplicate targets")
        if seen_main and ins.kind not in (MEASURE_LEAK, BARRIER):
            out.append(f"{where}: only the leakage readout may follow the main readout")
        if ins.kind == R0J:
            j = ins.params.get("j")
            if j == 1 and ins.is_global:
                out.append(f"{where}: R^01 pulses are individually addressed, targets required")
            elif j == 2 and not ins.is_global and not profile.individual_02_control:
                out.append(f"{where}: R^02 is a global microwave pulse, cannot target {list(ins.targets)}")
            elif j not in (1, 2):
                out.append(f"{where}: invalid level j={j}")
        elif ins.kind == RZJ:
            j = ins.params.get("j")
            if j in (0, 2) and not ins.is_global and not profile.individual_02_control:
                out.append(f"{where}: R_z^{j} is global only, cannot target {list(ins.targets)}")
            elif j not in (0, 1, 2):
                out.append(f"{where}: invalid level j={j}")
        elif ins.kind in (XX, XXTILDE):
            if len(ins.targets) != 2:
                out.append(f"{where}: entangling gate needs exactly two individual targets")
        elif ins.kind == MEASURE_LEAK:
            prev = circuit.instructions[k - 1].kind if k else None
            if prev != MEASURE_MAIN:
                out.append(f"{where}: leakage readout must directly follow the main readout")
        if ins.kind == MEASURE_MAIN:
            seen_main = True
    return out
