"""Circuit builders: qutrit and qubit generalized Toffoli, MS phase correction,
Ramsey phase calibration, basis-state preparation and three-qubit Grover.

Builders take 0-based qutrit indices.  The qutrit Toffoli pass walks ion
pairs (q, q+1) along the chain; control qutrits are 0..n-2 and the target is
qutrit n-1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .gates import (
    DEFAULT_HARDWARE,
    XX,
    XXTILDE,
    Circuit,
    HardwareProfile,
    Instruction,
    measure_leak,
    measure_main,
    measure_mid2,
    ms,
    ms_tilde,
    rot,
    rx,
    ry,
    sk1,
    vz,
)

PI = math.pi


@dataclass(frozen=True)
class ToffoliOptions:
    n: int
    stash_idle: bool = True
    emit_leak_measure: bool = False
    hardware: HardwareProfile = DEFAULT_HARDWARE

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"generalized Toffoli needs n >= 3, got {self.n}")


@dataclass
class PhaseCalibration:
    """Residual MS phases per entangling-gate instance (circuit order)."""

    chi_a: list = field(default_factory=list)
    chi_b: list = field(default_factory=list)

    def __post_init__(self):
        self.chi_a = [float(x) for x in self.chi_a]
        self.chi_b = [float(x) for x in self.chi_b]
        if len(self.chi_a) != len(self.chi_b):
            raise ValueError("chi_a and chi_b need one entry per gate instance")
        if not all(math.isfinite(x) for x in self.chi_a + self.chi_b):
            raise ValueError("calibration phases must be finite")

    @classmethod
    def uniform(cls, count: int, chi_a: float, chi_b: float) -> "PhaseCalibration":
        return cls([chi_a] * count, [chi_b] * count)

    def __getitem__(self, k: int) -> tuple:
        if not 0 <= k < len(self.chi_a):
            raise KeyError(f"no calibration entry for entangling gate #{k}")
        return self.chi_a[k], self.chi_b[k]


# -- qutrit Toffoli ----------------------------------------------------------


def _check_pair(q1: int, q2: int, n: int):
    if q2 != q1 + 1 or not 0 <= q1 < n - 1:
        raise ValueError(f"invalid ion pair ({q1}, {q2}) for {n} qutrits")


def u1(q1: int, q2: int, opts: ToffoliOptions) -> Circuit:
    """Leaves ``q2`` in |1> iff both qutrits were |1>; the other branch is parked in |2>."""
    n, hw = opts.n, opts.hardware
    _check_pair(q1, q2, n)
    if q2 > n - 2:
        raise ValueError("U1 pairs must not include the target qutrit")
    c = Circuit(n)
    c.append(ry(1, -PI, q1, hw))
    c.append(rx(2, -PI, None, hw))
    c.append(ry(1, PI, q1, hw))
    if opts.stash_idle:
        if (q1, q2) == (0, 1):
            # park |1> of every not-yet-used ion in |2> until its U1 comes up
            for q in range(2, n):
                c.append(ry(1, PI, q, hw))
        else:
            c.append(ry(1, -PI, q2, hw))
    c.append(ms(PI / 2, q1, q2, hw))
    if (q1, q2) != (n - 3, n - 2):
        c.append(rx(2, PI, None, hw))
    return c


def u2(q1: int, q2: int, opts: ToffoliOptions) -> Circuit:
    """Flips the target ``q2`` when ``q1`` is |1>."""
    n, hw = opts.n, opts.hardware
    _check_pair(q1, q2, n)
    c = Circuit(n)
    if opts.stash_idle:
        c.append(ry(1, -PI, q2, hw))
    c.append(ry(1, -PI, q1, hw))
    c.append(rx(2, PI, None, hw))
    c.append(ry(1, PI, q1, hw))
    c.append(ms(PI / 2, q1, q2, hw))
    c.append(rx(1, -PI, q2, hw))
    c.append(rx(1, -PI, q1, hw))
    c.append(ry(1, -PI, q1, hw))
    c.append(rx(2, -PI, None, hw))
    c.append(ry(1, PI, q1, hw))
    if opts.stash_idle:
        # exact inverse of the opening park pulse; an x-axis pulse here leaves
        # a diag(1, i) phase on the target
        c.append(ry(1, PI, q2, hw))
    return c


def qutrit_toffoli(opts: ToffoliOptions | int) -> Circuit:
    """C^{n-1}X with 2n-3 MS gates and globally driven ancilla levels."""
    if isinstance(opts, int):
        opts = ToffoliOptions(opts)
    n = opts.n
    c = Circuit(n)
    for q in range(n - 2):
        c.extend(u1(q, q + 1, opts))
    c.extend(u2(n - 2, n - 1, opts))
    for q in range(n - 3, -1, -1):
        c.extend(u1(q, q + 1, opts).dagger())
    if opts.emit_leak_measure:
        c.append(measure_main(opts.hardware))
        c.append(measure_leak(opts.hardware))
    return c


# -- MS phase correction ------------------------------------------------------


def expand_xxtilde(circuit: Circuit, calib: PhaseCalibration, profile: HardwareProfile = DEFAULT_HARDWARE,
                   actual: PhaseCalibration | None = None) -> Circuit:
    """Replace each XX(chi) by the hardware MS gate followed by phase-compensating pulses.

    With individual control of level 2 the compensation is a virtual R_z^2
    phase per ion; otherwise each ion gets R_x^{01}(pi), R^{01}(-pi) and a
    virtual R_z^1.  ``calib`` sets the compensation; ``actual`` (default
    ``calib``) sets the residual phases the emitted hardware gates carry.
    """
    actual = calib if actual is None else actual
    out = Circuit(circuit.n)
    k = 0
    for ins in circuit.instructions:
        if ins.kind != XX:
            out.append(ins)
            continue
        chi_a, chi_b = calib[k]
        true_a, true_b = actual[k]
        k += 1
        a, b = ins.targets
        out.append(ms_tilde(ins.params["chi"], true_a, true_b, a, b, profile))
        for q, phase in ((a, chi_a), (b, chi_b)):
            if profile.individual_02_control:
                out.append(vz(2, -phase, q))
            else:
                out.append(rx(1, PI, q, profile))
                out.append(rot(1, -PI, -phase, q, profile))
                out.append(vz(1, 2 * phase, q))
    return out


def calibration_prefix(probe: int = 0, hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    """Two-ion preparation of (|0> - i|2>)/sqrt2 on ``probe`` with the partner in |2>."""
    c = Circuit(2)
    c.append(rx(1, PI, probe, hw))
    c.append(rx(2, PI / 2, None, hw))
    c.append(rx(1, -PI, probe, hw))
    c.append(rx(2, PI / 2, None, hw))
    return c


def calibration_circuit(phi: float, chi_a: float = 0.0, chi_b: float = 0.0, probe: int = 0,
                        hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    """Ramsey scan point: prefix, hardware MS(pi/2) with the given residual phases, analysis pulse."""
    c = calibration_prefix(probe, hw)
    c.append(ms_tilde(PI / 2, chi_a, chi_b, 0, 1, hw))
    c.append(rot(2, -PI / 2, phi, None, hw))
    c.append(measure_main(hw))
    return c


# -- qubit baselines ------------------------------------------------------------

# Ion-native 3-qubit Toffoli, one list per time slice (controls 0, 1; target 2).
_CCX_SLICES = [
    [("ry", PI / 2, 0), ("ry", PI / 2, 1), ("ry", PI / 2, 2)],
    [("rx", PI / 4, 0)],
    [("xx", 1, 2)],
    [("rx", PI / 4, 1), ("rx", -PI / 2, 2)],
    [("rz", PI / 4, 2)],
    [("xx", 0, 2)],
    [("rx", -PI / 2, 2)],
    [("rz", -PI / 4, 2)],
    [("xx", 1, 2)],
    [("ry", PI / 2, 1), ("rx", -PI / 2, 2)],
    [("rz", PI / 4, 2)],
    [("xx", 0, 2)],
    [("xx", 0, 1)],
    [("rx", -PI / 2, 1), ("ry", -PI / 4, 2)],
    [("rz", PI / 4, 1), ("rz", -PI / 2, 2)],
    [("xx", 0, 1)],
    [("ry", -PI / 2, 0), ("rx", PI / 2, 1)],
]


def qubit_ccx(hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    c = Circuit(3)
    for sl in _CCX_SLICES:
        for op, a, b in sl:
            if op == "xx":
                c.append(ms(PI / 4, a, b, hw))
            elif op == "rx":
                c.append(rx(1, a, b, hw))
            elif op == "ry":
                c.append(ry(1, a, b, hw))
            else:
                c.append(vz(1, a, b))
    return c


def cnot(control: int, target: int, n: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> list:
    """CX as one MS(pi/4) dressed with single-ion pulses."""
    return [
        ry(1, PI / 2, control, hw),
        ms(PI / 4, control, target, hw),
        rx(1, PI / 2, control, hw),
        rx(1, -PI / 2, target, hw),
        ry(1, -PI / 2, control, hw),
    ]


def cz(a: int, b: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> list:
    return [
        ry(1, PI / 2, a, hw),
        ry(1, PI / 2, b, hw),
        ms(PI / 4, a, b, hw),
        ry(1, -PI / 2, a, hw),
        ry(1, -PI / 2, b, hw),
        vz(1, -PI / 2, a),
        vz(1, -PI / 2, b),
    ]


def _phase_network(qubits: Sequence[int], n_total: int, out: list, hw: HardwareProfile):
    """exp(i*pi*x_0*...*x_{m-1}) as a Gray-code walk over every parity term."""
    m_total = len(qubits)

    def angle(size):
        return (1 if size % 2 else -1) * PI / 2 ** (m_total - 1)

    def walk(qs):
        if len(qs) == 1:
            out.append(vz(1, angle(1), qs[0]))
            return
        t, others = qs[-1], qs[:-1]
        k = len(others)
        out.append(vz(1, angle(1), t))
        prev = 0
        for i in range(1, 2**k):
            g = i ^ (i >> 1)
            bit = (g ^ prev).bit_length() - 1
            out.extend(cnot(others[bit], t, n_total, hw))
            out.append(vz(1, angle(1 + bin(g).count("1")), t))
            prev = g
        out.extend(cnot(others[prev.bit_length() - 1], t, n_total, hw))
        walk(others)

    walk(list(qubits))


def qubit_cnx(n: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    """Ancilla-free C^{n-1}X from a Gray-code CX/phase network; 2**n - 2 MS gates."""
    if not 3 <= n <= 8:
        raise ValueError(f"qubit C^(n-1)X available for 3 <= n <= 8, got {n}")
    body = []
    _phase_network(list(range(n)), n, body, hw)
    c = Circuit(n)
    c.append(ry(1, -PI / 2, n - 1, hw))
    c.extend(body)
    c.append(ry(1, PI / 2, n - 1, hw))
    return c


def qubit_toffoli(n: int, hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    """The qubit baseline used for truth tables: the 6-gate CCX for n=3, the phase network above otherwise."""
    return qubit_ccx(hw) if n == 3 else qubit_cnx(n, hw)


# -- state prep and Grover ---------------------------------------------------------


def basis_prep(x: Sequence[int] | str, use_sk1: bool = True, hw: HardwareProfile = DEFAULT_HARDWARE) -> Circuit:
    bits = [int(b) for b in x]
    if any(b not in (0, 1) for b in bits):
        raise ValueError(f"basis label must be a bitstring: {x!r}")
    c = Circuit(len(bits))
    for q, b in enumerate(bits):
        if b:
            c.extend(sk1(PI, 0.0, q, hw) if use_sk1 else [rx(1, PI, q, hw)])
    return c


GROVER_VARIANTS = ("qubit", "qutrit", "qutrit+midmeasure")


def grover3(s: str, toffoli_variant: str = "qutrit", hw: HardwareProfile = DEFAULT_HARDWARE,
            measure: bool = True) -> Circuit:
    """One Grover iteration over two search qubits (0, 1) with qubit 2 as the |-> kickback target."""
    if s not in ("00", "01", "10", "11"):
        raise ValueError(f"marked string must be two bits, got {s!r}")
    if toffoli_variant not in GROVER_VARIANTS:
        raise ValueError(f"unknown Toffoli variant {toffoli_variant!r}")
    c = Circuit(3)
    c.extend([ry(1, PI / 2, 0, hw), ry(1, PI / 2, 1, hw), ry(1, -PI / 2, 2, hw)])
    flips = [q for q in (0, 1) if s[q] == "0"]
    c.extend([rx(1, PI, q, hw) for q in flips])
    if toffoli_variant == "qubit":
        c.extend(qubit_ccx(hw))
    else:
        c.extend(qutrit_toffoli(ToffoliOptions(3, hardware=hw)))
    if toffoli_variant == "qutrit+midmeasure":
        c.extend(mid_measure_dd((0, 1, 2), hw))
    c.extend([rx(1, -PI, q, hw) for q in flips])
    # diffusion about |++>
    c.extend([ry(1, -PI / 2, 0, hw), ry(1, -PI / 2, 1, hw)])
    c.extend([rx(1, PI, 0, hw), rx(1, PI, 1, hw)])
    c.extend(cz(0, 1, hw))
    c.extend([rx(1, -PI, 0, hw), rx(1, -PI, 1, hw)])
    c.extend([ry(1, PI / 2, 0, hw), ry(1, PI / 2, 1, hw), ry(1, PI / 2, 2, hw)])
    if measure:
        c.append(measure_main(hw))
    return c


def mid_measure_dd(involved: Sequence[int], hw: HardwareProfile = DEFAULT_HARDWARE) -> list:
    """|2>-detection split in two halves with an R_x^{01}(pi) echo between and R_x^{01}(-pi) after."""
    involved = tuple(involved)
    out = [measure_mid2(0, involved, hw)]
    out += [rx(1, PI, q, hw) for q in involved]
    out.append(measure_mid2(1, involved, hw))
    out += [rx(1, -PI, q, hw) for q in involved]
    return out


# -- documentation output --------------------------------------------------------


def _label(ins: Instruction) -> str:
    p = ins.params
    if ins.kind == "R0J":
        return f"R{p['j']}({p['theta']:.3g},{p['phi']:.3g})"
    if ins.kind == "RZJ":
        return f"Z{p['j']}({p['theta']:.3g})"
    if ins.kind in (XX, XXTILDE):
        return f"{ins.kind}({p['chi']:.3g})"
    return ins.kind


def to_dot(circuit: Circuit) -> str:
    """Graphviz DAG: one node per instruction, edges follow each qutrit wire."""
    lines = ["digraph circuit {", "  rankdir=LR;"]
    last = {}
    for q in range(circuit.n):
        lines.append(f'  in{q} [label="q{q}", shape=plaintext];')
        last[q] = f"in{q}"
    for k, ins in enumerate(circuit.instructions):
        node = f"g{k}"
        shape = "box" if ins.targets else "box, style=filled, fillcolor=lightblue"
        lines.append(f'  {node} [label="{_label(ins)}", shape={shape}];')
        for q in ins.targets or range(circuit.n):
            lines.append(f"  {last[q]} -> {node};")
            last[q] = node
    lines.append("}")
    return "\n".join(lines) + "\n"
