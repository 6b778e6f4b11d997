"""Qutrit Toffoli compiler and noisy trapped-ion simulator."""
from .core import (
    BasisOutcome,
    CapabilityError,
    GateMatrix,
    QutritRegister,
    apply_gate,
    circuit_unitary,
    embedded_cnx_oracle,
    sample_outcome,
    simulate,
    state_fidelity,
)
from .gates import Circuit, HardwareProfile, Instruction, legality_check, r_0j, rz_j, sk1, xx, xx_tilde

__version__ = "0.1.0"
