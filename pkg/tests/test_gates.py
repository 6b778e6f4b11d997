import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qtk.core import QutritRegister, apply_gate, circuit_unitary, phase_aligned_distance
from qtk.decomposer import ToffoliOptions, qutrit_toffoli
from qtk.gates import (
    DEFAULT_HARDWARE,
    Circuit,
    HardwareProfile,
    Instruction,
    barrier,
    instruction_matrix,
    legality_check,
    measure_leak,
    measure_main,
    ms,
    r_0j,
    rot,
    rx,
    ry,
    rz_j,
    sk1,
    vz,
    xx,
    xx_tilde,
)

PI = math.pi
angles = st.floats(-2 * PI, 2 * PI, allow_nan=False)


def ket(*amps):
    return np.array(amps, dtype=complex)


def test_r0j_examples():
    assert np.allclose(r_0j(1, 0, 1.3).matrix, np.eye(3))
    m = r_0j(1, PI, 0).matrix
    assert np.allclose(m @ ket(1, 0, 0), ket(0, -1j, 0))
    assert np.allclose(m @ ket(0, 1, 0), ket(-1j, 0, 0))
    assert np.allclose(m @ ket(0, 0, 1), ket(0, 0, 1))
    half = r_0j(2, PI / 2, PI / 2).matrix
    assert np.allclose(half @ ket(1, 0, 0), ket(1, 0, 1) / np.sqrt(2))


def test_r0j_matches_generator_exponential():
    for j in (1, 2):
        sig = np.zeros((3, 3), dtype=complex)
        phi, theta = 0.37, 1.9
        sig[0, j] = np.exp(-1j * phi)
        sig[j, 0] = np.exp(1j * phi)
        assert np.allclose(r_0j(j, theta, phi).matrix, expm(-1j * sig * theta / 2))


def test_bad_levels_rejected():
    with pytest.raises(ValueError):
        r_0j(3, 1, 0)
    with pytest.raises(ValueError):
        rz_j(3, 1)


def test_rz_examples():
    assert np.allclose(rz_j(1, 0).matrix, np.eye(3))
    assert np.allclose(rz_j(1, PI).matrix @ ket(1, 1, 0) / np.sqrt(2), ket(1, -1, 0) / np.sqrt(2))
    assert np.allclose((rz_j(2, 0.4) @ rz_j(2, -0.4)).matrix, np.eye(3))


def test_xx_examples():
    assert np.allclose(xx(0).matrix, np.eye(9))
    out = xx(PI / 4).matrix @ np.eye(9)[0]
    assert np.allclose(out, (np.eye(9)[0] - 1j * np.eye(9)[4]) / np.sqrt(2))
    s20 = np.eye(9)[6]
    for chi in (0.3, 1.7, -2.2):
        assert np.allclose(xx(chi).matrix @ s20, s20)


def _p01():
    return np.diag([1, 1, 0]).astype(complex)


def test_xx_tilde_against_matrix_exponential():
    sx = np.zeros((3, 3), dtype=complex)
    sx[0, 1] = sx[1, 0] = 1
    i3 = np.eye(3)
    chi, a, b = PI / 2, 0.3, 0.7
    gen = chi * np.kron(sx, sx) + a * np.kron(_p01(), i3) + b * np.kron(i3, _p01())
    assert np.max(np.abs(xx_tilde(chi, a, b).matrix - expm(-1j * gen))) < 1e-10


def test_xx_tilde_special_cases():
    assert np.array_equal(xx_tilde(0.8, 0, 0).matrix, xx(0.8).matrix)
    m = xx_tilde(0, 0.4, 0.9).matrix
    assert np.allclose(m, np.diag(np.diag(m)))
    assert m[8, 8] == 1


@settings(max_examples=50, deadline=None)
@given(angles, angles)
def test_xx_family_composes(c1, c2):
    assert np.max(np.abs(xx(c1).matrix @ xx(c2).matrix - xx(c1 + c2).matrix)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([1, 2]), angles, angles)
def test_rotation_inverse(j, theta, phi):
    assert np.max(np.abs(r_0j(j, theta, phi).matrix @ r_0j(j, -theta, phi).matrix - np.eye(3))) < 1e-12


@settings(max_examples=50, deadline=None)
@given(angles, angles, angles)
def test_constructors_are_unitary(a, b, c):
    for g in (r_0j(1, a, b), r_0j(2, b, c), rz_j(0, a), xx(a), xx_tilde(a, b, c)):
        m = g.matrix
        assert np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) < 1e-12


# -- SK1 ----------------------------------------------------------------------


def _pulses_unitary(pulses, scale=1.0):
    u = np.eye(3, dtype=complex)
    for p in pulses:
        u = r_0j(1, p.params["theta"] * scale, p.params["phi"]).matrix @ u
    return u


def _infidelity(u, target):
    # population outside the target state, computed without cancellation
    out = u @ ket(1, 0, 0)
    ov = np.vdot(target, out)
    return float(np.linalg.norm(out - ov * target) ** 2)


def test_sk1_ideal_action():
    u = _pulses_unitary(sk1(PI, 0))
    assert phase_aligned_distance(u, r_0j(1, PI, 0).matrix) < 1e-12
    assert len(sk1(PI, 0)) == 3


def test_sk1_domain():
    with pytest.raises(ValueError):
        sk1(2 * PI + 0.1, 0)


def test_sk1_beats_bare_pulse_under_amplitude_error():
    target = ket(0, 1, 0)
    eps = 0.05
    bare = _infidelity(r_0j(1, PI * (1 + eps), 0).matrix, target)
    comp = _infidelity(_pulses_unitary(sk1(PI, 0), 1 + eps), target)
    assert comp * 10 <= bare
    assert _infidelity(_pulses_unitary(sk1(PI, 0)), target) < 1e-20
    assert _infidelity(r_0j(1, PI, 0).matrix, target) < 1e-20


def test_sk1_log_log_slope():
    eps = np.logspace(-3, -1, 9)
    target = ket(0, 1, 0)
    inf = [_infidelity(_pulses_unitary(sk1(PI, 0), 1 + e), target) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(inf), 1)[0]
    assert slope >= 3.5


# -- IR -------------------------------------------------------------------------


def test_instruction_durations():
    assert rx(1, PI, 0).duration == pytest.approx(10e-6)
    assert rx(2, PI / 2).duration == pytest.approx(5e-6)
    assert vz(1, 0.3, 0).duration == 0
    assert ms(PI / 2, 0, 1).duration == pytest.approx(916e-6)
    with pytest.raises(ValueError):
        Instruction("R0J", (0,), {}, -1.0)
    with pytest.raises(ValueError):
        Instruction("FOO")


def test_hardware_profile_validation():
    with pytest.raises(ValueError):
        HardwareProfile(t_xx=0)
    with pytest.raises(ValueError):
        HardwareProfile(crosstalk_ratio=1.0)


def test_dagger_inverts_unitary():
    c = qutrit_toffoli(ToffoliOptions(3))
    u = circuit_unitary(c)
    assert np.allclose(circuit_unitary(c.dagger()) @ u, np.eye(27), atol=1e-10)


def test_json_round_trip_is_exact():
    c = qutrit_toffoli(ToffoliOptions(4, emit_leak_measure=True))
    c.append(barrier())
    text = c.to_json()
    again = Circuit.from_json(text)
    assert again.to_json() == text
    assert json.loads(text)["instructions"][0].keys() == {"kind", "targets", "params", "duration_s"}
    pretty = c.to_json(indent=2)
    assert Circuit.from_json(pretty).to_json() == text


# -- legality ----------------------------------------------------------------------


def test_targeted_02_pulse_is_illegal_by_default():
    c = Circuit(2, [rot(2, PI, 0, 1)])
    assert len(legality_check(c)) == 1
    assert legality_check(c, HardwareProfile(individual_02_control=True)) == []


def test_global_z_rules():
    assert legality_check(Circuit(2, [vz(1, 0.2, 0), vz(0, 0.1), vz(2, 0.1)])) == []
    assert len(legality_check(Circuit(2, [vz(2, 0.1, 1)]))) == 1


def test_01_pulse_needs_target():
    assert len(legality_check(Circuit(2, [rx(1, PI)]))) == 1


def test_entangler_arity_and_ranges():
    bad = Circuit(3, [Instruction("XX", (0,), {"chi": 0.1}), rx(1, 1.0, 5)])
    assert len(legality_check(bad)) == 2
    assert len(legality_check(Circuit(2, [Instruction("XX", (1, 1), {"chi": 0.1})]))) >= 1


def test_measurement_ordering():
    assert legality_check(Circuit(2, [measure_main(), measure_leak()])) == []
    assert len(legality_check(Circuit(2, [measure_leak()]))) == 1
    assert len(legality_check(Circuit(2, [measure_main(), rx(1, 1.0, 0)]))) == 1


@pytest.mark.parametrize("n", range(3, 11))
def test_toffoli_circuits_are_legal(n):
    assert legality_check(qutrit_toffoli(ToffoliOptions(n, emit_leak_measure=True))) == []
