import math

import numpy as np
import pytest

from qtk.core import (
    QutritRegister,
    apply_cnx_oracle,
    circuit_unitary,
    digits_to_index,
    embedded_cnx_oracle,
    haar_state,
    iter_bitstrings,
    phase_aligned_distance,
    qubit_subspace_indices,
    simulate,
    simulate_batch,
)
from qtk.decomposer import (
    GROVER_VARIANTS,
    PhaseCalibration,
    ToffoliOptions,
    basis_prep,
    calibration_circuit,
    calibration_prefix,
    expand_xxtilde,
    grover3,
    qubit_ccx,
    qubit_cnx,
    qutrit_toffoli,
    to_dot,
    u1,
    u2,
)
from qtk.gates import MEASURE_MID2, R0J, XX, Circuit, HardwareProfile, legality_check, ms, xx

PI = math.pi


def restricted(c):
    idx = qubit_subspace_indices(c.n)
    return circuit_unitary(c)[np.ix_(idx, idx)]


def oracle_block(n):
    idx = qubit_subspace_indices(n)
    return embedded_cnx_oracle(n)[np.ix_(idx, idx)]


def run_basis(c, bits):
    return simulate(c, QutritRegister.basis(bits))


# -- U1 / U2 -------------------------------------------------------------------


def test_u1_marks_both_ones():
    opts = ToffoliOptions(3, stash_idle=False)
    frag = Circuit(3).extend(u1(0, 1, opts))
    for bits in iter_bitstrings(3):
        probs = run_basis(frag, bits).probabilities().reshape(3, 3, 3)
        p_second_is_1 = probs[:, 1, :].sum()
        assert p_second_is_1 == pytest.approx(1.0 if bits[0] == bits[1] == 1 else 0.0, abs=1e-12)


def test_u1_has_one_entangler_and_inverts():
    opts = ToffoliOptions(3)
    frag = Circuit(3).extend(u1(0, 1, opts))
    assert frag.count(XX) == 1
    assert np.allclose(circuit_unitary(frag + frag.dagger()), np.eye(27), atol=1e-10)


def test_u1_rejects_bad_pairs():
    with pytest.raises(ValueError):
        u1(0, 2, ToffoliOptions(4))
    with pytest.raises(ValueError):
        u1(2, 3, ToffoliOptions(4))


def test_u2_permutes_basis_states():
    # on its own U2 shuffles basis states (up to phases); only the full
    # sequence acts as the Toffoli, which the tests below check
    for stash in (True, False):
        u = np.abs(circuit_unitary(Circuit(3).extend(u2(1, 2, ToffoliOptions(3, stash_idle=stash)))))
        assert np.allclose(np.sort(u, axis=0)[-1], 1.0, atol=1e-10)
        assert np.allclose(u.sum(axis=0), 1.0, atol=1e-10)


def test_u2_structure():
    frag = Circuit(3).extend(u2(1, 2, ToffoliOptions(3)))
    assert frag.count(XX) == 1
    assert sum(1 for i in frag if i.kind == R0J and i.params["j"] == 2) == 2
    assert np.allclose(circuit_unitary(frag + frag.dagger()), np.eye(27), atol=1e-10)


# -- full decomposition -------------------------------------------------------------


def test_options_guard():
    with pytest.raises(ValueError):
        ToffoliOptions(2)


@pytest.mark.parametrize("n,count", [(3, 3), (4, 5), (5, 7), (6, 9), (7, 11), (8, 13), (10, 17)])
def test_xx_counts(n, count):
    assert qutrit_toffoli(ToffoliOptions(n)).xx_count() == count


def test_xx_count_law_up_to_12():
    for n in range(3, 13):
        for stash in (True, False):
            assert qutrit_toffoli(ToffoliOptions(n, stash_idle=stash)).xx_count() == 2 * n - 3


def test_n3_flips_110():
    out = run_basis(qutrit_toffoli(3), (1, 1, 0))
    assert out.probabilities()[digits_to_index((1, 1, 1))] > 1 - 1e-10


@pytest.mark.parametrize("stash", [True, False])
@pytest.mark.parametrize("n", [3, 4, 5])
def test_restricted_unitary_matches_oracle(n, stash):
    c = qutrit_toffoli(ToffoliOptions(n, stash_idle=stash))
    assert phase_aligned_distance(restricted(c), oracle_block(n)) < 1e-9


@pytest.mark.parametrize("stash", [True, False])
@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_truth_table_and_no_leak(n, stash):
    c = qutrit_toffoli(ToffoliOptions(n, stash_idle=stash, emit_leak_measure=True))
    idx = qubit_subspace_indices(n)
    psi = np.zeros((len(idx), 3**n), dtype=complex)
    psi[np.arange(len(idx)), idx] = 1
    out = simulate_batch(c, psi)
    for row, k in enumerate(idx):
        probs = np.abs(out[row]) ** 2
        bits = [int(b) for b in np.base_repr(row, 2).zfill(n)]
        if all(bits[:-1]):
            bits[-1] ^= 1
        assert probs[digits_to_index(tuple(bits))] >= 1 - 1e-9
        outside = np.delete(probs, idx).sum()
        assert outside < 1e-12


def test_haar_states_n8():
    n = 8
    c = qutrit_toffoli(ToffoliOptions(n))
    rng = np.random.default_rng(8)
    idx = qubit_subspace_indices(n)
    states = np.zeros((5, 3**n), dtype=complex)
    for k in range(5):
        states[k, idx] = haar_state(2**n, rng)
    out = simulate_batch(c, states)
    for k in range(5):
        want = apply_cnx_oracle(QutritRegister(n, states[k])).amplitudes
        assert phase_aligned_distance(out[k], want) < 1e-8


def test_uncompute_block_mirrors_compute_block():
    n = 5
    opts = ToffoliOptions(n)
    c = qutrit_toffoli(opts)
    lead = Circuit(n)
    for q in range(n - 2):
        lead.extend(u1(q, q + 1, opts))
    tail = c.instructions[-len(lead):]
    assert tail == lead.dagger().instructions


# -- phase correction ----------------------------------------------------------------


@pytest.mark.parametrize("individual", [False, True])
def test_expand_matches_xx(individual):
    hw = HardwareProfile(individual_02_control=individual)
    c = Circuit(2, [ms(PI / 2, 0, 1, hw)])
    e = expand_xxtilde(c, PhaseCalibration([0.3], [0.7]), hw)
    assert phase_aligned_distance(circuit_unitary(e), xx(PI / 2).matrix) < 1e-9
    assert legality_check(e, hw) == []


def test_zero_phases_reduce_to_bare_gate():
    c = Circuit(2, [ms(0.4, 0, 1)])
    e = expand_xxtilde(c, PhaseCalibration([0.0], [0.0]))
    assert phase_aligned_distance(circuit_unitary(e), xx(0.4).matrix) < 1e-12


def test_simplified_and_full_variants_agree():
    c = Circuit(2, [ms(-0.9, 0, 1)])
    cal = PhaseCalibration([1.1], [-0.4])
    full = circuit_unitary(expand_xxtilde(c, cal))
    simple = circuit_unitary(expand_xxtilde(c, cal, HardwareProfile(individual_02_control=True)))
    assert phase_aligned_distance(full, simple) < 1e-9


def test_expand_on_toffoli():
    c = qutrit_toffoli(ToffoliOptions(3))
    rng = np.random.default_rng(4)
    cal = PhaseCalibration(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
    e = expand_xxtilde(c, cal)
    assert phase_aligned_distance(circuit_unitary(e), circuit_unitary(c)) < 1e-9


def test_missing_calibration_entry():
    c = Circuit(2, [ms(0.1, 0, 1), ms(0.2, 0, 1)])
    with pytest.raises(KeyError):
        expand_xxtilde(c, PhaseCalibration([0.1], [0.2]))
    with pytest.raises(ValueError):
        PhaseCalibration([0.1], [])
    with pytest.raises(ValueError):
        PhaseCalibration([float("nan")], [0.0])


# -- calibration circuit ----------------------------------------------------------


def test_calibration_prefix_state():
    out = simulate(calibration_prefix()).amplitudes
    # (|0> - i|2>)/sqrt2 on ion A, ion B in |2> (up to a global phase)
    want = np.zeros(9, dtype=complex)
    want[digits_to_index((0, 2))] = 1 / np.sqrt(2)
    want[digits_to_index((2, 2))] = -1j / np.sqrt(2)
    assert phase_aligned_distance(out, want) < 1e-10
    probs = np.abs(out) ** 2
    assert probs[digits_to_index((0, 2))] == pytest.approx(0.5)


def _p2(phi, chi_a=0.0):
    probs = simulate(calibration_circuit(phi, chi_a)).probabilities().reshape(3, 3)
    return probs[2].sum()


def test_calibration_scan_shape():
    phis = np.linspace(0, 2 * PI, 64, endpoint=False)
    scan = np.array([_p2(p) for p in phis])
    assert phis[np.argmin(scan)] % PI == pytest.approx(0.0, abs=1e-12)
    assert _p2(0.3 + 2 * PI, 0.2) == pytest.approx(_p2(0.3, 0.2), abs=1e-12)
    assert calibration_circuit(0.1).instructions[-1].kind == "MEASURE_MAIN"


# -- qubit baselines -----------------------------------------------------------------


def test_qubit_ccx():
    c = qubit_ccx()
    assert c.xx_count() == 6
    assert phase_aligned_distance(restricted(c), oracle_block(3)) < 1e-9
    out = run_basis(c, (1, 1, 1)).probabilities()
    assert out[digits_to_index((1, 1, 0))] == pytest.approx(1.0)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_qubit_cnx(n):
    c = qubit_cnx(n)
    assert phase_aligned_distance(restricted(c), oracle_block(n)) < 1e-9
    assert legality_check(c) == []
    assert c.xx_count() == 2**n - 2


def test_qubit_cnx_range():
    with pytest.raises(ValueError):
        qubit_cnx(2)
    with pytest.raises(ValueError):
        qubit_cnx(9)


# -- Grover ----------------------------------------------------------------------------


def _search_probs(c):
    probs = simulate(c).probabilities().reshape(3, 3, 3)
    return probs[:2, :2, :].sum(axis=2)


@pytest.mark.parametrize("variant", GROVER_VARIANTS)
def test_grover_noiseless_success(variant):
    for s in ("00", "01", "10", "11"):
        c = grover3(s, variant)
        assert legality_check(c) == []
        assert _search_probs(c)[int(s[0]), int(s[1])] == pytest.approx(1.0, abs=1e-10)


def test_grover_midmeasure_placement():
    c = grover3("10", "qutrit+midmeasure")
    kinds = [i.kind for i in c]
    first = kinds.index(MEASURE_MID2)
    assert kinds.count(MEASURE_MID2) == 2
    assert c.instructions[first + 1].params["theta"] == pytest.approx(PI)
    second = first + 1 + kinds[first + 1:].index(MEASURE_MID2)
    assert all(c.instructions[second + 1 + k].params["theta"] == pytest.approx(-PI) for k in range(3))


def test_grover_bad_inputs():
    with pytest.raises(ValueError):
        grover3("2", "qubit")
    with pytest.raises(ValueError):
        grover3("01", "ququart")


# -- prep and docs ---------------------------------------------------------------------


def test_basis_prep():
    assert len(basis_prep("000")) == 0
    assert len(basis_prep("111", use_sk1=False)) == 3
    assert len(basis_prep("111")) == 9
    for x in ("010", "111", "101"):
        for sk in (True, False):
            out = simulate(basis_prep(x, use_sk1=sk)).probabilities()
            assert out[digits_to_index(tuple(int(b) for b in x))] == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(ValueError):
        basis_prep("012")


def test_dot_output():
    text = to_dot(qutrit_toffoli(3))
    assert text.startswith("digraph circuit {")
    assert text.count("->") > 20
