"""Ramsey recovery of the residual MS phases and the corrected gate."""
import math

from qtk.analysis import calibrate_pair
from qtk.core import circuit_unitary, phase_aligned_distance
from qtk.decomposer import PhaseCalibration, expand_xxtilde
from qtk.gates import Circuit, ms, xx
from qtk.noise import NoiseProfile

chi_a, chi_b = 0.3, -0.8
truth = PhaseCalibration([chi_a], [chi_b])
gate = Circuit(2, [ms(math.pi / 2, 0, 1)])
uncorrected = circuit_unitary(expand_xxtilde(gate, PhaseCalibration.uniform(1, 0.0, 0.0), actual=truth))
print("uncorrected distance to XX:", phase_aligned_distance(uncorrected, xx(math.pi / 2).matrix))

for shots in (None, 500):
    cal, fa, fb = calibrate_pair(chi_a, chi_b, shots=shots, profile=NoiseProfile.noiseless(spam=True))
    fixed = circuit_unitary(expand_xxtilde(gate, cal, actual=truth))
    label = "exact scan" if shots is None else f"{shots} shots/point"
    print(f"{label:18s} chi_A={cal.chi_a[0]:+.4f} chi_B={cal.chi_b[0]:+.4f} "
          f"distance {phase_aligned_distance(fixed, xx(math.pi / 2).matrix):.2e}")
