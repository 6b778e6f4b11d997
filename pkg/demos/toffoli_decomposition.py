"""Build qutrit and qubit Toffoli circuits, compare entangler counts, check them exactly."""
import numpy as np

from qtk.core import circuit_unitary, embedded_cnx_oracle, phase_aligned_distance, qubit_subspace_indices
from qtk.decomposer import qubit_toffoli, qutrit_toffoli

print(" N  qutrit XX  qubit XX  qutrit duration (ms)")
for n in range(3, 7):
    qt, qb = qutrit_toffoli(n), qubit_toffoli(n)
    print(f"{n:2d}  {qt.xx_count():9d}  {qb.xx_count():8d}  {1e3 * qt.duration():10.2f}")

# the qutrit circuit borrows |2> as scratch space but ends back in the qubit subspace
n = 4
idx = qubit_subspace_indices(n)
block = np.ix_(idx, idx)
u = circuit_unitary(qutrit_toffoli(n))
print("distance to C^3X on the qubit subspace:", phase_aligned_distance(u[block], embedded_cnx_oracle(n)[block]))
print("leakage out of the qubit subspace:", float(np.abs(np.delete(u[:, idx], idx, axis=0)).max()))
