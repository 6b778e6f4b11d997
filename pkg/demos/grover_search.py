"""Two-qubit Grover search with a qubit, qutrit, and mid-circuit-checked qutrit oracle."""
from qtk.analysis import grover_experiment
from qtk.decomposer import GROVER_VARIANTS
from qtk.noise import NoiseProfile

profile = NoiseProfile(master_seed=4)
results = {v: grover_experiment(v, shots=1024, profile=profile) for v in GROVER_VARIANTS}
for v, r in results.items():
    line = f"{v:18s} P_err {r.p_err:.3f}"
    if r.p_err_postselected is not None:
        line += f"  post-selected {r.p_err_postselected:.3f} (kept {r.mean_kept_fraction:.2f})"
    print(line)
best = results["qutrit+midmeasure"].p_err_postselected
print(f"reduction over the qubit oracle: {results['qubit'].p_err / best:.2f}x")
