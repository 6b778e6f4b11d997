"""Noisy truth-table fidelity of the qutrit and qubit Toffoli under the default noise profile."""
from qtk.analysis import truth_table_experiment
from qtk.noise import NoiseProfile

profile = NoiseProfile(master_seed=1)
for family, ns in (("qutrit", (3, 4, 5)), ("qubit", (3, 4))):
    for n in ns:
        r = truth_table_experiment(family, n, shots=512, profile=profile, postselect=True)
        line = f"{family:6s} N={n}  raw {r.F_raw:.3f}  corrected {r.F_corrected:.3f}"
        if r.has_postselection:
            line += f"  post-selected {r.F_ps_raw:.3f} (kept {r.kept_fraction.mean():.2f})"
        print(line)
