"""Mean leak probability against register size, with the 1 - A p^(2N-3) fit."""
from qtk.analysis import leak_scan
from qtk.noise import NoiseProfile

for label, profile in (("defaults", NoiseProfile()),
                       ("leak only, q=0.04", NoiseProfile.noiseless(leakage=True, xx_leak_prob=0.04))):
    fit = leak_scan(range(3, 9), total_shots=4000, profile=profile)
    means = ", ".join(f"{n}:{m:.3f}" for n, m in zip(fit.ns, fit.means))
    print(f"{label:18s} A={fit.A:.3f} p={fit.p:.4f}+-{fit.p_sigma:.4f}  [{means}]")
print("a per-gate survival of (1-q)^2 would give p =", round(0.96**2, 4))
