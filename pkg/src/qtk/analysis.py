"""Experiments and fits: truth tables, leakage scaling, Ramsey phase calibration, Grover, bootstrap."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .core import iter_bitstrings, simulate
from .decomposer import (
    GROVER_VARIANTS,
    PhaseCalibration,
    ToffoliOptions,
    basis_prep,
    calibration_circuit,
    grover3,
    qubit_toffoli,
    qutrit_toffoli,
)
from .gates import DEFAULT_HARDWARE, MEASURE_MAIN, Circuit, HardwareProfile, measure_main
from .noise import NoiseProfile, simulate_shots
from .readout import ConfusionMatrix, MAX_CONDITION, bitstrings, estimate_confusion

FAMILIES = ("qubit", "qutrit")

# stream offsets keep the random streams of different experiment parts apart
_CONFUSION_STREAM = 1 << 20
_BOOTSTRAP_STREAM = 1 << 21
_GROVER_STREAM = 1 << 22
_RAMSEY_STREAM = 1 << 23


class FitError(RuntimeError):
    pass


# -- bootstrap -------------------------------------------------------------------


def bootstrap_frequencies(counts: Sequence[int], resamples: int, rng: np.random.Generator) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total <= 0:
        raise ValueError("bootstrap needs at least one count")
    return rng.multinomial(total, counts / total, size=resamples) / total


def bootstrap_sigma(counts: Sequence[int], resamples: int = 1000, seed: int = 0) -> np.ndarray:
    """1-sigma spread of each outcome frequency under multinomial resampling."""
    freqs = bootstrap_frequencies(counts, resamples, np.random.default_rng(seed))
    return freqs.std(axis=0, ddof=1)


# -- truth tables ------------------------------------------------------------------


def toffoli_target(x: str) -> str:
    """Expected C^{n-1}X output for input bitstring ``x`` (target last)."""
    if all(b == "1" for b in x[:-1]):
        return x[:-1] + ("0" if x[-1] == "1" else "1")
    return x


def toffoli_circuit(family: str, n: int, hardware: HardwareProfile = DEFAULT_HARDWARE, stash_idle: bool = True) -> Circuit:
    if family == "qutrit":
        return qutrit_toffoli(ToffoliOptions(n, stash_idle=stash_idle, emit_leak_measure=True, hardware=hardware))
    if family == "qubit":
        c = qubit_toffoli(n, hardware)
        c.append(measure_main(hardware))
        return c
    raise ValueError(f"unknown decomposition family {family!r}")


@dataclass
class TruthTableResult:
    n: int
    family: str
    shots: int
    f_raw: np.ndarray
    f_corrected: np.ndarray
    F_raw: float
    F_corrected: float
    sigma_raw: float
    sigma_corrected: float
    xx_count: int = 0
    confusion_condition: float = 1.0
    # post-selected on the leakage flags; None when the circuit has no leak readout
    f_ps_raw: np.ndarray | None = None
    f_ps_corrected: np.ndarray | None = None
    F_ps_raw: float | None = None
    F_ps_corrected: float | None = None
    sigma_ps_raw: float | None = None
    sigma_ps_corrected: float | None = None
    kept_fraction: np.ndarray | None = None
    leak_prob: np.ndarray | None = None

    @property
    def has_postselection(self) -> bool:
        return self.F_ps_raw is not None

    def to_dict(self) -> dict:
        d = {}
        for k, v in asdict(self).items():
            d[k] = v.tolist() if isinstance(v, np.ndarray) else v
        d["inputs"] = bitstrings(self.n)
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["input", "expected", "f_raw", "f_corrected"]
        if self.has_postselection:
            head += ["f_ps_raw", "f_ps_corrected", "kept_fraction", "leak_prob"]
        w.writerow(head)
        for k, x in enumerate(bitstrings(self.n)):
            row = [x, toffoli_target(x), repr(float(self.f_raw[k])), repr(float(self.f_corrected[k]))]
            if self.has_postselection:
                row += [repr(float(v[k])) for v in (self.f_ps_raw, self.f_ps_corrected, self.kept_fraction, self.leak_prob)]
            w.writerow(row)
        return buf.getvalue()


def _inverse(cm: ConfusionMatrix) -> np.ndarray:
    cond = cm.condition()
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise np.linalg.LinAlgError(f"confusion matrix is ill-conditioned (condition number {cond:.3g})")
    return np.linalg.solve(cm.matrix, np.eye(cm.matrix.shape[0]))


def _fold(per_input: list, cinv: np.ndarray, targets: list, resamples: int, rng) -> tuple:
    """Raw and corrected correct-output frequencies per input plus bootstrap sigma of their means."""
    dim = len(targets)
    f_raw = np.zeros(dim)
    f_cor = np.zeros(dim)
    var_raw = var_cor = 0.0
    for k, counts in enumerate(per_input):
        total = counts.sum()
        y = targets[k]
        if total == 0:
            f_raw[k] = f_cor[k] = np.nan
            continue
        freqs = counts / total
        f_raw[k] = freqs[y]
        f_cor[k] = cinv[y] @ freqs
        if resamples:
            boot = bootstrap_frequencies(counts, resamples, rng)
            var_raw += boot[:, y].var(ddof=1)
            var_cor += (boot @ cinv[y]).var(ddof=1)
    good = np.isfinite(f_raw)
    m = max(int(good.sum()), 1)
    return f_raw, f_cor, math.sqrt(var_raw) / m, math.sqrt(var_cor) / m


def truth_table_experiment(decomposition: str, n: int, shots: int = 2048, profile: NoiseProfile | None = None,
                           postselect: bool = True, *, hardware: HardwareProfile = DEFAULT_HARDWARE,
                           circuit: Circuit | None = None, confusion: ConfusionMatrix | None = None,
                           confusion_shots: int | None = None, resamples: int = 200, jobs: int = 1,
                           stash_idle: bool = True) -> TruthTableResult:
    """Run every basis input through a Toffoli decomposition and score the outputs.

    ``circuit`` overrides the built-in decomposition (for re-ingested JSON).
    """
    if n < 3 or shots < 1:
        raise ValueError("truth tables need n >= 3 and shots >= 1")
    profile = profile or NoiseProfile()
    circ = circuit if circuit is not None else toffoli_circuit(decomposition, n, hardware, stash_idle)
    if circ.n != n:
        raise ValueError(f"circuit acts on {circ.n} qutrits, expected {n}")
    if not any(i.kind == MEASURE_MAIN for i in circ.instructions):
        circ = Circuit(n, circ.instructions + [measure_main(hardware)])
    if confusion is None:
        confusion = estimate_confusion(n, profile, confusion_shots or shots, hardware=hardware, jobs=jobs,
                                       stream=_CONFUSION_STREAM)
    cinv = _inverse(confusion)
    inputs = bitstrings(n)
    targets = [int(toffoli_target(x), 2) for x in inputs]
    all_counts, kept_counts, kept_frac, leak_prob = [], [], [], []
    has_leak = False
    for k, x in enumerate(inputs):
        batch = simulate_shots(basis_prep(x, use_sk1=True, hw=hardware) + circ, profile, shots, hardware=hardware,
                               stream=k, jobs=jobs)
        all_counts.append(batch.counts())
        has_leak = batch.has_leak_readout or batch.has_mid_readout
        if has_leak:
            keep = batch.keep_mask()
            kept_counts.append(batch.counts(keep))
            kept_frac.append(keep.mean())
            leak_prob.append(batch.any_leak().mean())
    rng = np.random.default_rng([profile.master_seed, _BOOTSTRAP_STREAM])
    f_raw, f_cor, s_raw, s_cor = _fold(all_counts, cinv, targets, resamples, rng)
    res = TruthTableResult(n, decomposition, shots, f_raw, f_cor, float(np.nanmean(f_raw)), float(np.nanmean(f_cor)),
                           s_raw, s_cor, circ.xx_count(), confusion.condition())
    if postselect and has_leak:
        p_raw, p_cor, ps_raw, ps_cor = _fold(kept_counts, cinv, targets, resamples, rng)
        res.f_ps_raw, res.f_ps_corrected = p_raw, p_cor
        res.F_ps_raw, res.F_ps_corrected = float(np.nanmean(p_raw)), float(np.nanmean(p_cor))
        res.sigma_ps_raw, res.sigma_ps_corrected = ps_raw, ps_cor
        res.kept_fraction, res.leak_prob = np.array(kept_frac), np.array(leak_prob)
    return res


# -- leakage scaling -------------------------------------------------------------------


def leakage_model(N, A, p):
    return 1.0 - A * p ** (2 * np.asarray(N, dtype=float) - 3)


@dataclass
class LeakageFit:
    A: float
    p: float
    covariance: np.ndarray
    ns: np.ndarray
    means: np.ndarray
    spreads: np.ndarray

    @property
    def p_sigma(self) -> float:
        return float(math.sqrt(self.covariance[1, 1]))

    def predict(self, N):
        return leakage_model(N, self.A, self.p)

    def to_dict(self) -> dict:
        return {"A": self.A, "p": self.p, "p_sigma": self.p_sigma, "covariance": self.covariance.tolist(),
                "ns": self.ns.tolist(), "means": self.means.tolist(), "spreads": self.spreads.tolist()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "mean", "sigma"])
        for N, m, s in zip(self.ns, self.means, self.spreads):
            w.writerow([int(N), repr(float(m)), repr(float(s))])
        return buf.getvalue()


def read_leak_csv(text: str) -> tuple:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("no leakage points in CSV")
    ns = [int(r["N"]) for r in rows]
    means = [float(r["mean"]) for r in rows]
    spreads = [float(r.get("sigma") or 0.0) for r in rows]
    return ns, means, spreads


def fit_leakage(points: Sequence[tuple], spreads: Sequence[float] | None = None) -> LeakageFit:
    """Least-squares fit of the mean leak probability to 1 - A * p**(2N - 3).

    Starts from A=1, p=0.95 and keeps p in (0, 1].
    """
    pts = sorted((int(N), float(m)) for N, m in points)
    if len(pts) < 3:
        raise ValueError("leakage fit needs at least 3 points")
    ns = np.array([p[0] for p in pts], dtype=float)
    means = np.array([p[1] for p in pts])
    spreads = np.zeros_like(means) if spreads is None else np.asarray(spreads, dtype=float)
    try:
        popt, pcov = curve_fit(leakage_model, ns, means, p0=(1.0, 0.95), bounds=([0.0, 1e-12], [np.inf, 1.0]),
                               max_nfev=500, ftol=1e-10, xtol=1e-10, gtol=1e-10)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"leakage fit did not converge: {exc}") from exc
    resid = means - leakage_model(ns, *popt)
    if not np.all(np.isfinite(popt)):
        raise FitError(f"leakage fit diverged; residuals {resid}")
    pcov = np.where(np.isfinite(pcov), pcov, 0.0)
    return LeakageFit(float(popt[0]), float(popt[1]), pcov, ns.astype(int), means, spreads)


def leak_scan(ns: Sequence[int], total_shots: int = 10_000, profile: NoiseProfile | None = None, *,
              hardware: HardwareProfile = DEFAULT_HARDWARE, jobs: int = 1, stash_idle: bool = True) -> LeakageFit:
    """Mean leak probability of the qutrit Toffoli for each N, averaged over all 2**N inputs.

    ``total_shots`` per N are split evenly across the inputs (at least one shot each).
    """
    profile = profile or NoiseProfile()
    means, spreads = [], []
    for n in ns:
        circ = toffoli_circuit("qutrit", n, hardware, stash_idle)
        per = max(1, -(-total_shots // 2**n))
        probs = []
        for k, x in enumerate(bitstrings(n)):
            batch = simulate_shots(basis_prep(x, use_sk1=True, hw=hardware) + circ, profile, per, hardware=hardware,
                                   stream=k, jobs=jobs)
            probs.append(batch.any_leak().mean())
        means.append(float(np.mean(probs)))
        spreads.append(float(np.std(probs)))
    return fit_leakage(list(zip(ns, means)), spreads)


# -- Ramsey phase calibration ---------------------------------------------------


@dataclass
class RamseyFit:
    amplitude: float
    phase: float
    offset: float
    acquired_phase: float
    reliable: bool


def _wrap(x: float) -> float:
    return float((x + math.pi) % (2 * math.pi) - math.pi)


def fit_ramsey(phis: Sequence[float], p2_freqs: Sequence[float], min_amplitude: float = 1e-3) -> RamseyFit:
    """Fit P(|2>) = a + b cos(phi) + c sin(phi) and read off the phase picked up during the MS gate.

    The calibration fringe is 1/2 - 1/2 cos(phi - chi), so the fitted phase
    sits at chi + pi.
    """
    phis = np.asarray(phis, dtype=float)
    y = np.asarray(p2_freqs, dtype=float)
    if phis.size < 8 or phis.size != y.size:
        raise ValueError("Ramsey fit needs at least 8 matching scan points")
    span = phis.max() - phis.min()
    if span < 2 * math.pi * (1 - 1 / phis.size) - 1e-9:
        raise ValueError("Ramsey scan must cover a full period")
    design = np.column_stack([np.ones_like(phis), np.cos(phis), np.sin(phis)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    amp = float(math.hypot(b, c))
    phase = float(math.atan2(c, b))
    return RamseyFit(amp, phase, float(a), _wrap(phase - math.pi), amp > min_amplitude)


def ramsey_scan(chi_a: float, chi_b: float = 0.0, probe: int = 0, points: int = 16, shots: int | None = None,
                profile: NoiseProfile | None = None, hardware: HardwareProfile = DEFAULT_HARDWARE, jobs: int = 1) -> tuple:
    """P(|2>) of the probe ion across the analysis-phase scan.

    With ``shots=None`` the exact noiseless probabilities are returned.
    """
    phis = np.linspace(0.0, 2 * math.pi, points, endpoint=False)
    p2 = []
    for k, phi in enumerate(phis):
        c = calibration_circuit(phi, chi_a, chi_b, probe, hardware)
        if shots is None:
            probs = simulate(Circuit(2, c.instructions[:-1])).probabilities().reshape(3, 3)
            p2.append(float(probs.sum(axis=1 - probe)[2]))
        else:
            batch = simulate_shots(c, profile or NoiseProfile(), shots, hardware=hardware,
                                   stream=_RAMSEY_STREAM + 64 * probe + k, jobs=jobs)
            p2.append(float(batch.bits[:, probe].mean()))
    return phis, np.array(p2)


def calibrate_pair(chi_a: float, chi_b: float, points: int = 16, shots: int | None = None,
                   profile: NoiseProfile | None = None, hardware: HardwareProfile = DEFAULT_HARDWARE) -> tuple:
    """Recover both residual MS phases; returns (PhaseCalibration for one gate instance, fit A, fit B)."""
    fits = []
    for probe in (0, 1):
        phis, p2 = ramsey_scan(chi_a, chi_b, probe, points, shots, profile, hardware)
        fits.append(fit_ramsey(phis, p2))
    return PhaseCalibration([fits[0].acquired_phase], [fits[1].acquired_phase]), fits[0], fits[1]


# -- Grover ------------------------------------------------------------------------------


@dataclass
class GroverResult:
    variant: str
    shots: int
    distributions: dict
    p_err: float
    ps_distributions: dict | None = None
    p_err_postselected: float | None = None
    kept_fraction: dict | None = None

    @property
    def mean_kept_fraction(self) -> float | None:
        return None if self.kept_fraction is None else float(np.mean(list(self.kept_fraction.values())))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_kept_fraction"] = self.mean_kept_fraction
        return d


def _search_dist(batch, mask=None) -> list:
    idx = batch.bits[:, 0].astype(int) * 2 + batch.bits[:, 1]
    if mask is not None:
        idx = idx[mask]
    counts = np.bincount(idx, minlength=4)
    total = max(int(counts.sum()), 1)
    return (counts / total).tolist()


def grover_experiment(variant: str, shots: int = 2048, profile: NoiseProfile | None = None, *,
                      hardware: HardwareProfile = DEFAULT_HARDWARE, jobs: int = 1) -> GroverResult:
    """Run grover3 for all four marked strings; P_err is the mean miss probability."""
    if variant not in GROVER_VARIANTS:
        raise ValueError(f"unknown Grover variant {variant!r}")
    profile = profile or NoiseProfile()
    dists, ps_dists, kept = {}, {}, {}
    for k, s in enumerate(("00", "01", "10", "11")):
        batch = simulate_shots(grover3(s, variant, hardware), profile, shots, hardware=hardware,
                               stream=_GROVER_STREAM + 8 * GROVER_VARIANTS.index(variant) + k, jobs=jobs)
        dists[s] = _search_dist(batch)
        if batch.has_mid_readout:
            mask = ~batch.mid_flag
            ps_dists[s] = _search_dist(batch, mask)
            kept[s] = float(mask.mean())
    p_err = float(np.mean([1 - dists[s][int(s, 2)] for s in dists]))
    res = GroverResult(variant, shots, dists, p_err)
    if ps_dists:
        res.ps_distributions = ps_dists
        res.kept_fraction = kept
        res.p_err_postselected = float(np.mean([1 - ps_dists[s][int(s, 2)] for s in ps_dists]))
    return res


# -- plots ------------------------------------------------------------------------------


def plot_svg(series: dict, path, title: str = "", xlabel: str = "N", ylabel: str = "") -> None:
    """Line chart of {label: (xs, ys)} written as SVG."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - optional extra
        raise RuntimeError("plotting needs matplotlib (pip install artifact[plot])") from exc
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, "o-", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
