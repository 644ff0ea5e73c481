"""End-to-end pipelines on the benchmark systems, producing plot-ready tables.

Each pipeline returns plain Python structures; ``write_tables`` turns them into
CSV files.  The polynomial-map pipelines train on the first ``m_train`` of
``m_train + m_test`` random pairs and test on the rest.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._serial import atomic_write_text
from .accuracy import AccuracyReport, assemble_report, eigenfunction_grids
from .dmd import KoopmanDecomposition, dmd
from .edmd import edmd, monomial_dictionary
from .kdmd import Kernel, kdmd
from .errors import DomainError
from .snapshots import add_noise, analytic_eigenpairs, gen_oscillator_field, gen_polymap, split

__all__ = [
    "FIGURE_KERNELS",
    "polymap_data",
    "nearest_index",
    "fig1",
    "fig2",
    "fig3",
    "fig4_noise",
    "noise_summary",
    "surrogate",
    "write_tables",
    "FIGURES",
]

FIGURE_KERNELS = {
    "polynomial": Kernel.polynomial(5),
    "exponential": Kernel.exponential(),
    "gaussian": Kernel.gaussian(1.0),
    "laplacian": Kernel.laplacian(1.0),
}


def polymap_data(seed=0, m_train: int = 100, m_test: int = 100, noise: float = 0.0, noise_seed=None):
    """Train/test pairs of the polynomial map; noise, if any, on training data only."""
    train, test = split(gen_polymap(m_train + m_test, seed), m_train, m_test)
    if noise:
        train = add_noise(train, noise, seed if noise_seed is None else noise_seed)
    return train, test


def nearest_index(dec: KoopmanDecomposition, target: complex) -> int:
    """Index of the computed eigenvalue closest to ``target`` (first on ties)."""
    return int(np.argmin(np.abs(np.asarray(dec.eigenvalues) - target)))


def _edmd_fig1(seed):
    train, test = polymap_data(seed)
    dec = edmd(train, monomial_dictionary(2, "per_coordinate_max", 5))
    return dec, test


def fig1(seed=0, grid: int = 101) -> AccuracyReport:
    """EDMD (monomials up to degree 5 per coordinate) with alpha, tau and theta."""
    dec, test = _edmd_fig1(seed)
    return assemble_report(dec, test, analytic=analytic_eigenpairs(), grid=grid)


def fig2(seed=0, grid: int = 101, pairs=((1, 1), (6, 0))) -> dict:
    """Normalized computed and analytic eigenfunctions on the grid.

    For each analytic index ``(k, l)`` the computed eigenpair nearest to
    ``mu_{k,l}`` is used.  Returns ``{(k, l): (points, computed, analytic, i)}``.
    """
    dec, _ = _edmd_fig1(seed)
    lookup = {p.index: p for p in analytic_eigenpairs()}
    out = {}
    for kl in pairs:
        pair = lookup[tuple(kl)]
        i = nearest_index(dec, pair.eigenvalue)
        points, computed, analytic = eigenfunction_grids(dec, i, pair, grid=grid)
        out[tuple(kl)] = (points, computed, analytic, i)
    return out


def fig3(seed=0, kernels=None) -> dict[str, AccuracyReport]:
    """KDMD with each kernel on clean data, auto rank."""
    kernels = FIGURE_KERNELS if kernels is None else kernels
    train, test = polymap_data(seed)
    return {name: assemble_report(kdmd(train, k), test) for name, k in kernels.items()}


@dataclass(frozen=True)
class NoiseRow:
    kernel: str
    seed: int
    target: float
    mu: complex
    alpha: float


def fig4_noise(seeds=range(5), sigma: float = 1e-3, targets=(1.0, 0.9), kernels=None) -> list[NoiseRow]:
    """Noisy-training sweep: alpha at the eigenvalues nearest to ``targets``."""
    kernels = FIGURE_KERNELS if kernels is None else kernels
    rows = []
    for seed in seeds:
        train, test = polymap_data(seed, noise=sigma)
        for name, k in kernels.items():
            report = assemble_report(kdmd(train, k), test)
            dec_mu = np.array([r.eigenvalue for r in report.records])
            for target in targets:
                i = int(np.argmin(np.abs(dec_mu - target)))
                rec = report.records[i]
                rows.append(NoiseRow(name, int(seed), float(target), rec.eigenvalue, rec.alpha))
    return rows


def noise_summary(rows: list[NoiseRow]) -> dict[tuple[str, float], float]:
    """Arithmetic mean of alpha over seeds per (kernel, target)."""
    acc: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        acc.setdefault((r.kernel, r.target), []).append(r.alpha)
    return {key: float(np.mean(v)) for key, v in acc.items()}


def surrogate(seed=0, n: int = 2000, steps: int = 2000, rank: int = 100):
    """Oscillator field at 20 Hz: DMD on the first half, scored on the second.

    Returns ``(decomposition, report, train, test)``.
    """
    data = gen_oscillator_field(n=n, steps=steps, seed=seed)
    half = steps // 2
    train = data.subset(np.arange(half))
    test = data.subset(np.arange(half, steps))
    dec = dmd(train, rank=rank)
    report = assemble_report(dec, test, amplitude_data=train, dt=data.dt)
    return dec, report, train, test


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_tables(figure: str, out_dir, seed=0) -> list[Path]:
    """Run one pipeline and write its CSV tables into ``out_dir``."""
    out = Path(out_dir)
    written = []

    def emit(name, text):
        path = out / name
        atomic_write_text(path, text)
        written.append(path)

    if figure == "fig1":
        report = fig1(seed)
        emit("fig1.csv", report.to_csv())
    elif figure == "fig2":
        for (k, l), (points, computed, analytic, i) in fig2(seed).items():
            flat_c, flat_a = computed.ravel(), analytic.ravel()
            rows = [
                (repr(points[0, j]), repr(points[1, j]), repr(flat_c[j].real), repr(flat_c[j].imag),
                 repr(flat_a[j].real))
                for j in range(points.shape[1])
            ]
            emit(f"fig2_k{k}_l{l}.csv", _csv(("x1", "x2", "re_computed", "im_computed", "analytic"), rows))
    elif figure == "fig3":
        for name, report in fig3(seed).items():
            emit(f"fig3_{name}.csv", report.to_csv())
    elif figure == "fig4_noise":
        rows = fig4_noise()
        emit(
            "fig4_noise.csv",
            _csv(
                ("kernel", "seed", "target", "re_mu", "im_mu", "alpha"),
                [(r.kernel, r.seed, r.target, repr(r.mu.real), repr(r.mu.imag), repr(r.alpha)) for r in rows],
            ),
        )
        summary = noise_summary(rows)
        emit(
            "fig4_noise_mean.csv",
            _csv(("kernel", "target", "mean_alpha"), [(k, t, repr(a)) for (k, t), a in summary.items()]),
        )
    else:
        raise DomainError(f"unknown figure {figure!r}")
    return written


FIGURES = ("fig1", "fig2", "fig3", "fig4_noise")
