"""Held-out accuracy of Koopman eigenpairs, ground-truth errors and reports.

The accuracy criterion of eigenpair ``(mu, phi)`` on test pairs ``(x_k, x#_k)``
is ``alpha = sum |phi(x#_k) - mu phi(x_k)| / sum |phi(x_k)|``.  It is zero for
an exact eigenpair on clean data and close to one for an unreliable one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ._serial import atomic_write_text, write_json
from .dmd import ContinuousSpectrumEntry, KoopmanDecomposition, eigenfunction_eval, mode_amplitudes, to_continuous
from .errors import DegenerateEigenfunctionError, DimensionError, DomainError, KoopaccError, NumericalError
from .snapshots import AnalyticEigenpair, SnapshotSet

__all__ = [
    "NORMS",
    "CSV_COLUMNS",
    "DEFAULT_DOMAIN",
    "mode_error",
    "mode_errors",
    "eigenvalue_error",
    "eigenfunction_error",
    "eigenfunction_grids",
    "rank_correlation",
    "EigenpairRecord",
    "AccuracyReport",
    "assemble_report",
]

NORMS = ("abs_sum", "l2")
CSV_COLUMNS = ("index", "re_mu", "im_mu", "alpha", "beta", "tau", "theta", "freq_hz", "growth_rate")
_OPTIONAL = ("beta", "tau", "theta", "freq_hz", "growth_rate")
DEFAULT_DOMAIN = ((-1.0, 1.0), (-1.0, 1.0))


# --- alpha -------------------------------------------------------------------


def _alpha(phi_x: np.ndarray, phi_xs: np.ndarray, mu: complex, norm: str) -> float:
    resid = np.abs(phi_xs - mu * phi_x)
    mag = np.abs(phi_x)
    if norm == "abs_sum":
        num, den = resid.sum(), mag.sum()
    elif norm == "l2":
        num, den = np.linalg.norm(resid), np.linalg.norm(mag)
    else:
        raise DomainError(f"unknown norm {norm!r}; expected one of {NORMS}")
    if not (math.isfinite(num) and math.isfinite(den)):
        raise NumericalError("eigenfunction values are non-finite on the test set")
    if den == 0:
        raise DegenerateEigenfunctionError("degenerate eigenfunction on test set: sum |phi(x_k)| = 0")
    return float(num / den)


def _check_test(dec: KoopmanDecomposition, test: SnapshotSet) -> None:
    if test is None or test.m == 0:
        raise DimensionError("accuracy needs a non-empty held-out test set")
    if dec.basis is not None and test.n != dec.basis.state_dim:
        raise DimensionError(f"test data have n = {test.n}, decomposition expects {dec.basis.state_dim}")


def mode_error(dec: KoopmanDecomposition, i: int, test: SnapshotSet, norm: str = "abs_sum") -> float:
    """Accuracy ``alpha`` of eigenpair ``i`` on ``test``.

    Raises ``DegenerateEigenfunctionError`` if the eigenfunction vanishes on
    every test input.
    """
    _check_test(dec, test)
    phi_x = eigenfunction_eval(dec, i, test.inputs)
    phi_xs = eigenfunction_eval(dec, i, test.images)
    return _alpha(phi_x, phi_xs, complex(dec.eigenvalues[i]), norm)


def _all_alphas(dec, test, norm):
    _check_test(dec, test)
    phi_x = dec.eigenfunctions(test.inputs)
    phi_xs = dec.eigenfunctions(test.images)
    values, errors = [], {}
    for i, mu in enumerate(dec.eigenvalues):
        try:
            values.append(_alpha(phi_x[i], phi_xs[i], complex(mu), norm))
        except KoopaccError as exc:
            values.append(math.nan)
            errors[i] = str(exc)
    return np.asarray(values), errors


def mode_errors(dec: KoopmanDecomposition, test: SnapshotSet, norm: str = "abs_sum") -> np.ndarray:
    """``alpha`` for every eigenpair; NaN marks a degenerate eigenfunction."""
    return _all_alphas(dec, test, norm)[0]


# --- ground-truth errors -----------------------------------------------------


def eigenvalue_error(mu_hat: complex, analytic: Sequence[AnalyticEigenpair]):
    """Relative distance ``tau`` to the nearest analytic eigenvalue, and its index.

    Ties go to the smaller ``k + l``, then the smaller ``k``.
    """
    if not analytic:
        raise DomainError("no analytic eigenpairs to match against")
    mu_hat = complex(mu_hat)
    best = min(analytic, key=lambda p: (abs(mu_hat - p.eigenvalue), p.k + p.l, p.k))
    if best.eigenvalue == 0:
        raise DomainError("matched analytic eigenvalue is zero; tau undefined")
    return abs(mu_hat - best.eigenvalue) / abs(best.eigenvalue), best.index


def _grid(domain, grid):
    domain = tuple(tuple(map(float, b)) for b in domain)
    counts = (int(grid),) * len(domain) if np.isscalar(grid) else tuple(int(g) for g in grid)
    if len(counts) != len(domain):
        raise DimensionError("grid counts and domain have different dimensions")
    if min(counts) < 2:
        raise DomainError("need at least 2 grid points per axis")
    axes, weights = [], []
    for (lo, hi), c in zip(domain, counts):
        if not hi > lo:
            raise DomainError(f"empty domain interval [{lo}, {hi}]")
        ax = np.linspace(lo, hi, c)
        w = np.full(c, (hi - lo) / (c - 1))
        w[[0, -1]] *= 0.5
        axes.append(ax)
        weights.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([g.ravel() for g in mesh])
    w = weights[0]
    for extra in weights[1:]:
        w = np.multiply.outer(w, extra)
    return counts, points, w.ravel()


def _normalized(values: np.ndarray, what: str) -> np.ndarray:
    top = np.abs(values).max()
    if not math.isfinite(top):
        raise NumericalError(f"{what} is non-finite on the grid")
    if top == 0:
        raise DegenerateEigenfunctionError(f"{what} vanishes on the grid; cannot normalize")
    return values / top


def _aligned(phi_hat: np.ndarray, phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    # minimize ||a phi_hat - phi|| over |a| = 1
    t = np.sum(w * phi_hat * np.conj(phi))
    return phi_hat if t == 0 else phi_hat * (np.conj(t) / abs(t))


def _theta(phi_hat, phi, w) -> float:
    phi = _normalized(np.asarray(phi, dtype=complex), "analytic eigenfunction")
    phi_hat = _aligned(_normalized(phi_hat, "computed eigenfunction"), phi, w)
    return float(np.sqrt(np.sum(w * np.abs(phi_hat - phi) ** 2) / np.sum(w * np.abs(phi) ** 2)))


def eigenfunction_error(
    dec: KoopmanDecomposition,
    i: int,
    analytic_fn: Callable,
    domain=DEFAULT_DOMAIN,
    grid=101,
) -> float:
    """Relative L2 distance ``theta`` between eigenfunction ``i`` and ``analytic_fn``.

    Both are sampled on a uniform grid over ``domain`` and scaled to unit
    maximum modulus; the computed one is then phase-aligned to the analytic
    one.  Norms use the trapezoidal rule.
    """
    _, points, w = _grid(domain, grid)
    return _theta(eigenfunction_eval(dec, i, points), analytic_fn(points), w)


def eigenfunction_grids(dec, i, analytic_fn, domain=DEFAULT_DOMAIN, grid=101):
    """Normalized, phase-aligned computed and analytic eigenfunctions on the grid.

    Returns ``(axes_points, computed, analytic)`` with the two value arrays
    shaped like the grid.
    """
    counts, points, w = _grid(domain, grid)
    phi = _normalized(np.asarray(analytic_fn(points), dtype=complex), "analytic eigenfunction")
    phi_hat = _aligned(_normalized(eigenfunction_eval(dec, i, points), "computed eigenfunction"), phi, w)
    return points, phi_hat.reshape(counts), phi.reshape(counts)


def rank_correlation(a, b) -> float:
    """Spearman rank correlation, ties by average rank."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise DimensionError("rank correlation needs two 1-D sequences of equal length")
    if a.size < 3:
        raise DomainError("rank correlation needs at least 3 entries")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DomainError("rank correlation entries must be finite")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DomainError("rank correlation is undefined for a constant sequence")
    return float(stats.spearmanr(a, b).statistic)


# --- reports -------------------------------------------------------------------


@dataclass
class EigenpairRecord:
    index: int
    eigenvalue: complex
    alpha: float | None
    beta: float | None = None
    tau: float | None = None
    theta: float | None = None
    matched: tuple[int, int] | None = None
    continuous: ContinuousSpectrumEntry | None = None
    errors: list[str] = field(default_factory=list)

    def row(self) -> dict:
        c = self.continuous
        return {
            "index": self.index,
            "re_mu": self.eigenvalue.real,
            "im_mu": self.eigenvalue.imag,
            "alpha": self.alpha,
            "beta": self.beta,
            "tau": self.tau,
            "theta": self.theta,
            "freq_hz": None if c is None else c.frequency_hz,
            "growth_rate": None if c is None else c.growth_rate,
        }

    def to_dict(self) -> dict:
        d = self.row()
        d["matched_analytic"] = None if self.matched is None else list(self.matched)
        d["errors"] = list(self.errors)
        return d


@dataclass
class AccuracyReport:
    """Per-eigenpair accuracy records in the decomposition's eigenvalue order."""

    records: list[EigenpairRecord]
    metadata: dict = field(default_factory=dict)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([math.nan if r.alpha is None else r.alpha for r in self.records])

    @property
    def columns(self) -> list[str]:
        rows = [r.row() for r in self.records]
        return [c for c in CSV_COLUMNS if c not in _OPTIONAL or any(row[c] is not None for row in rows)]

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "records": [r.to_dict() for r in self.records]}

    def to_csv(self) -> str:
        """CSV text; optional columns absent for every row are omitted."""
        cols = self.columns
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for r in self.records:
            row = r.row()
            writer.writerow(["" if row[c] is None else repr(row[c]) for c in cols])
        return buf.getvalue()

    def write_json(self, path) -> None:
        write_json(path, self.to_dict())

    def write_csv(self, path) -> None:
        atomic_write_text(path, self.to_csv())

    def best(self, count: int, exclude=()) -> list[EigenpairRecord]:
        """The ``count`` records with smallest alpha, skipping indices in ``exclude``."""
        pool = [r for r in self.records if r.alpha is not None and r.index not in set(exclude)]
        return sorted(pool, key=lambda r: r.alpha)[:count]


def _describe_basis(dec: KoopmanDecomposition) -> dict:
    prov = dec.provenance or {}
    out = {}
    for key in ("kernel", "dictionary"):
        if key in prov:
            out[key] = prov[key]
    return out


def assemble_report(
    dec: KoopmanDecomposition,
    test: SnapshotSet,
    analytic: Sequence[AnalyticEigenpair] | None = None,
    amplitude_data: SnapshotSet | None = None,
    dt: float | None = None,
    norm: str = "abs_sum",
    grid=101,
    domain=DEFAULT_DOMAIN,
) -> AccuracyReport:
    """Score every eigenpair of ``dec`` on ``test``.

    ``tau``/``theta`` need ``analytic``; ``beta`` needs sequential
    ``amplitude_data``; frequencies need ``dt``.  Failures of individual
    entries are recorded on the record and in ``metadata['errors']``.
    """
    if norm not in NORMS:
        raise DomainError(f"unknown norm {norm!r}; expected one of {NORMS}")
    alphas, alpha_errors = _all_alphas(dec, test, norm)
    mus = np.asarray(dec.eigenvalues, dtype=complex)
    records = [
        EigenpairRecord(index=i, eigenvalue=complex(mu), alpha=None if i in alpha_errors else float(alphas[i]))
        for i, mu in enumerate(mus)
    ]
    for i, msg in alpha_errors.items():
        records[i].errors.append(f"alpha: {msg}")
    global_errors = []

    if amplitude_data is not None:
        try:
            beta = mode_amplitudes(dec, amplitude_data)
            for r, b in zip(records, beta):
                r.beta = float(b)
        except KoopaccError as exc:
            global_errors.append(f"beta: {exc}")

    if dt is not None:
        for r in records:
            try:
                r.continuous = to_continuous(r.eigenvalue, dt)
            except KoopaccError as exc:
                r.errors.append(f"continuous: {exc}")

    if analytic:
        by_index = {p.index: p for p in analytic}
        try:
            _, points, w = _grid(domain, grid)
            phi_grid = dec.eigenfunctions(points)
        except KoopaccError as exc:
            phi_grid = None
            global_errors.append(f"theta: {exc}")
        for r in records:
            try:
                r.tau, r.matched = eigenvalue_error(r.eigenvalue, analytic)
            except KoopaccError as exc:
                r.errors.append(f"tau: {exc}")
                continue
            if phi_grid is None:
                continue
            try:
                r.theta = _theta(phi_grid[r.index], by_index[r.matched](points), w)
            except KoopaccError as exc:
                r.errors.append(f"theta: {exc}")

    meta = {
        "method": dec.method,
        **_describe_basis(dec),
        "rank": dec.rank,
        "test_size": test.m,
        "norm": norm,
    }
    if dt is not None:
        meta["dt"] = dt
    if analytic:
        meta["theta_grid"] = grid
        meta["theta_domain"] = [list(b) for b in domain]
    meta["errors"] = global_errors + [f"record {r.index}: {e}" for r in records for e in r.errors]
    return AccuracyReport(records, meta)
