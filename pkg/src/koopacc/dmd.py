"""Standard and total-least-squares DMD on raw states.

Every method in the package ends in the same place: a small ``r x r``
operator whose eigenvalues, right eigenvectors and left eigenvectors are
stored in a :class:`KoopmanDecomposition`.  Eigenfunctions are evaluated as
``phi_i(x) = w_i^* z(x)`` where ``z`` are reduced coordinates supplied by a
method-specific *basis* object (``U_r^T x`` for DMD).
"""

from __future__ import annotations

import cmath
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from ._serial import decode_array, encode_array, write_json
from .errors import DimensionError, DomainError, NumericalError
from .snapshots import SnapshotSet

__all__ = [
    "KoopmanDecomposition",
    "ContinuousSpectrumEntry",
    "LinearBasis",
    "RankWarning",
    "dmd",
    "tdmd",
    "eigenfunction_eval",
    "eigenvalue_order",
    "to_continuous",
    "predict",
    "projection_coefficients",
    "mode_amplitudes",
]

AUTO_RANK_RTOL = 1e-10
RESIDUAL_TOL = 1e-10
_TIE_RTOL = 1e-12
_EPS = np.finfo(float).eps


class RankWarning(UserWarning):
    """Requested rank was reduced, or modes are rank deficient."""


# --- bases: map states to reduced coordinates ---------------------------------


class LinearBasis:
    """Reduced coordinates ``U_r^T x`` for DMD and TDMD."""

    kind = "linear"

    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)

    @property
    def state_dim(self) -> int:
        return self.u.shape[0]

    def coordinates(self, x) -> np.ndarray:
        return self.u.T @ x

    def to_dict(self) -> dict:
        return {"kind": self.kind, "u": encode_array(self.u)}

    @classmethod
    def from_dict(cls, d) -> "LinearBasis":
        return cls(decode_array(d["u"]))


def basis_from_dict(d):
    kind = d["kind"]
    if kind == "linear":
        return LinearBasis.from_dict(d)
    if kind == "dictionary":
        from .edmd import DictionaryBasis

        return DictionaryBasis.from_dict(d)
    if kind == "kernel":
        from .kdmd import KernelBasis

        return KernelBasis.from_dict(d)
    raise ValueError(f"unknown basis kind {kind!r}")


# --- decomposition container ----------------------------------------------------


@dataclass(frozen=True)
class ContinuousSpectrumEntry:
    lam: complex
    frequency_hz: float
    growth_rate: float


@dataclass(frozen=True, eq=False)
class KoopmanDecomposition:
    """Eigenvalues, modes and evaluable eigenfunctions of a fitted operator.

    ``left_vectors`` holds the rows ``w_i^*`` (already conjugated, unit
    2-norm), so that ``w_i^* A = mu_i w_i^*``.  ``modes`` are columns in state
    space (feature space for EDMD; see ``state_modes``).
    """

    method: str
    eigenvalues: np.ndarray
    modes: np.ndarray
    left_vectors: np.ndarray | None = None
    basis: object | None = None
    singular_values: np.ndarray | None = None
    right_vectors: np.ndarray | None = None
    reduced_operator: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    def coordinates(self, x) -> np.ndarray:
        if self.basis is None:
            raise DimensionError("decomposition carries no basis; eigenfunctions unavailable")
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != self.basis.state_dim:
            raise DimensionError(
                f"state dimension {x.shape[0]} does not match decomposition ({self.basis.state_dim})"
            )
        return self.basis.coordinates(x)

    def eigenfunctions(self, x) -> np.ndarray:
        """All eigenfunctions at the columns of ``x``: an ``r x N`` array."""
        if self.left_vectors is None:
            raise DimensionError("decomposition carries no left eigenvectors")
        return self.left_vectors @ self.coordinates(x)

    @property
    def state_modes(self) -> np.ndarray:
        """Modes restricted to state space when the basis can provide that view."""
        rows = getattr(self.basis, "state_rows", None)
        if rows is None:
            return self.modes
        idx = rows()
        if idx is None:
            raise DimensionError("dictionary does not contain the coordinate observables")
        return self.modes[idx]

    def continuous(self, dt: float) -> list[ContinuousSpectrumEntry]:
        return [to_continuous(mu, dt) for mu in self.eigenvalues]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rank": self.rank,
            "eigenvalues": encode_array(np.asarray(self.eigenvalues, dtype=complex)),
            "singular_values": encode_array(self.singular_values),
            "provenance": self.provenance,
            "modes": encode_array(np.asarray(self.modes, dtype=complex)),
            "left_vectors": encode_array(
                None if self.left_vectors is None else np.asarray(self.left_vectors, dtype=complex)
            ),
            "right_vectors": encode_array(
                None if self.right_vectors is None else np.asarray(self.right_vectors, dtype=complex)
            ),
            "reduced_operator": encode_array(self.reduced_operator),
            "basis": None if self.basis is None else self.basis.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "KoopmanDecomposition":
        eig = decode_array(d["eigenvalues"])
        return cls(
            method=d["method"],
            eigenvalues=np.asarray(eig, dtype=complex).reshape(-1),
            modes=np.asarray(decode_array(d["modes"]), dtype=complex),
            left_vectors=_as_complex(decode_array(d.get("left_vectors"))),
            basis=None if d.get("basis") is None else basis_from_dict(d["basis"]),
            singular_values=decode_array(d.get("singular_values")),
            right_vectors=_as_complex(decode_array(d.get("right_vectors"))),
            reduced_operator=decode_array(d.get("reduced_operator")),
            provenance=d.get("provenance", {}),
        )

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "KoopmanDecomposition":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _as_complex(a):
    return None if a is None else np.asarray(a, dtype=complex)


# --- shared numerical core ------------------------------------------------------


def eigenvalue_order(mu) -> np.ndarray:
    """Indices sorting ``mu`` by modulus, descending; ties by descending Im.

    Moduli within a relative 1e-12 are treated as tied.  Inside a tie group
    larger ``|Im|`` comes first so that conjugate pairs stay adjacent.
    """
    mu = np.asarray(mu, dtype=complex)
    mag = np.abs(mu)
    order = sorted(range(mu.size), key=lambda i: -mag[i])
    tol = _TIE_RTOL * max(float(mag.max()) if mu.size else 0.0, np.finfo(float).tiny)
    out: list[int] = []
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and mag[order[j - 1]] - mag[order[j]] <= tol:
            j += 1
        group = sorted(order[i:j], key=lambda k: (-abs(mu[k].imag), -mu[k].imag, -mu[k].real))
        out.extend(group)
        i = j
    return np.asarray(out, dtype=int)


def _eig_sorted(a: np.ndarray, prov: dict):
    """Eigenvalues plus matched left/right eigenvectors of the reduced operator."""
    if not np.all(np.isfinite(a)):
        raise NumericalError("reduced operator contains non-finite entries")
    mu, vl, vr = sla.eig(a, left=True, right=True)
    order = eigenvalue_order(mu)
    mu, vl, vr = mu[order], vl[:, order], vr[:, order]
    vr = vr / np.linalg.norm(vr, axis=0)
    vl = vl / np.linalg.norm(vl, axis=0)
    left = vl.conj().T

    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    res_right = np.linalg.norm(a @ vr - vr * mu) / scale
    res_left = np.linalg.norm(left @ a - mu[:, None] * left) / scale
    cross = np.abs(left @ vr)
    diag = np.sqrt(np.outer(np.diag(cross), np.diag(cross)))
    off = cross / np.where(diag > 0, diag, 1.0)
    np.fill_diagonal(off, 0.0)
    prov["eig_residual"] = float(max(res_right, res_left))
    prov["biorthogonality_defect"] = float(off.max()) if off.size else 0.0
    prov["eigvec_condition"] = float(np.linalg.cond(vr)) if vr.size else 1.0
    if prov["eig_residual"] > RESIDUAL_TOL:
        warnings.warn(
            f"reduced eigenproblem residual {prov['eig_residual']:.2e} exceeds {RESIDUAL_TOL:g}",
            RuntimeWarning,
            stacklevel=3,
        )
    return mu, left, vr


def _choose_rank(s, rank, numerical_rank: int, auto_rank: int, prov: dict, what: str) -> int:
    if s.size == 0 or s[0] == 0 or numerical_rank == 0:
        raise NumericalError(f"{what} is numerically zero: rank-0 decomposition")
    if rank is None or rank == "auto":
        prov["rank_rule"] = "auto"
        return max(auto_rank, 1)
    rank = int(rank)
    if rank < 1 or rank > s.size:
        raise DimensionError(f"rank must be in [1, {s.size}], got {rank}")
    prov["rank_rule"] = "explicit"
    if rank > numerical_rank:
        msg = f"requested rank {rank} exceeds numerical rank {numerical_rank} of {what}; truncated"
        prov.setdefault("warnings", []).append(msg)
        warnings.warn(msg, RankWarning, stacklevel=3)
        return numerical_rank
    return rank


def _check_train(train: SnapshotSet) -> None:
    if train.m == 0:
        raise DimensionError("training set is empty")
    if not (np.all(np.isfinite(train.inputs)) and np.all(np.isfinite(train.images))):
        raise NumericalError("training data contain non-finite values")


def _dmd_core(y: np.ndarray, ysharp: np.ndarray, rank, prov: dict):
    """Projected DMD core; returns (U_r, s, mu, left, right, A_tilde)."""
    u, s, vt = np.linalg.svd(y, full_matrices=False)
    if s.size and s[0] > 0:
        numerical = int(np.sum(s > s[0] * max(y.shape) * _EPS))
        auto = int(np.sum(s > s[0] * AUTO_RANK_RTOL))
    else:
        numerical = auto = 0
    r = _choose_rank(s, rank, numerical, auto, prov, "Y")
    ur, sr, vr = u[:, :r], s[:r], vt[:r].T
    a_tilde = (ur.T @ ysharp @ vr) / sr
    mu, left, right = _eig_sorted(a_tilde, prov)
    prov["rank"] = r
    prov["numerical_rank"] = numerical
    prov["energy_fraction"] = float(np.sum(sr**2) / np.sum(s**2))
    return ur, s, mu, left, right, a_tilde


def dmd(train: SnapshotSet, rank="auto") -> KoopmanDecomposition:
    """Projected DMD with reduced SVD ``Y = U S V^T`` truncated to ``rank``.

    ``rank='auto'`` keeps singular values with ``s_i / s_1 > 1e-10``.  Modes
    are ``U_r v_i``; eigenfunctions are ``w_i^* U_r^T x``.
    """
    _check_train(train)
    prov = {"method": "dmd", "requested_rank": rank}
    ur, s, mu, left, right, a_tilde = _dmd_core(train.inputs, train.images, rank, prov)
    return KoopmanDecomposition(
        method="dmd",
        eigenvalues=mu,
        modes=ur @ right,
        left_vectors=left,
        basis=LinearBasis(ur),
        singular_values=s,
        right_vectors=right,
        reduced_operator=a_tilde,
        provenance=prov,
    )


def tdmd(train: SnapshotSet, rank="auto") -> KoopmanDecomposition:
    """Total-least-squares DMD.

    Both snapshot matrices are projected onto the leading ``r`` right
    singular vectors of the stacked matrix ``[Y; Y#]`` before running DMD at
    rank ``r``; this removes the bias that noise in ``Y`` puts on ``A``.
    """
    _check_train(train)
    prov = {"method": "tdmd", "requested_rank": rank}
    z = np.vstack([train.inputs, train.images])
    _, sz, vzt = np.linalg.svd(z, full_matrices=False)
    if sz.size and sz[0] > 0:
        numerical = int(np.sum(sz > sz[0] * max(z.shape) * _EPS))
        auto = int(np.sum(sz > sz[0] * AUTO_RANK_RTOL))
    else:
        numerical = auto = 0
    r = _choose_rank(sz, rank, numerical, auto, prov, "[Y; Y#]")
    r = min(r, train.n, train.m)
    v = vzt[:r].T
    proj = v @ v.T
    y = train.inputs @ proj
    ysharp = train.images @ proj
    prov["stacked_singular_values"] = sz[: min(sz.size, 2 * r)].tolist()
    ur, s, mu, left, right, a_tilde = _dmd_core(y, ysharp, r, prov)
    return KoopmanDecomposition(
        method="tdmd",
        eigenvalues=mu,
        modes=ur @ right,
        left_vectors=left,
        basis=LinearBasis(ur),
        singular_values=s,
        right_vectors=right,
        reduced_operator=a_tilde,
        provenance=prov,
    )


def eigenfunction_eval(dec: KoopmanDecomposition, i: int, x):
    """Value of the ``i``-th eigenfunction at state ``x`` (or at columns of ``x``)."""
    if not 0 <= i < dec.rank:
        raise IndexError(f"eigenpair index {i} out of range for rank {dec.rank}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    vals = dec.left_vectors[i] @ dec.coordinates(x)
    return complex(vals[0]) if single else vals


def to_continuous(mu: complex, dt: float) -> ContinuousSpectrumEntry:
    """``lambda = log(mu) / dt`` on the principal branch, with f = Im(lambda)/2pi."""
    if not (dt > 0 and math.isfinite(dt)):
        raise DomainError(f"dt must be positive, got {dt}")
    mu = complex(mu)
    if mu == 0:
        raise NumericalError("mu = 0 corresponds to infinite decay; no continuous eigenvalue")
    lam = cmath.log(mu) / dt
    return ContinuousSpectrumEntry(lam=lam, frequency_hz=lam.imag / (2 * math.pi), growth_rate=lam.real)


# --- prediction and amplitudes ---------------------------------------------------


def projection_coefficients(modes, x) -> np.ndarray:
    """Least-squares (minimum-norm) coefficients ``c`` with ``modes @ c ~ x``."""
    modes = np.asarray(modes)
    c, _, rank, _ = np.linalg.lstsq(modes, np.asarray(x, dtype=modes.dtype), rcond=None)
    if rank < modes.shape[1]:
        warnings.warn(
            f"modes are rank deficient ({rank} < {modes.shape[1]}); using minimum-norm coefficients",
            RankWarning,
            stacklevel=2,
        )
    return c


def _initial_coefficients(dec: KoopmanDecomposition, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dec.method == "kdmd":
        # kernel modes are fitted against eigenfunction coordinates
        return dec.eigenfunctions(x[:, None])[:, 0]
    if dec.method == "edmd":
        x = dec.basis.lift(x[:, None])[:, 0]
    return projection_coefficients(np.asarray(dec.modes, dtype=complex), x.astype(complex))


def predict(dec: KoopmanDecomposition, y1, steps: int) -> np.ndarray:
    """Trajectory ``sum_i c_i mu_i^k v_i`` for ``k = 0..steps`` as columns.

    Output lives where the modes live: state space for DMD/TDMD/KDMD, feature
    space for EDMD.  The result is complex; take ``.real`` for real data.
    """
    if steps < 0:
        raise DomainError("steps must be non-negative")
    y1 = np.asarray(y1, dtype=float)
    c = _initial_coefficients(dec, y1)
    k = np.arange(steps + 1)
    powers = np.power.outer(np.asarray(dec.eigenvalues, dtype=complex), k)
    return np.asarray(dec.modes, dtype=complex) @ (c[:, None] * powers)


def mode_amplitudes(dec: KoopmanDecomposition, data: SnapshotSet) -> np.ndarray:
    """Time-averaged amplitudes normalised by their maximum.

    ``beta_i = (1/m) sum_{k<m} |c_i| |mu_i|^k ||v_i||`` with ``c`` the
    projection of the first snapshot of ``data`` onto the modes.
    """
    if data.m == 0:
        raise DimensionError("amplitude data are empty")
    if not data.sequential:
        raise DomainError("mode amplitudes need sequential (trajectory) data")
    c = _initial_coefficients(dec, data.inputs[:, 0])
    mag = np.abs(np.asarray(dec.eigenvalues, dtype=complex))
    with np.errstate(over="ignore"):
        avg = np.mean(np.power.outer(mag, np.arange(data.m, dtype=float)), axis=1)
    beta = np.abs(c) * avg * np.linalg.norm(dec.modes, axis=0)
    if not np.all(np.isfinite(beta)):
        raise NumericalError("mode amplitudes overflow (|mu| > 1 over a long trajectory)")
    top = beta.max()
    if top == 0:
        raise NumericalError("all mode amplitudes vanish")
    return beta / top
