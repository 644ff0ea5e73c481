"""Kernel DMD: EDMD in an implicit feature space through Gram matrices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from ._serial import decode_array, encode_array
from .dmd import KoopmanDecomposition, RankWarning, _check_train, _eig_sorted
from .errors import DimensionError, DomainError, NumericalError, ParseError
from .snapshots import SnapshotSet

__all__ = [
    "Kernel",
    "GramPair",
    "KernelBasis",
    "EXP_OVERFLOW_LIMIT",
    "kernel_eval",
    "parse_kernel",
    "gram_matrices",
    "kdmd",
]

EXP_OVERFLOW_LIMIT = 700.0
FAMILIES = ("polynomial", "exponential", "gaussian", "laplacian", "linear")
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Kernel:
    """Symmetric positive-definite kernel ``k(x, x')``.

    polynomial ``(1 + x.x')^d``, exponential ``exp(x.x')``, gaussian
    ``exp(-|x-x'|^2 / sigma^2)``, laplacian ``exp(-|x-x'| / sigma)``, and the
    plain inner product ``linear`` (used to check KDMD against DMD).
    """

    family: str
    degree: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == "polynomial":
            if self.degree is None or int(self.degree) != self.degree or self.degree < 1:
                raise DomainError("polynomial kernel needs a positive integer degree")
            object.__setattr__(self, "degree", int(self.degree))
        elif self.degree is not None:
            raise DomainError(f"{self.family} kernel takes no degree")
        if self.family in ("gaussian", "laplacian"):
            if self.sigma is None or not self.sigma > 0:
                raise DomainError(f"{self.family} kernel needs sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            raise DomainError(f"{self.family} kernel takes no sigma")

    @classmethod
    def polynomial(cls, degree: int) -> "Kernel":
        return cls("polynomial", degree=degree)

    @classmethod
    def exponential(cls) -> "Kernel":
        return cls("exponential")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "Kernel":
        return cls("gaussian", sigma=sigma)

    @classmethod
    def laplacian(cls, sigma: float = 1.0) -> "Kernel":
        return cls("laplacian", sigma=sigma)

    @classmethod
    def linear(cls) -> "Kernel":
        return cls("linear")

    def matrix(self, a, b) -> np.ndarray:
        """``K[i, j] = k(a[:, i], b[:, j])`` for column-stacked states."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if b.ndim == 1:
            b = b[:, None]
        if a.shape[0] != b.shape[0]:
            raise DimensionError(f"kernel arguments have dimensions {a.shape[0]} and {b.shape[0]}")
        fam = self.family
        if fam in ("polynomial", "linear", "exponential"):
            ip = a.T @ b
            if fam == "linear":
                out = ip
            elif fam == "polynomial":
                with np.errstate(over="ignore"):
                    out = (1.0 + ip) ** self.degree
            else:
                if ip.size and ip.max() > EXP_OVERFLOW_LIMIT:
                    i, j = np.unravel_index(int(np.argmax(ip)), ip.shape)
                    raise NumericalError(
                        f"exponential kernel overflow at ({i}, {j}): x.x' = {ip[i, j]:.3g} > "
                        f"{EXP_OVERFLOW_LIMIT:g}; rescale states to O(1) magnitude"
                    )
                out = np.exp(ip)
        elif fam == "gaussian":
            out = np.exp(-cdist(a.T, b.T, "sqeuclidean") / self.sigma**2)
        else:
            out = np.exp(-cdist(a.T, b.T, "euclidean") / self.sigma)
        if not np.all(np.isfinite(out)):
            i, j = (int(v) for v in np.argwhere(~np.isfinite(out))[0])
            raise NumericalError(f"{fam} kernel is non-finite at ({i}, {j})")
        return out

    def __call__(self, x, x_hat) -> float:
        return kernel_eval(self, x, x_hat)

    def to_spec(self) -> str:
        if self.family == "polynomial":
            return f"poly:{self.degree}"
        short = {"exponential": "exp", "gaussian": "gauss", "laplacian": "laplace", "linear": "linear"}
        if self.sigma is not None:
            return f"{short[self.family]}:{self.sigma!r}"
        return short[self.family]

    def to_dict(self) -> dict:
        return {"family": self.family, "degree": self.degree, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d) -> "Kernel":
        return cls(d["family"], degree=d.get("degree"), sigma=d.get("sigma"))


def kernel_eval(kernel: Kernel, x, x_hat) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    if x.shape != x_hat.shape:
        raise DimensionError(f"states have dimensions {x.size} and {x_hat.size}")
    return float(kernel.matrix(x[:, None], x_hat[:, None])[0, 0])


def parse_kernel(spec: str) -> Kernel:
    """``poly:D``, ``exp``, ``gauss:SIGMA``, ``laplace:SIGMA`` or ``linear``."""
    family, _, arg = spec.strip().partition(":")
    family = family.lower()
    aliases = {
        "poly": "polynomial",
        "polynomial": "polynomial",
        "exp": "exponential",
        "exponential": "exponential",
        "gauss": "gaussian",
        "gaussian": "gaussian",
        "laplace": "laplacian",
        "laplacian": "laplacian",
        "linear": "linear",
    }
    if family not in aliases:
        raise ParseError(f"unknown kernel spec {spec!r}")
    fam = aliases[family]
    try:
        if fam == "polynomial":
            return Kernel(fam, degree=int(arg))
        if fam in ("gaussian", "laplacian"):
            if not arg:
                raise ParseError(f"kernel spec {spec!r} needs an explicit sigma, e.g. {family}:1")
            return Kernel(fam, sigma=float(arg))
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"bad parameter in kernel spec {spec!r}") from None
    if arg:
        raise ParseError(f"{fam} kernel takes no parameter: {spec!r}")
    return Kernel(fam)


@dataclass(frozen=True, eq=False)
class GramPair:
    """``G_hat[i, j] = k(x_i, x_j)`` and ``A_hat[i, j] = k(x#_i, x_j)``."""

    G_hat: np.ndarray
    A_hat: np.ndarray


def gram_matrices(train: SnapshotSet, kernel: Kernel) -> GramPair:
    if train.m == 0:
        raise DimensionError("training set is empty")
    g = kernel.matrix(train.inputs, train.inputs)
    g = 0.5 * (g + g.T)
    a = kernel.matrix(train.images, train.inputs)
    return GramPair(g, a)


class KernelBasis:
    """Reduced coordinates ``S_r^+ Q_r^T k_x`` with ``(k_x)_j = k(x_j, x)``."""

    kind = "kernel"

    def __init__(self, kernel: Kernel, train_inputs, q, s):
        self.kernel = kernel
        self.train_inputs = np.asarray(train_inputs, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.s = np.asarray(s, dtype=float)

    @property
    def state_dim(self) -> int:
        return self.train_inputs.shape[0]

    def coordinates(self, x) -> np.ndarray:
        return (self.q.T @ self.kernel.matrix(self.train_inputs, x)) / self.s[:, None]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kernel": self.kernel.to_dict(),
            "train_inputs": encode_array(self.train_inputs),
            "q": encode_array(self.q),
            "s": encode_array(self.s),
        }

    @classmethod
    def from_dict(cls, d) -> "KernelBasis":
        return cls(
            Kernel.from_dict(d["kernel"]),
            decode_array(d["train_inputs"]),
            decode_array(d["q"]),
            decode_array(d["s"]),
        )


def kdmd(train: SnapshotSet, kernel: Kernel, rank="auto") -> KoopmanDecomposition:
    """Kernel DMD.

    With ``G_hat = Q S^2 Q^T`` truncated to ``r`` terms the reduced operator
    is ``K = S_r^+ Q_r^T A_hat^T Q_r S_r^+``.  For the linear kernel this is
    exactly the DMD operator ``U_r^T Y# V_r S_r^-1``.

    ``rank='auto'`` keeps the numerically nonzero Gram eigenvalues,
    ``lambda_i > lambda_1 * m * eps``.  An explicit rank above that count is
    reduced and the reduction recorded in the provenance.
    """
    _check_train(train)
    m = train.m
    gram = gram_matrices(train, kernel)
    lam, q = np.linalg.eigh(gram.G_hat)
    lam, q = lam[::-1], q[:, ::-1]
    prov = {
        "method": "kdmd",
        "requested_rank": rank,
        "kernel": kernel.to_spec(),
        "gram_min_eig_rel": float(lam[-1] / lam[0]) if lam[0] > 0 else 0.0,
    }
    if lam[0] <= 0:
        raise NumericalError("Gram matrix is numerically zero: rank-0 decomposition")
    lam = np.clip(lam, 0.0, None)
    numerical = int(np.sum(lam > lam[0] * m * _EPS))
    if rank is None or rank == "auto":
        r = numerical
        prov["rank_rule"] = "auto"
    else:
        r = int(rank)
        if r < 1 or r > m:
            raise DimensionError(f"rank must be in [1, {m}], got {r}")
        prov["rank_rule"] = "explicit"
        if r > numerical:
            msg = f"Gram matrix has only {numerical} nonzero eigenvalues; rank reduced from {r}"
            prov.setdefault("warnings", []).append(msg)
            warnings.warn(msg, RankWarning, stacklevel=2)
            r = numerical
    s = np.sqrt(lam)
    qr, sr = q[:, :r], s[:r]
    k_hat = (qr.T @ gram.A_hat.T @ qr) / np.outer(sr, sr)
    mu, left, right = _eig_sorted(k_hat, prov)
    prov["rank"] = r
    prov["numerical_rank"] = numerical

    basis = KernelBasis(kernel, train.inputs, qr, sr)
    phi_train = left @ ((qr.T @ gram.G_hat) / sr[:, None])
    modes = np.linalg.lstsq(phi_train.T, train.inputs.T.astype(complex), rcond=None)[0].T
    return KoopmanDecomposition(
        method="kdmd",
        eigenvalues=mu,
        modes=modes,
        left_vectors=left,
        basis=basis,
        singular_values=s,
        right_vectors=right,
        reduced_operator=k_hat,
        provenance=prov,
    )
