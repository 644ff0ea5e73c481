"""Extended DMD with an explicit dictionary of monomial observables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ._serial import decode_array, encode_array
from .dmd import KoopmanDecomposition, _check_train, _dmd_core
from .errors import DimensionError, DomainError, NumericalError, ParseError
from .snapshots import SnapshotSet

__all__ = [
    "Dictionary",
    "DictionaryBasis",
    "MAX_OBSERVABLES",
    "monomial_dictionary",
    "identity_dictionary",
    "parse_dictionary",
    "lift",
    "edmd",
]

MAX_OBSERVABLES = 10**7

CONVENTIONS = ("per_coordinate_max", "total_degree")


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Monomial observables ``psi_j(x) = prod_i x_i^{E[j, i]}``.

    Rows of ``exponents`` are in graded-lexicographic order for the
    factory-built dictionaries, so evaluation is deterministic.
    """

    exponents: np.ndarray
    description: str = ""

    def __post_init__(self):
        e = np.array(self.exponents, dtype=np.int64, copy=True)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise DimensionError("exponents must be a non-empty q x n integer array")
        if np.any(e < 0):
            raise DomainError("monomial exponents must be non-negative")
        e.setflags(write=False)
        object.__setattr__(self, "exponents", e)

    @property
    def q(self) -> int:
        return self.exponents.shape[0]

    @property
    def n(self) -> int:
        return self.exponents.shape[1]

    def __len__(self) -> int:
        return self.q

    @property
    def names(self) -> list[str]:
        out = []
        for row in self.exponents:
            terms = [f"x{i + 1}" + (f"^{p}" if p > 1 else "") for i, p in enumerate(row) if p]
            out.append("*".join(terms) if terms else "1")
        return out

    @property
    def constant_index(self) -> int | None:
        hits = np.flatnonzero(~self.exponents.any(axis=1))
        return int(hits[0]) if hits.size else None

    def coordinate_rows(self) -> list[int] | None:
        """Indices of the observables ``x_1, ..., x_n`` if all are present."""
        rows = []
        for i in range(self.n):
            target = np.zeros(self.n, dtype=np.int64)
            target[i] = 1
            hit = np.flatnonzero((self.exponents == target).all(axis=1))
            if not hit.size:
                return None
            rows.append(int(hit[0]))
        return rows

    def evaluate(self, x) -> np.ndarray:
        """``q x N`` matrix of observables at the columns of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != self.n:
            raise DimensionError(f"dictionary expects states of dimension {self.n}, got {x.shape[0]}")
        out = np.ones((self.q, x.shape[1]))
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(self.n):
                col = self.exponents[:, i]
                top = int(col.max())
                if top == 0:
                    continue
                powers = np.ones((top + 1, x.shape[1]))
                for p in range(1, top + 1):
                    powers[p] = powers[p - 1] * x[i]
                out *= powers[col]
        return out

    def observable(self, j: int):
        row = self.exponents[j]

        def psi(x):
            x = np.asarray(x, dtype=float)
            return np.prod([x[i] ** int(p) for i, p in enumerate(row)], axis=0)

        return psi

    def to_dict(self) -> dict:
        return {"exponents": self.exponents.tolist(), "description": self.description}

    @classmethod
    def from_dict(cls, d) -> "Dictionary":
        return cls(np.asarray(d["exponents"], dtype=np.int64), d.get("description", ""))


def _compositions(total: int, parts: int, cap: int) -> Iterator[tuple[int, ...]]:
    """Exponent tuples summing to ``total``, each entry <= cap, lex-descending."""
    if parts == 1:
        if total <= cap:
            yield (total,)
        return
    for first in range(min(total, cap), -1, -1):
        for rest in _compositions(total - first, parts - 1, cap):
            yield (first,) + rest


def monomial_dictionary(n: int, convention: str, degree: int) -> Dictionary:
    """All monomials in ``n`` variables under one of two degree conventions.

    ``per_coordinate_max``: every exponent <= degree, ``q = (degree+1)^n``.
    ``total_degree``: exponents sum to <= degree, ``q = C(n+degree, degree)``.
    """
    if n < 1 or degree < 0:
        raise DomainError("need n >= 1 and degree >= 0")
    if convention == "per_coordinate_max":
        q = (degree + 1) ** n
        cap, top = degree, degree * n
        desc = f"monomials with each exponent <= {degree} (n={n}, q={q})"
    elif convention == "total_degree":
        q = math.comb(n + degree, degree)
        cap, top = degree, degree
        desc = f"monomials of total degree <= {degree} (n={n}, q={q})"
    else:
        raise DomainError(f"unknown monomial convention {convention!r}")
    if q > MAX_OBSERVABLES:
        raise DimensionError(
            f"dictionary would have q = {q} observables (> {MAX_OBSERVABLES}); "
            "use kernel DMD with a polynomial kernel instead"
        )
    rows = [e for deg in range(top + 1) for e in _compositions(deg, n, cap)]
    return Dictionary(np.asarray(rows, dtype=np.int64), desc)


def identity_dictionary(n: int) -> Dictionary:
    """``psi(x) = x``; EDMD with it reduces to DMD."""
    return Dictionary(np.eye(n, dtype=np.int64), f"identity (n={n})")


def parse_dictionary(spec: str, n: int) -> Dictionary:
    """``percoord:D``, ``total:D`` or ``identity``."""
    family, _, arg = spec.partition(":")
    family = family.strip().lower()
    if family == "identity":
        return identity_dictionary(n)
    names = {"percoord": "per_coordinate_max", "total": "total_degree"}
    if family not in names:
        raise ParseError(f"unknown dictionary spec {spec!r}")
    try:
        degree = int(arg)
    except ValueError:
        raise ParseError(f"dictionary spec {spec!r} needs an integer degree") from None
    return monomial_dictionary(n, names[family], degree)


def _checked(dictionary: Dictionary, x: np.ndarray) -> np.ndarray:
    psi = dictionary.evaluate(x)
    bad = ~np.isfinite(psi)
    if bad.any():
        j, col = (int(v) for v in np.argwhere(bad)[0])
        raise NumericalError(
            f"observable {j} ({dictionary.names[j]}) is non-finite at column {col}; rescale the data"
        )
    return psi


def lift(dictionary: Dictionary, snapshots: SnapshotSet) -> SnapshotSet:
    """Map both snapshot matrices into feature space, keeping the pairing."""
    return SnapshotSet(
        _checked(dictionary, snapshots.inputs),
        _checked(dictionary, snapshots.images),
        sequential=snapshots.sequential,
        dt=snapshots.dt,
    )


class DictionaryBasis:
    """Reduced coordinates ``U_r^T psi(x)``."""

    kind = "dictionary"

    def __init__(self, dictionary: Dictionary, u):
        self.dictionary = dictionary
        self.u = np.asarray(u, dtype=float)

    @property
    def state_dim(self) -> int:
        return self.dictionary.n

    def lift(self, x) -> np.ndarray:
        return _checked(self.dictionary, x)

    def coordinates(self, x) -> np.ndarray:
        return self.u.T @ self.lift(x)

    def state_rows(self):
        return self.dictionary.coordinate_rows()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dictionary": self.dictionary.to_dict(), "u": encode_array(self.u)}

    @classmethod
    def from_dict(cls, d) -> "DictionaryBasis":
        return cls(Dictionary.from_dict(d["dictionary"]), decode_array(d["u"]))


def edmd(train: SnapshotSet, dictionary: Dictionary, rank="auto") -> KoopmanDecomposition:
    """DMD on lifted data; eigenfunctions are ``w_i^* U_r^T psi(x)``.

    Modes are reported in feature space; ``state_modes`` extracts the rows of
    the coordinate observables when the dictionary has them.
    """
    _check_train(train)
    if dictionary.n != train.n:
        raise DimensionError(f"dictionary is for n = {dictionary.n}, data have n = {train.n}")
    lifted = lift(dictionary, train)
    prov = {
        "method": "edmd",
        "requested_rank": rank,
        "dictionary": dictionary.description,
        "q": dictionary.q,
    }
    ur, s, mu, left, right, a_tilde = _dmd_core(lifted.inputs, lifted.images, rank, prov)
    r = ur.shape[1]
    prov["lifted_condition"] = float(s[0] / s[r - 1])
    return KoopmanDecomposition(
        method="edmd",
        eigenvalues=mu,
        modes=ur @ right,
        left_vectors=left,
        basis=DictionaryBasis(dictionary, ur),
        singular_values=s,
        right_vectors=right,
        reduced_operator=a_tilde,
        provenance=prov,
    )
