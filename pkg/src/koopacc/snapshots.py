"""Snapshot pairs: construction, splitting, noise, synthetic benchmarks and file I/O.

Columns are snapshots throughout, so ``inputs`` is the matrix ``Y`` and
``images`` is ``Y#`` of the DMD literature.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._serial import atomic_write_bytes, atomic_write_text
from .errors import DimensionError, DomainError, SnapshotFormatError

__all__ = [
    "SnapshotSet",
    "AnalyticEigenpair",
    "from_sequence",
    "split",
    "add_noise",
    "polymap",
    "gen_polymap",
    "analytic_eigenpairs",
    "linear_operator",
    "gen_linear",
    "gen_oscillator_field",
    "load",
    "store",
]


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Paired samples ``(x_k, F(x_k))`` stored column-wise.

    An empty set (``m == 0``) is representable so that ``split`` can return
    an empty test partition; every scoring routine rejects it.
    """

    inputs: np.ndarray
    images: np.ndarray
    sequential: bool = False
    dt: float | None = None

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.images, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise DimensionError("inputs and images must be 2-D (states x snapshots)")
        if x.shape != y.shape:
            raise DimensionError(f"inputs {x.shape} and images {y.shape} differ in shape")
        if x.shape[0] < 1:
            raise DimensionError("state dimension must be at least 1")
        if self.dt is not None:
            if not self.sequential:
                raise DomainError("dt is only meaningful for sequential data")
            if not (math.isfinite(self.dt) and self.dt > 0):
                raise DomainError(f"dt must be positive, got {self.dt}")
        if self.sequential and x.shape[1] > 1 and not np.array_equal(y[:, :-1], x[:, 1:]):
            raise DimensionError("sequential set: images[:, k] must equal inputs[:, k+1]")
        object.__setattr__(self, "inputs", _frozen(x))
        object.__setattr__(self, "images", _frozen(y))
        object.__setattr__(self, "sequential", bool(self.sequential))
        if self.dt is not None:
            object.__setattr__(self, "dt", float(self.dt))

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other):
        if not isinstance(other, SnapshotSet):
            return NotImplemented
        return (
            self.sequential == other.sequential
            and self.dt == other.dt
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.images, other.images)
        )

    __hash__ = None

    @property
    def series(self) -> np.ndarray:
        """The ``n x (m+1)`` trajectory behind a sequential set."""
        if not self.sequential:
            raise DimensionError("only sequential sets have an underlying series")
        return np.hstack([self.inputs, self.images[:, -1:]])

    def subset(self, idx) -> "SnapshotSet":
        idx = np.asarray(idx, dtype=int)
        contiguous = idx.size <= 1 or bool(np.all(np.diff(idx) == 1))
        seq = self.sequential and contiguous
        return SnapshotSet(
            self.inputs[:, idx], self.images[:, idx], sequential=seq, dt=self.dt if seq else None
        )


def from_sequence(series, dt: float | None = None) -> SnapshotSet:
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[None, :]
    if series.ndim != 2 or series.shape[1] < 2:
        raise DimensionError("a sequence needs at least 2 columns to form a pair")
    return SnapshotSet(series[:, :-1], series[:, 1:], sequential=True, dt=dt)


def split(
    snapshots: SnapshotSet,
    n_train: int,
    n_test: int,
    strategy: str = "prefix",
    seed=None,
) -> tuple[SnapshotSet, SnapshotSet]:
    """Partition pairs into disjoint train and test sets.

    ``prefix`` takes the first ``n_train`` pairs then the next ``n_test``
    (contiguous slices of sequential data stay sequential). ``random`` draws
    a permutation from ``seed``, which is required.
    """
    m = snapshots.m
    if n_train < 0 or n_test < 0:
        raise DimensionError("split sizes must be non-negative")
    if n_train + n_test > m:
        raise DimensionError(f"n_train + n_test = {n_train + n_test} exceeds m = {m}")
    if strategy == "prefix":
        train_idx = np.arange(n_train)
        test_idx = np.arange(n_train, n_train + n_test)
    elif strategy == "random":
        if seed is None:
            raise DomainError("random split needs an explicit seed")
        perm = np.random.default_rng(seed).permutation(m)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train : n_train + n_test])
    else:
        raise DomainError(f"unknown split strategy {strategy!r}")
    return snapshots.subset(train_idx), snapshots.subset(test_idx)


def add_noise(snapshots: SnapshotSet, sigma: float, seed) -> SnapshotSet:
    """Add i.i.d. zero-mean Gaussian noise of standard deviation ``sigma``.

    Non-sequential sets get independent perturbations on inputs and images.
    For sequential sets the underlying series is perturbed once, so a state
    shared by two consecutive pairs carries the same noise in both.
    """
    if not sigma >= 0:
        raise DomainError(f"noise level must be non-negative, got {sigma}")
    if sigma == 0:
        return SnapshotSet(snapshots.inputs, snapshots.images, snapshots.sequential, snapshots.dt)
    rng = np.random.default_rng(seed)
    if snapshots.sequential:
        s = snapshots.series
        return from_sequence(s + sigma * rng.standard_normal(s.shape), dt=snapshots.dt)
    x = snapshots.inputs + sigma * rng.standard_normal(snapshots.inputs.shape)
    y = snapshots.images + sigma * rng.standard_normal(snapshots.images.shape)
    return SnapshotSet(x, y)


# --- the 2-D polynomial map and its Koopman eigenpairs -----------------------


def polymap(x, gamma: float = 0.9, delta: float = 0.8) -> np.ndarray:
    """(x1, x2) -> (gamma x1, delta x2 + (gamma^2 - delta) x1^2), column-wise."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[0], x[1]
    return np.stack([gamma * x1, delta * x2 + (gamma**2 - delta) * x1**2])


def gen_polymap(m: int, seed, gamma: float = 0.9, delta: float = 0.8) -> SnapshotSet:
    """``m`` inputs uniform on [-1, 1)^2 with their exact images under ``polymap``."""
    if m < 1:
        raise DimensionError("m must be at least 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=(2, m))
    return SnapshotSet(x, polymap(x, gamma, delta))


@dataclass(frozen=True)
class AnalyticEigenpair:
    """Koopman eigenpair ``(gamma^k delta^l, x1^k (x2 - x1^2)^l)`` of ``polymap``."""

    k: int
    l: int
    gamma: float = 0.9
    delta: float = 0.8

    @property
    def eigenvalue(self) -> float:
        return self.gamma**self.k * self.delta**self.l

    @property
    def index(self) -> tuple[int, int]:
        return (self.k, self.l)

    def eigenfunction(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x1, x2 = x[0], x[1]
        return x1**self.k * (x2 - x1**2) ** self.l

    __call__ = eigenfunction


def analytic_eigenpairs(
    gamma: float = 0.9, delta: float = 0.8, k_max: int = 10, l_max: int = 10
) -> list[AnalyticEigenpair]:
    if k_max < 0 or l_max < 0:
        raise DomainError("k_max and l_max must be non-negative")
    pairs = [
        AnalyticEigenpair(k, l, gamma, delta)
        for k in range(k_max + 1)
        for l in range(l_max + 1)
    ]
    pairs.sort(key=lambda p: (-abs(p.eigenvalue), p.k + p.l, p.k))
    return pairs


# --- linear and oscillator surrogates -----------------------------------------


def linear_operator(eigenvalues: Sequence[complex], n: int, seed) -> np.ndarray:
    """Real ``n x n`` matrix with the given nonzero spectrum (rest zero).

    A complex eigenvalue contributes a 2x2 rotation block, i.e. it brings its
    conjugate along; listing the conjugate explicitly as well is harmless.
    """
    eigs = [complex(e) for e in eigenvalues]
    blocks = []
    for e in eigs:
        if e.imag == 0:
            blocks.append(np.array([[e.real]]))
        elif e.imag > 0 or e.conjugate() not in eigs:
            a, b = e.real, abs(e.imag)
            blocks.append(np.array([[a, -b], [b, a]]))
    size = sum(b.shape[0] for b in blocks)
    if size > n:
        raise DimensionError(f"spectrum needs dimension {size} > n = {n}")
    core = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        core[i : i + k, i : i + k] = b
        i += k
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    return q @ core @ q.T


def gen_linear(
    matrix, m: int, seed, sequential: bool = False, dt: float | None = None
) -> SnapshotSet:
    """Pairs ``(x, A x)`` with Gaussian inputs, or one trajectory if sequential."""
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    if m < 1:
        raise DimensionError("m must be at least 1")
    rng = np.random.default_rng(seed)
    if sequential:
        series = np.empty((n, m + 1))
        series[:, 0] = rng.standard_normal(n)
        for k in range(m):
            series[:, k + 1] = a @ series[:, k]
        return from_sequence(series, dt=dt)
    if dt is not None:
        raise DomainError("dt requires sequential data")
    x = rng.standard_normal((n, m))
    return SnapshotSet(x, a @ x)


def gen_oscillator_field(
    n: int = 2000,
    steps: int = 2000,
    dt: float = 1.0 / 20.0,
    frequencies: Sequence[float] = (0.0, 0.89, 1.77, 2.73),
    growth_rates: Sequence[float] = (0.0, 0.0, -0.002, -0.005),
    amplitudes: Sequence[float] = (1.0, 0.6, 0.3, 0.15),
    noise: float = 0.05,
    seed=0,
) -> SnapshotSet:
    """Sequential field made of a few damped or neutral standing oscillations.

    Each component has random spatial shapes ``a, b`` and evolves as
    ``e^{g t} (a cos 2 pi f t + b sin 2 pi f t)``; a zero frequency gives a
    mean-flow-like constant mode. White measurement noise is added to every
    entry. Returns ``steps`` pairs (``steps + 1`` snapshots).
    """
    if not (len(frequencies) == len(growth_rates) == len(amplitudes)):
        raise DimensionError("frequencies, growth_rates and amplitudes must align")
    rng = np.random.default_rng(seed)
    t = np.arange(steps + 1) * dt
    series = np.zeros((n, steps + 1))
    for f, g, amp in zip(frequencies, growth_rates, amplitudes):
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        env = amp * np.exp(g * t)
        series += np.outer(a, env * np.cos(2 * np.pi * f * t))
        if f != 0:
            series += np.outer(b, env * np.sin(2 * np.pi * f * t))
    if noise:
        series += noise * rng.standard_normal(series.shape)
    return from_sequence(series, dt=dt)


# --- file formats --------------------------------------------------------------

_MAGIC = b"KSNP"
_VERSION = 1
_HEADER = struct.Struct("<4sBQQBd")
_CSV_TAG = "koopacc-snapshots"


def _detect_format(path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "bin"):
            raise SnapshotFormatError(f"unknown snapshot format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix == ".bin":
        return "bin"
    raise SnapshotFormatError(f"cannot infer format from {str(path)!r}; pass format='csv' or 'bin'")


def store(snapshots: SnapshotSet, path, format: str | None = None) -> None:
    fmt = _detect_format(path, format)
    if snapshots.m == 0:
        raise DimensionError("refusing to store an empty snapshot set")
    if fmt == "bin":
        flags = (1 if snapshots.sequential else 0) | (2 if snapshots.dt is not None else 0)
        dt = snapshots.dt if snapshots.dt is not None else float("nan")
        head = _HEADER.pack(_MAGIC, _VERSION, snapshots.n, snapshots.m, flags, dt)
        body = (
            np.ascontiguousarray(snapshots.inputs, dtype="<f8").tobytes()
            + np.ascontiguousarray(snapshots.images, dtype="<f8").tobytes()
        )
        atomic_write_bytes(path, head + body)
        return
    dt = "none" if snapshots.dt is None else repr(snapshots.dt)
    lines = [
        f"# {_CSV_TAG} n={snapshots.n} m={snapshots.m} "
        f"sequential={int(snapshots.sequential)} dt={dt}"
    ]
    for block in (snapshots.inputs, snapshots.images):
        for row in block:
            lines.append(",".join(repr(v) for v in row.tolist()))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load(path, format: str | None = None) -> SnapshotSet:
    fmt = _detect_format(path, format)
    if fmt == "bin":
        return _load_bin(Path(path).read_bytes())
    return _load_csv(Path(path).read_text())


def _load_bin(data: bytes) -> SnapshotSet:
    if len(data) == 0:
        raise SnapshotFormatError("no snapshots: file is empty")
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, version, n, m, flags, dt = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise SnapshotFormatError("bad magic bytes; not a koopacc snapshot file")
    if version != _VERSION:
        raise SnapshotFormatError(f"unsupported format version {version}")
    if m == 0:
        raise SnapshotFormatError("no snapshots: header declares m = 0")
    expected = _HEADER.size + 2 * n * m * 8
    if len(data) != expected:
        raise SnapshotFormatError(
            f"dimension mismatch: header n={n}, m={m} needs {expected} bytes, file has {len(data)}"
        )
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(float)
    x = body[: n * m].reshape(n, m)
    y = body[n * m :].reshape(n, m)
    seq = bool(flags & 1)
    return SnapshotSet(x, y, sequential=seq, dt=float(dt) if flags & 2 else None)


def _parse_header(line: str) -> tuple[int, int, bool, float | None]:
    parts = line.lstrip("#").split()
    if not parts or parts[0] != _CSV_TAG:
        raise SnapshotFormatError(f"malformed header: expected '# {_CSV_TAG} ...', got {line!r}")
    fields = {}
    for p in parts[1:]:
        if "=" not in p:
            raise SnapshotFormatError(f"malformed header field {p!r}")
        key, val = p.split("=", 1)
        fields[key] = val
    try:
        n = int(fields["n"])
        m = int(fields["m"])
        seq = fields["sequential"] in ("1", "true", "True")
        dt = None if fields.get("dt", "none") == "none" else float(fields["dt"])
    except (KeyError, ValueError) as exc:
        raise SnapshotFormatError(f"malformed header {line!r}: {exc}") from None
    if n < 1:
        raise SnapshotFormatError(f"malformed header: n = {n}")
    return n, m, seq, dt


def _load_csv(text: str) -> SnapshotSet:
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise SnapshotFormatError("no snapshots: file is empty")
    n, m, seq, dt = _parse_header(lines[0][1])
    if m == 0:
        raise SnapshotFormatError("no snapshots: header declares m = 0")
    rows = [(i, ln) for i, ln in lines[1:] if not ln.startswith("#")]
    if len(rows) != 2 * n:
        raise SnapshotFormatError(
            f"dimension mismatch: expected {n} input rows and {n} image rows, found {len(rows)} rows"
        )
    data = np.empty((2 * n, m))
    for r, (lineno, ln) in enumerate(rows):
        cells = ln.split(",")
        if len(cells) != m:
            raise SnapshotFormatError(f"row at line {lineno} has {len(cells)} columns, expected {m}")
        try:
            data[r] = np.array(cells, dtype=float)
        except ValueError:
            for c, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise SnapshotFormatError(
                        f"non-numeric cell {cell.strip()!r} at line {lineno}, column {c + 1}"
                    ) from None
            raise
    return SnapshotSet(data[:n], data[n:], sequential=seq, dt=dt)
