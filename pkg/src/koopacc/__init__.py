"""Koopman eigenpair approximation (DMD, TDMD, EDMD, KDMD) and accuracy scoring."""

from .dmd import KoopmanDecomposition, RankWarning, dmd, mode_amplitudes, predict, tdmd, to_continuous
from .edmd import Dictionary, edmd, monomial_dictionary
from .errors import (
    DegenerateEigenfunctionError,
    DimensionError,
    DomainError,
    KoopaccError,
    NumericalError,
    ParseError,
    SnapshotFormatError,
)
from .kdmd import Kernel, kdmd
from .snapshots import SnapshotSet, add_noise, analytic_eigenpairs, gen_polymap, split

__version__ = "0.1.0"

__all__ = [
    "KoopmanDecomposition",
    "RankWarning",
    "dmd",
    "tdmd",
    "edmd",
    "kdmd",
    "predict",
    "mode_amplitudes",
    "to_continuous",
    "Dictionary",
    "monomial_dictionary",
    "Kernel",
    "SnapshotSet",
    "split",
    "add_noise",
    "gen_polymap",
    "analytic_eigenpairs",
    "KoopaccError",
    "ParseError",
    "SnapshotFormatError",
    "DimensionError",
    "DomainError",
    "NumericalError",
    "DegenerateEigenfunctionError",
]
