import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopacc.accuracy import (
    CSV_COLUMNS,
    assemble_report,
    eigenfunction_error,
    eigenvalue_error,
    mode_error,
    mode_errors,
    rank_correlation,
)
from koopacc.dmd import KoopmanDecomposition, dmd
from koopacc.edmd import Dictionary, DictionaryBasis
from koopacc.errors import DegenerateEigenfunctionError, DimensionError, DomainError
from koopacc.snapshots import (
    SnapshotSet,
    analytic_eigenpairs,
    gen_oscillator_field,
    gen_polymap,
    polymap,
)


def analytic_decomposition(k, l, coef=1.0, mu_shift=0.0):
    """Decomposition whose single eigenfunction is coef * x1^k (x2 - x1^2)^l."""
    rows = [(k + 2 * j, l - j) for j in range(l + 1)]
    w = np.array([coef * math.comb(l, j) * (-1) ** j for j in range(l + 1)], dtype=complex)
    dic = Dictionary(np.array(rows))
    mu = 0.9**k * 0.8**l + mu_shift
    return KoopmanDecomposition(
        method="edmd",
        eigenvalues=np.array([mu], dtype=complex),
        modes=np.zeros((len(rows), 1), dtype=complex),
        left_vectors=w[None, :],
        basis=DictionaryBasis(dic, np.eye(len(rows))),
    )


pair_indices = st.tuples(st.integers(0, 4), st.integers(0, 3))
seeds = st.integers(0, 2**31)


@given(pair_indices, seeds)
@settings(max_examples=40, deadline=None)
def test_alpha_zero_for_analytic_pair(kl, seed):
    test = gen_polymap(50, seed)
    for norm in ("abs_sum", "l2"):
        assert mode_error(analytic_decomposition(*kl), 0, test, norm) <= 1e-12


@given(pair_indices, seeds, st.floats(1e-3, 1e3), st.floats(0, 2 * math.pi))
@settings(max_examples=40, deadline=None)
def test_alpha_invariant_under_eigenfunction_scaling(kl, seed, mag, phase):
    test = gen_polymap(50, seed)
    base = mode_error(analytic_decomposition(*kl, mu_shift=0.05), 0, test)
    scaled = mode_error(analytic_decomposition(*kl, coef=mag * np.exp(1j * phase), mu_shift=0.05), 0, test)
    assert abs(base - scaled) <= 1e-12


@given(pair_indices, seeds, st.floats(-0.5, 0.5))
@settings(max_examples=40, deadline=None)
def test_alpha_equals_eigenvalue_perturbation(kl, seed, delta):
    test = gen_polymap(50, seed)
    alpha = mode_error(analytic_decomposition(*kl, mu_shift=delta), 0, test)
    assert abs(alpha - abs(delta)) <= 1e-12


def test_constant_eigenfunction_alpha_exactly_zero():
    test = gen_polymap(20, 0)
    assert mode_error(analytic_decomposition(0, 0), 0, test) == 0.0


def test_zero_denominator_raises():
    x = np.vstack([np.zeros(5), np.linspace(-1, 1, 5)])
    test = SnapshotSet(x, polymap(x))
    with pytest.raises(DegenerateEigenfunctionError, match="degenerate eigenfunction"):
        mode_error(analytic_decomposition(1, 0), 0, test)


def test_degenerate_entry_is_absent_in_report():
    x = np.vstack([np.zeros(5), np.linspace(-1, 1, 5)])
    test = SnapshotSet(x, polymap(x))
    report = assemble_report(analytic_decomposition(1, 0), test)
    assert report.records[0].alpha is None
    assert report.records[0].errors and report.metadata["errors"]
    assert math.isnan(mode_errors(analytic_decomposition(1, 0), test)[0])


def test_empty_test_set_rejected():
    empty = SnapshotSet(np.zeros((2, 0)), np.zeros((2, 0)))
    with pytest.raises(DimensionError):
        mode_error(analytic_decomposition(1, 0), 0, empty)


def test_dimension_mismatch_rejected():
    dec = analytic_decomposition(1, 0)
    with pytest.raises(DimensionError):
        mode_error(dec, 0, SnapshotSet(np.ones((3, 2)), np.ones((3, 2))))


def test_unknown_norm():
    with pytest.raises(DomainError):
        mode_error(analytic_decomposition(1, 0), 0, gen_polymap(5, 0), norm="linf")


def test_dmd_alpha_invariant_to_test_scaling():
    train, test = gen_polymap(100, 0), gen_polymap(100, 1)
    dec = dmd(train)
    scaled = SnapshotSet(3.7 * test.inputs, 3.7 * test.images)
    np.testing.assert_allclose(mode_errors(dec, scaled), mode_errors(dec, test), rtol=0, atol=1e-12)


def test_dmd_alpha_stable_across_test_halves():
    dec = dmd(gen_polymap(100, 0))
    test = gen_polymap(4000, 1)
    a = mode_errors(dec, test.subset(np.arange(2000)))
    b = mode_errors(dec, test.subset(np.arange(2000, 4000)))
    assert np.all(np.abs(a - b) / b < 0.2)


def test_eigenvalue_error_examples():
    pairs = analytic_eigenpairs()
    assert eigenvalue_error(0.9 * 0.8, pairs) == (0.0, (1, 1))
    tau, match = eigenvalue_error(0.72, pairs)
    assert match == (1, 1) and tau <= 2e-16
    # mu_{4,1} = 0.52488 is nearer to this value than mu_{6,0} = 0.531441
    tau, match = eigenvalue_error(0.5250 + 0.0030j, pairs)
    assert match == (4, 1)
    assert tau == pytest.approx(abs(0.5250 + 0.0030j - 0.52488) / 0.52488, rel=1e-12)
    six = [p for p in pairs if p.index == (6, 0)]
    tau6, match6 = eigenvalue_error(0.5250 + 0.0030j, six)
    assert match6 == (6, 0) and tau6 == pytest.approx(1.3e-2, rel=0.05)
    mu = 0.9**3 * 0.8
    assert eigenvalue_error(mu * (1 + 1e-15), pairs)[0] == pytest.approx(1e-15, rel=0.5)


def test_eigenvalue_error_tie_break():
    pairs = analytic_eigenpairs(gamma=0.8, delta=0.8, k_max=3, l_max=3)
    assert eigenvalue_error(0.8, pairs)[1] == (0, 1)
    assert eigenvalue_error(0.64, pairs)[1] == (0, 2)


def test_eigenvalue_error_needs_pairs():
    with pytest.raises(DomainError):
        eigenvalue_error(0.5, [])


@given(pair_indices, st.floats(1e-2, 1e2), st.floats(0, 2 * math.pi))
@settings(max_examples=25, deadline=None)
def test_theta_zero_for_analytic_function_any_scaling(kl, mag, phase):
    dec = analytic_decomposition(*kl, coef=mag * np.exp(1j * phase))
    pair = [p for p in analytic_eigenpairs() if p.index == kl][0]
    assert eigenfunction_error(dec, 0, pair, grid=41) <= 1e-12


def test_theta_detects_wrong_function():
    dec = analytic_decomposition(1, 1)
    other = [p for p in analytic_eigenpairs() if p.index == (6, 0)][0]
    assert eigenfunction_error(dec, 0, other) > 0.1


def test_theta_zero_analytic_function_rejected():
    with pytest.raises(DegenerateEigenfunctionError):
        eigenfunction_error(analytic_decomposition(1, 0), 0, lambda x: np.zeros(x.shape[1]))


def test_theta_grid_validation():
    with pytest.raises(DomainError):
        eigenfunction_error(analytic_decomposition(1, 0), 0, analytic_eigenpairs()[1], grid=1)


def test_rank_correlation_basic():
    a = [0.3, 0.1, 0.5, 0.2]
    assert rank_correlation(a, a) == pytest.approx(1.0)
    assert rank_correlation(a, [-v for v in a]) == pytest.approx(-1.0)
    assert rank_correlation([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9486832980505138)


@pytest.mark.parametrize(
    "a, b",
    [([1, 1, 1], [1, 2, 3]), ([1, 2], [1, 2]), ([1, 2, math.nan], [1, 2, 3]), ([1, 2, 3], [1, 2])],
)
def test_rank_correlation_rejects(a, b):
    with pytest.raises((DomainError, DimensionError)):
        rank_correlation(a, b)


def test_report_alpha_only_omits_optional_columns():
    report = assemble_report(dmd(gen_polymap(50, 0)), gen_polymap(50, 1))
    rows = list(csv.reader(io.StringIO(report.to_csv())))
    assert rows[0] == ["index", "re_mu", "im_mu", "alpha"]
    assert len(rows) == 1 + report.metadata["rank"]


def test_report_with_analytic_and_dt_column_order(tmp_path):
    s = gen_oscillator_field(n=20, steps=200, seed=0)
    train, test = s.subset(np.arange(100)), s.subset(np.arange(100, 200))
    dec = dmd(train, rank=8)
    report = assemble_report(dec, test, amplitude_data=train, dt=s.dt)
    assert report.columns == ["index", "re_mu", "im_mu", "alpha", "beta", "freq_hz", "growth_rate"]
    report.write_json(tmp_path / "r.json")
    report.write_csv(tmp_path / "r.csv")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["metadata"]["dt"] == s.dt
    assert len(data["records"]) == 8
    assert list(CSV_COLUMNS).index("beta") < list(CSV_COLUMNS).index("freq_hz")


def test_report_with_analytic_pairs_records_matches():
    from koopacc.edmd import edmd, monomial_dictionary

    dec = edmd(gen_polymap(100, 0), monomial_dictionary(2, "per_coordinate_max", 3))
    report = assemble_report(dec, gen_polymap(100, 1), analytic=analytic_eigenpairs(), grid=31)
    assert report.columns == ["index", "re_mu", "im_mu", "alpha", "tau", "theta"]
    first = report.to_dict()["records"][0]
    assert first["matched_analytic"] == [0, 0]
    assert all(r.alpha >= 0 for r in report.records)
