import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopacc.dmd import (
    KoopmanDecomposition,
    RankWarning,
    dmd,
    eigenfunction_eval,
    eigenvalue_order,
    mode_amplitudes,
    predict,
    projection_coefficients,
    tdmd,
    to_continuous,
)
from koopacc.errors import DimensionError, DomainError, NumericalError
from koopacc.snapshots import SnapshotSet, add_noise, gen_linear, gen_polymap, linear_operator


def _linear(eigs, n=8, m=40, seed=0, **kw):
    a = linear_operator(eigs, n, seed)
    return a, gen_linear(a, m, seed, **kw)


def test_dmd_recovers_linear_spectrum():
    a, s = _linear([0.95, 0.6 + 0.3j, -0.4, 0.2])
    dec = dmd(s)
    direct = np.linalg.eigvals(s.images @ np.linalg.pinv(s.inputs))
    assert dec.rank == 8
    for mu in [0.95, 0.6 + 0.3j, 0.6 - 0.3j, -0.4, 0.2]:
        assert np.min(np.abs(dec.eigenvalues - mu)) <= 1e-10 * abs(mu)
        assert np.min(np.abs(direct - mu)) <= 1e-10 * abs(mu)
    assert np.all(np.abs(dec.eigenvalues[5:]) < 1e-12)


def test_dmd_modes_are_eigenvectors_of_operator():
    a, s = _linear([0.9, 0.5, 0.3])
    dec = dmd(s)
    for mu, v in zip(dec.eigenvalues, dec.modes.T):
        np.testing.assert_allclose(a @ v, mu * v, atol=1e-10)


def test_eigenfunctions_satisfy_eigen_relation_on_linear_data():
    _, s = _linear([0.9, 0.7 + 0.1j], n=5)
    dec = dmd(s)
    phi, phis = dec.eigenfunctions(s.inputs), dec.eigenfunctions(s.images)
    np.testing.assert_allclose(phis, dec.eigenvalues[:, None] * phi, atol=1e-10)


def test_eigenvalue_order_keeps_conjugates_adjacent():
    mu = np.array([0.5, 0.9 - 0.1j, 0.2, 0.9 + 0.1j, 1.0])
    got = mu[eigenvalue_order(mu)]
    np.testing.assert_array_equal(got, [1.0, 0.9 + 0.1j, 0.9 - 0.1j, 0.5, 0.2])


def test_explicit_rank_and_overlarge_rank():
    rng = np.random.default_rng(0)
    b = rng.standard_normal((6, 2))
    x = b @ rng.standard_normal((2, 30))
    s = SnapshotSet(x, 0.5 * x)
    assert dmd(s, rank=1).rank == 1
    with pytest.warns(RankWarning):
        dec = dmd(s, rank=5)
    assert dec.rank == 2
    assert dec.provenance["warnings"]


def test_rank_out_of_bounds():
    _, s = _linear([0.9], n=3, m=4)
    with pytest.raises(DimensionError):
        dmd(s, rank=10)


def test_zero_data_is_numerical_error():
    s = SnapshotSet(np.zeros((3, 4)), np.zeros((3, 4)))
    with pytest.raises(NumericalError):
        dmd(s)


def test_empty_training_rejected():
    with pytest.raises(DimensionError):
        dmd(SnapshotSet(np.zeros((2, 0)), np.zeros((2, 0))))


def test_tdmd_matches_dmd_on_clean_data():
    _, s = _linear([0.95, 0.8 + 0.2j, 0.3], n=10, m=50)
    np.testing.assert_allclose(
        np.sort_complex(tdmd(s).eigenvalues), np.sort_complex(dmd(s).eigenvalues), atol=1e-8
    )


def test_tdmd_is_less_biased_under_noise():
    a, clean = _linear([0.9, 0.5], n=2, m=2000, seed=3)
    noisy = add_noise(clean, 0.3, seed=1)
    err = lambda dec: np.max(np.abs(np.sort(dec.eigenvalues.real) - [0.5, 0.9]))  # noqa: E731
    assert err(tdmd(noisy, rank=2)) < err(dmd(noisy, rank=2))


def test_eigenfunction_eval_scalar_and_index():
    _, s = _linear([0.9, 0.5], n=4)
    dec = dmd(s)
    x = s.inputs[:, 0]
    assert isinstance(eigenfunction_eval(dec, 0, x), complex)
    with pytest.raises(IndexError):
        eigenfunction_eval(dec, 5, x)
    with pytest.raises(DimensionError):
        eigenfunction_eval(dec, 0, np.ones(3))


def test_to_continuous():
    entry = to_continuous(cmath.exp(complex(-0.1, 2 * math.pi * 1.5) * 0.05), 0.05)
    assert math.isclose(entry.frequency_hz, 1.5, rel_tol=1e-12)
    assert math.isclose(entry.growth_rate, -0.1, rel_tol=1e-12)
    with pytest.raises(DomainError):
        to_continuous(0.5, 0.0)
    with pytest.raises(NumericalError):
        to_continuous(0.0, 1.0)


@given(st.floats(0.05, 1.5), st.floats(-3.0, 3.0), st.floats(0.01, 1.0))
@settings(max_examples=50, deadline=None)
def test_to_continuous_round_trip(mag, angle, dt):
    mu = cmath.rect(mag, angle)
    lam = to_continuous(mu, dt).lam
    assert abs(cmath.exp(lam * dt) - mu) <= 1e-12 * max(1.0, mag)


def test_predict_reproduces_linear_trajectory():
    a, s = _linear([0.9, 0.6 + 0.2j], n=6, m=20, sequential=True, dt=0.1)
    dec = dmd(s)
    traj = predict(dec, s.inputs[:, 0], 10)
    np.testing.assert_allclose(traj.real, s.series[:, :11], atol=1e-9)


def test_mode_amplitudes_require_sequential():
    _, s = _linear([0.9, 0.5], n=4)
    with pytest.raises(DomainError):
        mode_amplitudes(dmd(s), s)


def test_mode_amplitudes_normalized():
    _, s = _linear([0.9, 0.5, 0.99], n=6, m=30, sequential=True, dt=0.1)
    beta = mode_amplitudes(dmd(s), s)
    assert beta.max() == 1.0 and np.all(beta >= 0)


def test_projection_coefficients_near_parallel():
    v = np.array([[1, 0, 0], [0, 1, 1], [0, 0, 1e-6]], dtype=float)
    c = projection_coefficients(v, np.array([1.0, 0.0, 1e-3]))
    np.testing.assert_allclose(c, [1.0, -1000.0, 1000.0], rtol=1e-6)


def test_decomposition_json_round_trip(tmp_path):
    train = gen_polymap(30, seed=0)
    dec = dmd(train)
    path = tmp_path / "d.json"
    dec.save(path)
    back = KoopmanDecomposition.load(path)
    np.testing.assert_array_equal(back.eigenvalues, dec.eigenvalues)
    x = np.random.default_rng(0).uniform(-1, 1, (2, 5))
    np.testing.assert_array_equal(back.eigenfunctions(x), dec.eigenfunctions(x))


def test_continuous_list():
    _, s = _linear([0.9, 0.5], n=2, m=10, sequential=True, dt=0.5)
    entries = dmd(s).continuous(0.5)
    assert len(entries) == 2
    assert math.isclose(entries[0].growth_rate, math.log(0.9) / 0.5, rel_tol=1e-9)
