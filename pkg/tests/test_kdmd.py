import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopacc.dmd import KoopmanDecomposition, RankWarning, dmd
from koopacc.edmd import edmd, monomial_dictionary
from koopacc.errors import DimensionError, DomainError, NumericalError, ParseError
from koopacc.kdmd import Kernel, gram_matrices, kdmd, kernel_eval, parse_kernel
from koopacc.snapshots import SnapshotSet, gen_linear, gen_polymap, linear_operator, split


def _polymap_train(m=100, seed=0):
    return split(gen_polymap(2 * m, seed=seed), m, m)[0]


def test_kernel_values():
    x, y = np.array([0.5, -1.0]), np.array([2.0, 0.25])
    ip = x @ y
    dist = np.linalg.norm(x - y)
    assert kernel_eval(Kernel.polynomial(3), x, y) == pytest.approx((1 + ip) ** 3)
    assert kernel_eval(Kernel.exponential(), x, y) == pytest.approx(np.exp(ip))
    assert kernel_eval(Kernel.gaussian(2.0), x, y) == pytest.approx(np.exp(-(dist**2) / 4.0))
    assert kernel_eval(Kernel.laplacian(0.5), x, y) == pytest.approx(np.exp(-dist / 0.5))
    assert kernel_eval(Kernel.linear(), x, y) == pytest.approx(ip)


@pytest.mark.parametrize("kernel", [Kernel.gaussian(1.0), Kernel.laplacian(1.0)])
def test_radial_kernels_are_one_on_diagonal(kernel):
    x = np.random.default_rng(0).uniform(-1, 1, (3, 10))
    np.testing.assert_array_equal(np.diag(kernel.matrix(x, x)), np.ones(10))


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_kernel_matrices_symmetric(seed):
    x = np.random.default_rng(seed).uniform(-1, 1, (2, 8))
    for k in (Kernel.polynomial(5), Kernel.exponential(), Kernel.gaussian(1.0), Kernel.laplacian(1.0)):
        g = k.matrix(x, x)
        np.testing.assert_allclose(g, g.T, rtol=1e-14)


def test_kernel_validation():
    with pytest.raises(DomainError):
        Kernel("polynomial")
    with pytest.raises(DomainError):
        Kernel.gaussian(0.0)
    with pytest.raises(DomainError):
        Kernel("cosine")


def test_exponential_overflow_located():
    x = np.full((1, 3), 30.0)
    with pytest.raises(NumericalError, match=r"\(0, 0\)"):
        Kernel.exponential().matrix(x, x)


@pytest.mark.parametrize("spec", ["poly:5", "exp", "gauss:1.0", "laplace:0.5", "linear"])
def test_parse_kernel_round_trip(spec):
    assert parse_kernel(spec).to_spec() == spec


@pytest.mark.parametrize("spec", ["gauss", "poly", "poly:x", "rbf:1", "exp:2"])
def test_parse_kernel_rejects(spec):
    with pytest.raises(ParseError):
        parse_kernel(spec)


def test_gram_shapes():
    train = _polymap_train(20)
    g = gram_matrices(train, Kernel.gaussian(1.0))
    assert g.G_hat.shape == g.A_hat.shape == (20, 20)
    np.testing.assert_array_equal(g.G_hat, g.G_hat.T)


def test_linear_kernel_equals_dmd():
    a = linear_operator([0.9, 0.5 + 0.3j, -0.2], 6, seed=2)
    s = gen_linear(a, 40, seed=2)
    np.testing.assert_allclose(kdmd(s, Kernel.linear()).eigenvalues, dmd(s).eigenvalues, atol=1e-10)


@pytest.mark.parametrize("degree", [2, 5])
def test_polynomial_kernel_equals_total_degree_edmd(degree):
    train = _polymap_train()
    k = kdmd(train, Kernel.polynomial(degree))
    e = edmd(train, monomial_dictionary(2, "total_degree", degree))
    assert k.rank == e.rank
    np.testing.assert_allclose(k.eigenvalues, e.eigenvalues, atol=1e-8)


def test_auto_rank_polynomial_kernel_is_feature_dimension():
    assert kdmd(_polymap_train(), Kernel.polynomial(5)).rank == 21


def test_explicit_rank_above_gram_rank_is_reduced():
    with pytest.warns(RankWarning):
        dec = kdmd(_polymap_train(), Kernel.polynomial(2), rank=30)
    assert dec.rank == 6
    assert dec.provenance["warnings"]


def test_rank_above_m_rejected():
    with pytest.raises(DimensionError):
        kdmd(_polymap_train(10), Kernel.gaussian(1.0), rank=11)


def test_zero_gram_is_numerical_error():
    s = SnapshotSet(np.zeros((2, 4)), np.zeros((2, 4)))
    with pytest.raises(NumericalError):
        kdmd(s, Kernel.linear())


def test_kernel_modes_reconstruct_state():
    train = _polymap_train()
    dec = kdmd(train, Kernel.polynomial(5))
    recon = dec.modes @ dec.eigenfunctions(train.inputs)
    np.testing.assert_allclose(recon.real, train.inputs, atol=1e-8)


def test_kdmd_json_round_trip(tmp_path):
    dec = kdmd(_polymap_train(30), Kernel.gaussian(1.0))
    path = tmp_path / "k.json"
    dec.save(path)
    back = KoopmanDecomposition.load(path)
    x = np.random.default_rng(1).uniform(-1, 1, (2, 4))
    np.testing.assert_allclose(back.eigenfunctions(x), dec.eigenfunctions(x), rtol=0, atol=1e-12)
