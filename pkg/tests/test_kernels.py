"""Cross-checks between the compiled kernels and the NumPy fallback."""

import numpy as np
import pytest

import taiyan.kernels as kernels
from taiyan.kernels import fallback
from tests.conftest import make_rng

ext = pytest.importorskip("taiyan.kernels._ext")


def test_backend_reported():
    assert kernels.BACKEND in ("ext", "numpy")
    if kernels.BACKEND == "ext":
        assert kernels.attn_probs is ext.attn_probs


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_attn_probs_parity(dtype):
    rng = make_rng(10)
    scores = rng.standard_normal((2, 3, 17, 17)).astype(dtype)
    slopes = np.asarray([0.5, 0.25, 0.125], dtype=np.float64)
    a = ext.attn_probs(np.ascontiguousarray(scores), slopes)
    b = fallback.attn_probs(scores, slopes)
    assert np.asarray(a).dtype == np.asarray(b).dtype
    assert np.allclose(a, b, atol=1e-6)


def test_attn_probs_rows_are_distributions():
    rng = make_rng(11)
    scores = rng.standard_normal((1, 2, 9, 9)).astype(np.float32)
    slopes = np.asarray([0.5, 0.25], dtype=np.float64)
    for impl in (ext, fallback):
        probs = np.asarray(impl.attn_probs(np.ascontiguousarray(scores), slopes))
        assert np.allclose(probs.sum(axis=-1), 1.0, atol=1e-5)
        upper = np.triu_indices(9, k=1)
        assert np.all(probs[:, :, upper[0], upper[1]] == 0.0)
        assert np.all(probs >= 0.0)


def test_attn_probs_grad_parity():
    rng = make_rng(12)
    scores = rng.standard_normal((2, 2, 8, 8)).astype(np.float32)
    slopes = np.asarray([0.5, 0.25], dtype=np.float64)
    probs = np.ascontiguousarray(fallback.attn_probs(scores, slopes))
    dprobs = np.ascontiguousarray(rng.standard_normal(probs.shape).astype(np.float32))
    a = ext.attn_probs_grad(probs, dprobs)
    b = fallback.attn_probs_grad(probs, dprobs)
    assert np.allclose(a, b, atol=1e-6)
    # zero prob rows upstream of the mask contribute nothing
    upper = np.triu_indices(8, k=1)
    assert np.allclose(np.asarray(a)[:, :, upper[0], upper[1]], 0.0, atol=1e-7)


def test_attn_probs_grad_finite_difference():
    rng = make_rng(13)
    scores = rng.standard_normal((1, 1, 5, 5)).astype(np.float64)
    slopes = np.asarray([0.5], dtype=np.float64)
    w = rng.standard_normal((1, 1, 5, 5))
    probs = fallback.attn_probs(scores, slopes)
    got = fallback.attn_probs_grad(probs, w)
    eps = 1e-6
    for i in range(5):
        for j in range(i + 1):
            bumped = scores.copy()
            bumped[0, 0, i, j] += eps
            f1 = float(np.sum(fallback.attn_probs(bumped, slopes) * w))
            bumped[0, 0, i, j] -= 2 * eps
            f0 = float(np.sum(fallback.attn_probs(bumped, slopes) * w))
            assert abs((f1 - f0) / (2 * eps) - got[0, 0, i, j]) < 1e-5


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_swiglu_parity(dtype):
    rng = make_rng(14)
    a = rng.standard_normal((6, 10)).astype(dtype) * 30  # exercise both sigmoid branches
    b = rng.standard_normal((6, 10)).astype(dtype)
    ga = ext.swiglu_gate(a, b)
    gb = fallback.swiglu_gate(a, b)
    assert np.asarray(ga).shape == a.shape
    assert np.allclose(ga, gb, atol=1e-6)
    assert np.all(np.isfinite(np.asarray(ga)))


def test_swiglu_grad_parity_and_fd():
    rng = make_rng(15)
    a = rng.standard_normal((4, 7)).astype(np.float64)
    b = rng.standard_normal((4, 7)).astype(np.float64)
    dout = rng.standard_normal((4, 7)).astype(np.float64)
    da_e, db_e = ext.swiglu_gate_grad(a, b, dout)
    da_f, db_f = fallback.swiglu_gate_grad(a, b, dout)
    assert np.allclose(da_e, da_f, atol=1e-9)
    assert np.allclose(db_e, db_f, atol=1e-9)
    eps = 1e-7
    f = lambda x, y: float(np.sum(fallback.swiglu_gate(x, y) * dout))
    num_da = (f(a + eps, b) - f(a - eps, b)) / (2 * eps)
    assert abs(num_da - float(np.sum(da_f))) < 1e-5
    num_db = (f(a, b + eps) - f(a, b - eps)) / (2 * eps)
    assert abs(num_db - float(np.sum(db_f))) < 1e-5


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_softmax_xent_parity(dtype):
    rng = make_rng(16)
    logits = np.ascontiguousarray(rng.standard_normal((12, 9)).astype(dtype))
    targets = np.ascontiguousarray(rng.integers(0, 9, size=12))
    nll_e, g_e = ext.softmax_xent(logits, targets)
    nll_f, g_f = fallback.softmax_xent(logits, targets)
    assert np.asarray(nll_e).dtype == np.float64
    assert np.allclose(nll_e, nll_f, atol=1e-6)
    assert np.allclose(g_e, g_f, atol=1e-6)
    nll2, g2 = ext.softmax_xent(logits, targets, want_grad=False)
    assert g2 is None and np.array_equal(np.asarray(nll2), np.asarray(nll_e))


def test_softmax_xent_values():
    logits = np.asarray([[0.0, 0.0, 0.0]], dtype=np.float64)
    targets = np.asarray([1])
    for impl in (ext, fallback):
        nll, grad = impl.softmax_xent(logits, targets)
        assert abs(float(np.asarray(nll)[0]) - np.log(3.0)) < 1e-12
        expect = np.asarray([1 / 3, 1 / 3 - 1, 1 / 3])
        assert np.allclose(grad, expect, atol=1e-12)
    # gradient rows sum to ~0: softmax mass minus one-hot mass
    rng = make_rng(17)
    logits = np.ascontiguousarray(rng.standard_normal((5, 6)))
    targets = np.ascontiguousarray(rng.integers(0, 6, size=5))
    _, grad = ext.softmax_xent(logits, targets)
    assert np.allclose(np.asarray(grad).sum(axis=1), 0.0, atol=1e-9)


def _cp(s: str) -> np.ndarray:
    return np.asarray([ord(c) for c in s], dtype=np.int32)


def test_jaro_winkler_oracles():
    for impl in (ext, fallback):
        jw = impl.jaro_winkler
        assert abs(jw(_cp("MARTHA"), _cp("MARHTA")) - 0.9611111111111111) < 1e-12
        assert jw(_cp("abc"), _cp("abc")) == 1.0
        assert jw(_cp(""), _cp("")) == 1.0
        assert jw(_cp("a"), _cp("")) == 0.0
        assert jw(_cp("abc"), _cp("xyz")) == 0.0


def test_jaro_winkler_parity_random():
    rng = make_rng(18)
    for _ in range(300):
        u = np.ascontiguousarray(rng.integers(0x4E00, 0x4E10, size=rng.integers(0, 12)), dtype=np.int32)
        v = np.ascontiguousarray(rng.integers(0x4E00, 0x4E10, size=rng.integers(0, 12)), dtype=np.int32)
        assert abs(ext.jaro_winkler(u, v) - fallback.jaro_winkler(u, v)) < 1e-12


def test_jaro_winkler_symmetry():
    rng = make_rng(19)
    for impl in (ext, fallback):
        for _ in range(50):
            u = np.ascontiguousarray(rng.integers(65, 70, size=rng.integers(1, 9)), dtype=np.int32)
            v = np.ascontiguousarray(rng.integers(65, 70, size=rng.integers(1, 9)), dtype=np.int32)
            assert abs(impl.jaro_winkler(u, v) - impl.jaro_winkler(v, u)) < 1e-12
