import numpy as np
import pytest

from core.tensor import load_tensor, save_tensor
from core.tensor import tensor as T
from core.utils.errors import NonFiniteInputError, ShapeMismatchError, TensorFormatError


def _check_grad(build, shapes, numeric_grad, seed=0, tol=1e-4):
    rng = np.random.default_rng(seed)
    leaves = [T.parameter(rng.uniform(-1, 1, s)) for s in shapes]
    build(*leaves).backward()
    for leaf in leaves:
        numeric = numeric_grad(lambda: float(build(*[T.DiffTensor(p.value) for p in leaves]).value), leaf.value)
        err = np.max(np.abs(leaf.grad - numeric)) / max(1.0, np.max(np.abs(numeric)))
        assert err < tol


def test_matmul_matches_triple_loop(rng):
    A = rng.normal(size=(2, 3))
    B = rng.normal(size=(3, 2))
    expected = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(3):
                expected[i, j] += A[i, k] * B[k, j]
    assert np.allclose(T.matmul(A, B).value, expected, atol=1e-12, rtol=0)
    assert np.array_equal(T.matmul(np.eye(3), B).value, B)
    assert np.array_equal(T.matmul(np.zeros((2, 3)), B).value, np.zeros((2, 2)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeMismatchError, match=r"\(2, 3\).*\(2, 2\)"):
        T.matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_softmax_values():
    assert np.allclose(T.softmax(np.zeros(3)).value, np.full(3, 1 / 3))
    big = T.softmax(np.array([1000.0, 0.0])).value
    assert np.all(np.isfinite(big))
    assert np.allclose(big, [1.0, 0.0])
    x = np.array([1.0, 2.0, 3.0])
    assert np.allclose(T.softmax(x).value, np.exp(x) / np.exp(x).sum(), atol=1e-12, rtol=0)


def test_softmax_masks_neg_inf_and_rejects_nan():
    out = T.softmax(np.array([0.0, -np.inf, 0.0])).value
    assert np.allclose(out, [0.5, 0.0, 0.5])
    with pytest.raises(NonFiniteInputError):
        T.softmax(np.array([0.0, np.nan]))
    with pytest.raises(NonFiniteInputError):
        T.softmax(np.array([0.0, np.inf]))


def test_backward_simple_roots(rng):
    x = T.parameter(rng.normal(size=(3, 4)))
    T.sum(x).backward()
    assert np.array_equal(x.grad, np.ones((3, 4)))
    x.zero_grad()
    T.sum(T.mul(x, x)).backward()
    assert np.allclose(x.grad, 2 * x.value)


def test_backward_accumulates_without_zero_grad(rng):
    x = T.parameter(rng.normal(size=3))
    T.sum(x).backward()
    T.sum(x).backward()
    assert np.array_equal(x.grad, np.full(3, 2.0))


def test_backward_needs_scalar_root():
    x = T.parameter(np.ones(3))
    with pytest.raises(ShapeMismatchError):
        T.mul(x, 2.0).backward()


def test_shared_subgraph_gradient(rng):
    x = T.parameter(rng.normal(size=4))
    y = T.exp(x)
    T.sum(T.add(T.mul(y, y), y)).backward()
    e = np.exp(x.value)
    assert np.allclose(x.grad, 2 * e * e + e)


@pytest.mark.parametrize("build,shapes", [
    (lambda a, b: T.sum(T.mul(T.matmul(a, b), T.matmul(a, b))), [(3, 4), (4, 2)]),
    (lambda a, b: T.sum(T.div(a, T.add(T.exp(b), 1.0))), [(3, 2), (2,)]),
    (lambda a: T.sum(T.mul(T.softmax(a, axis=-1), np.arange(5.0))), [(2, 5)]),
    (lambda a, s: T.sum(T.mul(T.rms_norm(a, s), np.linspace(-1, 1, 6))), [(3, 6), (6,)]),
    (lambda a: T.sum(T.mul(T.silu(a), T.sigmoid(a))), [(4, 3)]),
    (lambda a: T.sum(T.softplus(T.mul(a, 3.0))), [(5,)]),
    (lambda a: T.mean(T.log(T.add(T.power(a, 2), 1.0))), [(3, 3)]),
    (lambda a: T.sum(T.sqrt(T.add(T.mul(a, a), 0.5))), [(4,)]),
    (lambda a: T.sum(T.mul(T.transpose(T.reshape(a, (2, 3, 2)), (2, 0, 1)), np.arange(12.0).reshape(2, 2, 3))),
     [(6, 2)]),
    (lambda a, b: T.sum(T.mul(T.concat([a, b], axis=0), np.arange(15.0).reshape(5, 3))), [(2, 3), (3, 3)]),
    (lambda a: T.sum(T.mul(T.take(a, [2, 0, 2, 1], axis=0), np.arange(8.0).reshape(4, 2))), [(3, 2)]),
    (lambda a: T.sum(T.mul(T.split(a, [1, 3], axis=-1)[1], np.arange(9.0).reshape(3, 3))), [(3, 4)]),
    (lambda a: T.sum(T.mul(T.scan(a, axis=0), np.arange(6.0).reshape(3, 2))), [(3, 2)]),
    (lambda a: T.sum(T.mul(T.minimum(a, 0.3), np.arange(1.0, 7.0))), [(6,)]),
    (lambda a: T.sum(T.mul(T.window_gather(a, 1), np.arange(18.0).reshape(3, 3, 2))), [(3, 2)]),
    (lambda a: T.sum(T.mul(T.broadcast_to(a, (3, 4)), np.arange(12.0).reshape(3, 4))), [(1, 4)]),
])
def test_gradients_match_finite_differences(build, shapes, numeric_grad):
    _check_grad(build, shapes, numeric_grad)


def test_linear_scan_gradient(numeric_grad):
    def build(a, b):
        h = T.linear_scan(T.sigmoid(a), b, axis=0)
        return T.sum(T.mul(h, np.linspace(-1, 1, 14).reshape(7, 2)))
    _check_grad(build, [(7, 2), (7, 2)], numeric_grad)


def test_linear_scan_broadcast_decay_gradient(numeric_grad):
    def build(a, b):
        h = T.linear_scan(T.sigmoid(a), b, axis=0)
        return T.sum(T.mul(h, h))
    _check_grad(build, [(5, 1), (5, 3)], numeric_grad)


def test_rotate_pairs_gradient(numeric_grad, rng):
    angles = np.repeat(rng.uniform(-3, 3, (4, 2)), 2, axis=-1)

    def build(x):
        return T.sum(T.mul(T.rotate_pairs(x, np.cos(angles), np.sin(angles)), np.arange(16.0).reshape(4, 4)))
    _check_grad(build, [(4, 4)], numeric_grad)


def test_linear_scan_matches_sequential_loop(rng):
    a = rng.uniform(0, 1, (4096, 3))
    b = rng.normal(size=(4096, 3))
    h = np.zeros(3)
    expected = np.empty_like(b)
    for t in range(len(b)):
        h = a[t] * h + b[t]
        expected[t] = h
    assert np.allclose(T.linear_scan(a, b).value, expected, atol=1e-10, rtol=0)


def test_scan_equals_prefix_sum_loop(rng):
    x = rng.normal(size=(9, 2))
    expected = np.zeros_like(x)
    running = np.zeros(2)
    for t in range(9):
        running = running + x[t]
        expected[t] = running
    assert np.array_equal(T.scan(x, axis=0).value, expected)


def test_rms_norm_is_unit_rms(rng):
    y = T.rms_norm(rng.normal(size=(5, 12)) * 7.0).value
    assert np.allclose(np.sqrt(np.mean(y ** 2, axis=-1)), 1.0, atol=1e-10, rtol=0)


def test_reshape_round_trip(rng):
    x = rng.normal(size=(2, 3, 4))
    assert np.array_equal(T.reshape(T.reshape(x, (6, 4)), (2, 3, 4)).value, x)


def test_window_gather_zero_pads_edges():
    x = np.arange(1.0, 5.0).reshape(4, 1)
    out = T.window_gather(x, 1).value[..., 0]
    assert np.array_equal(out, [[0, 1, 2], [1, 2, 3], [2, 3, 4], [3, 4, 0]])


def test_no_grad_builds_no_tape():
    x = T.parameter(np.ones(3))
    with T.no_grad():
        y = T.mul(x, 2.0)
    assert not y.requires_grad
    assert y.is_leaf
    assert T.grad_enabled()


def test_precision_context():
    with T.precision(np.float32):
        y = T.add(np.ones(2), 1.0)
    assert y.value.dtype == np.float32
    assert T.DiffTensor(np.ones(2)).value.dtype == np.float64


def test_tensor_file_round_trip_and_layout(tmp_path, rng):
    x = rng.normal(size=(3, 2, 4))
    path = tmp_path / "x.cht"
    save_tensor(path, x)
    raw = path.read_bytes()
    assert raw[:4] == b"CHT1"
    assert int.from_bytes(raw[4:8], "little") == 3
    assert len(raw) == 4 + 4 + 3 * 8 + x.size * 8
    assert np.array_equal(load_tensor(path), x)


def test_tensor_file_rejects_bad_input(tmp_path):
    with pytest.raises(TensorFormatError):
        save_tensor(tmp_path / "c.cht", np.ones(3, dtype=complex))
    with pytest.raises(TensorFormatError):
        save_tensor(tmp_path / "e.cht", np.ones((0, 3)))
    bad = tmp_path / "bad.cht"
    bad.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(TensorFormatError, match="magic"):
        load_tensor(bad)
    save_tensor(tmp_path / "ok.cht", np.ones((2, 2)))
    truncated = tmp_path / "short.cht"
    truncated.write_bytes((tmp_path / "ok.cht").read_bytes()[:-8])
    with pytest.raises(TensorFormatError):
        load_tensor(truncated)
    trailing = tmp_path / "long.cht"
    trailing.write_bytes((tmp_path / "ok.cht").read_bytes() + b"\0")
    with pytest.raises(TensorFormatError):
        load_tensor(trailing)
