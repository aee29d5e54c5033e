import math

import numpy as np
import pytest

from mtlab import numerics as nm
from mtlab.errors import EmptyBatch, NoTape, NotScalar, ShapeMismatch

RNG = np.random.default_rng(1234)


def randt(*shape, requires_grad=True):
    return nm.Tensor(RNG.standard_normal(shape), requires_grad=requires_grad, dtype=np.float64)


def fd_check(make_loss, tensors, step=1e-5, tol=1e-4, samples=10):
    """Central finite differences against tape gradients, elementwise."""
    for t in tensors:
        t.zero_grad()
    with nm.Tape():
        nm.backward(make_loss())
    worst = 0.0
    for t in tensors:
        grad = t.grad.reshape(-1)
        flat = t.data.reshape(-1)
        for i in RNG.choice(flat.size, size=min(samples, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + step
            up = float(make_loss().data)
            flat[i] = orig - step
            down = float(make_loss().data)
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            rel = abs(grad[i] - numeric) / (abs(grad[i]) + 1e-8)
            worst = max(worst, rel)
    assert worst < tol, f"worst relative error {worst:.3e}"
    return worst


def test_softmax_of_zero_row_is_uniform():
    y = nm.softmax(nm.Tensor(np.zeros((1, 4))))
    assert np.allclose(y.data, 0.25)


def test_matmul_identity():
    a = RNG.standard_normal((3, 3))
    out = nm.matmul(nm.Tensor(np.eye(3), dtype=np.float64), nm.Tensor(a, dtype=np.float64))
    assert np.allclose(out.data, a)


def test_cross_entropy_closed_form():
    loss = nm.cross_entropy(nm.Tensor([[0.0, 0.0]]), np.array([0]))
    assert float(loss.data) == pytest.approx(math.log(2), abs=1e-6)


def test_backward_of_sum_is_ones():
    x = randt(2, 2)
    with nm.Tape():
        loss = nm.total(x)
        nm.backward(loss)
    assert np.array_equal(x.grad, np.ones((2, 2)))


def test_backward_of_sum_of_squares_is_2x():
    x = randt(3, 2)
    with nm.Tape():
        nm.backward(nm.total(nm.mul(x, x)))
    assert np.allclose(x.grad, 2 * x.data, atol=1e-12)


def test_random_three_op_graph_matches_finite_differences():
    a, w = randt(4, 3), randt(3, 5)
    fd_check(lambda: nm.total(nm.relu(nm.matmul(a, w))), [a, w])


@pytest.mark.parametrize(
    "name",
    ["add", "mul", "scale", "matmul", "relu", "softmax", "layer_norm",
     "embedding", "transpose", "reshape", "cross_entropy", "cross_entropy_smoothed"],
)
def test_primitive_gradients(name):
    if name == "add":
        a, b = randt(3, 4), randt(3, 4)
        fd_check(lambda: nm.total(nm.mul(nm.add(a, b), b)), [a, b])
    elif name == "mul":
        a, b = randt(3, 4), randt(1, 4)  # exercises broadcasting too
        fd_check(lambda: nm.total(nm.mul(a, b)), [a, b])
    elif name == "scale":
        a = randt(3, 4)
        fd_check(lambda: nm.total(nm.scale(a, -1.7)), [a])
    elif name == "matmul":
        a, b = randt(2, 3, 4), randt(2, 4, 5)
        fd_check(lambda: nm.total(nm.matmul(a, b)), [a, b])
    elif name == "relu":
        a = randt(4, 4)
        fd_check(lambda: nm.total(nm.relu(a)), [a])
    elif name == "softmax":
        a, m = randt(3, 5), randt(3, 5, requires_grad=False)
        fd_check(lambda: nm.total(nm.mul(nm.softmax(a), m)), [a])
    elif name == "layer_norm":
        a, m = randt(3, 6), randt(3, 6, requires_grad=False)
        fd_check(lambda: nm.total(nm.mul(nm.layer_norm(a), m)), [a])
    elif name == "embedding":
        table = randt(7, 4)
        ids = np.array([[0, 3, 3], [6, 1, 0]])
        m = randt(2, 3, 4, requires_grad=False)
        fd_check(lambda: nm.total(nm.mul(nm.embedding_lookup(table, ids), m)), [table])
    elif name == "transpose":
        a = randt(3, 4)
        fd_check(lambda: nm.total(nm.mul(nm.transpose(a, (1, 0)), nm.transpose(a, (1, 0)))), [a])
    elif name == "reshape":
        a, m = randt(3, 4), randt(12, requires_grad=False)
        fd_check(lambda: nm.total(nm.mul(nm.reshape(a, (12,)), m)), [a])
    elif name == "cross_entropy":
        logits = randt(6, 9)
        targets = np.array([1, 4, 0, 0, 8, 2])
        fd_check(lambda: nm.cross_entropy(logits, targets, ignore_id=0), [logits])
    else:
        logits = randt(5, 7)
        targets = np.array([1, 4, 6, 2, 3])
        fd_check(lambda: nm.cross_entropy(logits, targets, label_smoothing=0.2), [logits])


def test_dropout_gradient_and_scaling():
    a = randt(50, 20)
    rng = np.random.default_rng(7)
    with nm.Tape():
        out = nm.dropout(a, 0.3, rng)
        nm.backward(nm.total(out))
    mask = out.data / a.data  # elementwise either 0 or 1/(1-p)
    kept = mask[~np.isnan(mask)]
    assert set(np.round(np.unique(kept), 6)) <= {0.0, round(1 / 0.7, 6)}
    assert np.allclose(np.nan_to_num(a.grad), np.nan_to_num(mask), equal_nan=True)


def test_softmax_rows_sum_to_one():
    x = nm.Tensor(RNG.standard_normal((8, 13)) * 5)
    rows = nm.softmax(x).data.sum(axis=-1)
    assert np.abs(rows - 1.0).max() < 1e-6


def test_layer_norm_rows_standardized():
    x = nm.Tensor(RNG.standard_normal((6, 32)) * 3 + 2, dtype=np.float64)
    y = nm.layer_norm(x).data
    assert np.abs(y.mean(axis=-1)).max() < 1e-6
    assert np.abs(y.var(axis=-1) - 1.0).max() < 1e-5


def test_backward_twice_accumulates_exactly_double():
    x = randt(4, 3)
    with nm.Tape():
        loss = nm.total(nm.mul(x, x))
        nm.backward(loss)
        once = x.grad.copy()
        nm.backward(loss)
    assert np.array_equal(x.grad, 2 * once)


def test_not_scalar():
    x = randt(2, 2)
    with nm.Tape():
        y = nm.mul(x, x)
        with pytest.raises(NotScalar):
            nm.backward(y)


def test_no_tape():
    x = randt(2, 2)
    loss = nm.total(x)  # no tape active
    with pytest.raises(NoTape):
        nm.backward(loss)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nm.add(randt(2, 3), randt(4, 5))
    with pytest.raises(ShapeMismatch):
        nm.matmul(randt(2, 3), randt(4, 5))
    with pytest.raises(ShapeMismatch):
        nm.cross_entropy(randt(2, 3), np.array([0, 1, 2]))


def test_cross_entropy_all_ignored():
    with pytest.raises(EmptyBatch):
        nm.cross_entropy(randt(3, 4), np.array([0, 0, 0]), ignore_id=0)


def test_parallel_matmul_path_agrees_with_reference():
    a = RNG.standard_normal((64, 40)).astype(np.float32)
    b = RNG.standard_normal((40, 24)).astype(np.float32)
    nm.set_num_threads(1)
    ref = nm.matmul(nm.Tensor(a), nm.Tensor(b)).data
    try:
        nm.set_num_threads(4)
        par = nm.matmul(nm.Tensor(a), nm.Tensor(b)).data
    finally:
        nm.set_num_threads(1)
    rel = np.abs(par - ref) / (np.abs(ref) + 1e-8)
    assert rel.max() < 1e-6


def test_untracked_inputs_record_nothing():
    a = nm.Tensor(np.ones((2, 2)))
    with nm.Tape() as tape:
        nm.add(a, a)
    assert tape.ops == []
