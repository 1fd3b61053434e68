"""Tensor engine, PRNG, Adam and checkpoint tests."""

import json
import math

import numpy as np
import pytest

from mwpgen import numerics as nm
from conftest import finite_difference_check


# ---------------------------------------------------------------------------
# forward anchors


def test_matmul_hand_arithmetic():
    out = nm.matmul(nm.Tensor([[1, 2], [3, 4]]), nm.Tensor([[1], [1]]))
    assert out.data.tolist() == [[3], [7]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(nm.ShapeError, match=r"\(1, 2\).*\(3, 1\)"):
        nm.matmul(nm.Tensor([[1, 2]]), nm.Tensor([[1], [2], [3]]))


def test_sigmoid_tanh_fixed_points():
    assert nm.sigmoid(nm.Tensor([0.0])).item() == 0.5
    assert nm.tanh(nm.Tensor([0.0])).item() == 0.0


def test_softmax_symmetry():
    out = nm.softmax(nm.Tensor([[0.0, 0.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    out = nm.softmax(nm.Tensor(rng.normal(size=(7, 11)) * 10))
    assert np.all(out.data >= 0)
    assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-9)


def test_softmax_stable_for_large_inputs():
    out = nm.softmax(nm.Tensor([[1000.0, 1000.0, -1000.0]]))
    assert np.all(np.isfinite(out.data))
    assert np.allclose(out.data.sum(axis=1), 1.0)


def test_sigmoid_tanh_stable_for_large_inputs():
    x = nm.Tensor([[710.0, -710.0]])
    assert np.all(np.isfinite(nm.sigmoid(x).data))
    assert np.all(np.isfinite(nm.tanh(x).data))


def test_mean_rows_of_identical_rows_is_that_row():
    row = np.arange(5.0)
    out = nm.mean_rows(nm.Tensor(np.tile(row, (4, 1))))
    assert np.array_equal(out.data, row.reshape(1, -1))


def test_vectors_become_row_matrices():
    assert nm.Tensor([1.0, 2.0]).shape == (1, 2)
    assert nm.Tensor(3.0).shape == (1, 1)


# ---------------------------------------------------------------------------
# backward


def test_product_rule():
    x = nm.Parameter([[2.0]], "x")
    y = nm.Parameter([[3.0]], "y")
    with nm.Tape() as tape:
        grads = nm.backward(nm.mul(x, y), tape)
    assert grads[id(x)][0, 0] == 3.0
    assert grads[id(y)][0, 0] == 2.0


def test_sigmoid_derivative_at_zero():
    x = nm.Parameter([[0.0]], "x")
    with nm.Tape() as tape:
        grads = nm.backward(nm.sigmoid(x), tape)
    assert grads[id(x)][0, 0] == pytest.approx(0.25, abs=1e-15)


def test_backward_requires_scalar_loss():
    x = nm.Parameter([[1.0, 2.0]], "x")
    with nm.Tape() as tape:
        out = nm.scale(x, 2.0)
        with pytest.raises(nm.ContractError):
            nm.backward(out, tape)


def test_backward_on_empty_tape_rejected():
    with nm.Tape() as tape:
        with pytest.raises(nm.ContractError):
            nm.backward(nm.Tensor([[1.0]]), tape)


def test_nested_tapes_rejected():
    with nm.Tape():
        with pytest.raises(nm.ContractError):
            with nm.Tape():
                pass


def test_three_layer_composite_finite_difference():
    rng = np.random.default_rng(1)
    params = {
        "w1": nm.Parameter(rng.normal(size=(4, 5)), "w1"),
        "w2": nm.Parameter(rng.normal(size=(5, 3)), "w2"),
        "w3": nm.Parameter(rng.normal(size=(3, 1)), "w3"),
    }
    x = nm.Tensor(rng.normal(size=(2, 4)))

    def loss_fn():
        h1 = nm.tanh(nm.matmul(x, params["w1"]))
        h2 = nm.sigmoid(nm.matmul(h1, params["w2"]))
        return nm.sum_all(nm.matmul(h2, params["w3"]))

    finite_difference_check(params, loss_fn)


@pytest.mark.parametrize("seed", range(5))
def test_every_op_finite_difference_random_shapes(seed):
    """One composite touching every differentiable op, 5 shape draws."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    d = int(rng.integers(2, 6))
    params = {
        "a": nm.Parameter(rng.normal(size=(n, d)), "a"),
        "b": nm.Parameter(rng.normal(size=(n, d)), "b"),
        "w": nm.Parameter(rng.normal(size=(d, d)), "w"),
        "emb": nm.Parameter(rng.normal(size=(6, d)), "emb"),
    }
    ids = [int(i) for i in rng.integers(0, 6, size=n)]

    def loss_fn():
        a, b, w, emb = params["a"], params["b"], params["w"], params["emb"]
        e = nm.embed_lookup(emb, ids)
        s = nm.add(nm.mul(a, b), nm.sub(e, b))
        s = nm.matmul(s, w)
        s = nm.concat([nm.sigmoid(s), nm.tanh(s)], axis=1)
        s = nm.softmax(s)
        s = nm.slice_(s, cols=slice(0, d))
        s = nm.exp(nm.scale(s, 0.1))
        s = nm.log(nm.add_const(s, 1.0))
        s = nm.transpose(nm.mean_rows(s))
        return nm.sum_all(s)

    finite_difference_check(params, loss_fn, seed=seed)


def test_broadcast_add_gradient_reduces():
    a = nm.Parameter(np.ones((3, 4)), "a")
    b = nm.Parameter(np.ones((1, 4)), "b")
    with nm.Tape() as tape:
        grads = nm.backward(nm.sum_all(nm.add(a, b)), tape)
    assert grads[id(b)].shape == (1, 4)
    assert np.array_equal(grads[id(b)], np.full((1, 4), 3.0))


def test_ops_without_tape_do_not_record():
    x = nm.Parameter([[1.0]], "x")
    out = nm.tanh(x)
    assert out._backprop is None and not out.requires_grad


def test_log_of_nonpositive_rejected():
    with pytest.raises(FloatingPointError):
        nm.log(nm.Tensor([[0.0]]))


# ---------------------------------------------------------------------------
# PRNG


def test_rng_same_seed_bitwise_identical():
    a = nm.Xoshiro256(42).normal_array((3, 4), 0.02)
    b = nm.Xoshiro256(42).normal_array((3, 4), 0.02)
    assert np.array_equal(a, b)


def test_rng_different_seeds_differ():
    a = nm.Xoshiro256(1).normal_array((3, 4))
    b = nm.Xoshiro256(2).normal_array((3, 4))
    assert not np.array_equal(a, b)


def test_init_normal_std_statistical():
    samples = nm.init_normal((100_000,), std=0.02, seed=9).data
    assert 0.019 <= samples.std() <= 0.021
    assert abs(samples.mean()) < 0.001


def test_init_normal_rejects_nonpositive_std():
    with pytest.raises(ValueError):
        nm.init_normal((2, 2), std=0.0, seed=0)


def test_rng_uniform_in_unit_interval():
    r = nm.Xoshiro256(5)
    values = [r.random() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    assert 0.4 < sum(values) / len(values) < 0.6


def test_randint_inclusive_bounds():
    r = nm.Xoshiro256(3)
    values = {r.randint(2, 4) for _ in range(200)}
    assert values == {2, 3, 4}


def test_shuffle_is_permutation():
    r = nm.Xoshiro256(4)
    items = list(range(20))
    r.shuffle(items)
    assert sorted(items) == list(range(20))
    assert items != list(range(20))


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_identity():
    p = nm.Parameter(np.zeros((2, 2)), "p")
    state = nm.AdamState(lr=0.1, eps=1e-12)
    nm.adam_step({"p": p}, {"p": np.ones((2, 2))}, state)
    assert np.allclose(p.data, -0.1, atol=1e-9)
    assert state.step == 1


def test_adam_zero_gradient_leaves_params():
    p = nm.Parameter(np.full((2, 2), 5.0), "p")
    state = nm.AdamState(lr=0.1)
    nm.adam_step({"p": p}, {"p": np.zeros((2, 2))}, state)
    assert np.array_equal(p.data, np.full((2, 2), 5.0))


def test_adam_two_steps_match_hand_recurrence():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = nm.Parameter([[1.0]], "p")
    state = nm.AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps)
    # hand-rolled scalar recurrence
    theta, m, v = 1.0, 0.0, 0.0
    for t, g in enumerate([1.0, 2.0], start=1):
        nm.adam_step({"p": p}, {"p": np.array([[g]])}, state)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        assert p.data[0, 0] == pytest.approx(theta, abs=1e-12)


def test_adam_nan_gradient_names_parameter():
    p = nm.Parameter([[1.0]], "theta")
    with pytest.raises(FloatingPointError, match="theta"):
        nm.adam_step({"theta": p}, {"theta": np.array([[float("nan")]])}, nm.AdamState())


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {
        "a.w": rng.normal(size=(3, 7)),
        "b": rng.normal(size=(1, 1)) * 1e-300,
        "c": np.array([[np.pi]]),
    }
    prefix = str(tmp_path / "ckpt")
    nm.save_arrays(arrays, prefix)
    loaded = nm.load_arrays(prefix)
    assert set(loaded) == set(arrays)
    for name in arrays:
        assert arrays[name].tobytes() == loaded[name].tobytes()


def test_checkpoint_manifest_is_json_with_shapes(tmp_path):
    prefix = str(tmp_path / "ckpt")
    nm.save_arrays({"w": np.zeros((2, 3))}, prefix)
    with open(prefix + ".manifest.json", encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["w"]["shape"] == [2, 3]
    assert manifest["w"]["length"] == 6 * 8


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        nm.load_arrays(str(tmp_path / "nope"))
