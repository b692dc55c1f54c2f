import math

import numpy as np
import pytest

from driftmoe.router import BatchBuffer, MLPRouter, bce_with_logits, softmax_gate
from driftmoe.streams import seed_rng


def _small_router(rng, d=None, k=None, hidden=None):
    d = d if d is not None else int(rng.integers(1, 6))
    k = k if k is not None else int(rng.integers(2, 5))
    hidden = hidden if hidden is not None else (int(rng.integers(2, 7)), int(rng.integers(2, 7)))
    return MLPRouter(d, k, hidden=hidden, rng=rng)


# ---------------------------------------------------------------- gate

def test_gate_uniform_on_zero_logits():
    assert softmax_gate(np.zeros(3)) == pytest.approx([1 / 3] * 3, abs=1e-12)


def test_gate_closed_form():
    w = softmax_gate(np.array([math.log(2.0), 0.0]))
    assert w == pytest.approx([2 / 3, 1 / 3], abs=1e-12)


def test_gate_stable_under_huge_logits():
    w = softmax_gate(np.array([1e6, 0.0, -1e6]))
    assert np.all(np.isfinite(w))
    assert w.sum() == pytest.approx(1.0, abs=1e-9)


def test_gate_sums_to_one_and_shift_invariant():
    rng = seed_rng(0)
    for _ in range(200):
        o = rng.normal(0, 5, int(rng.integers(2, 12)))
        w = softmax_gate(o)
        assert w.sum() == pytest.approx(1.0, abs=1e-9)
        assert softmax_gate(o + 123.4) == pytest.approx(w, abs=1e-9)
        assert int(np.argmax(w)) == int(np.argmax(o))


# ---------------------------------------------------------------- loss

def test_bce_zero_logits_two_experts():
    loss = bce_with_logits(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]))
    assert loss == pytest.approx(2.0 * math.log(2.0), abs=1e-12)


def test_bce_saturated_correct_is_tiny():
    loss = bce_with_logits(np.array([[40.0, -40.0]]), np.array([[1.0, 0.0]]))
    assert loss < 1e-8


def test_bce_matches_naive_formula():
    rng = seed_rng(1)
    for _ in range(100):
        B, K = int(rng.integers(1, 8)), int(rng.integers(1, 6))
        o = rng.normal(0, 3, (B, K))
        m = (rng.random((B, K)) < 0.5).astype(float)
        s = 1.0 / (1.0 + np.exp(-o))
        naive = -(m * np.log(s) + (1 - m) * np.log(1 - s)).sum(axis=1).mean()
        assert bce_with_logits(o, m) == pytest.approx(naive, abs=1e-6)


# ---------------------------------------------------------------- forward

def test_forward_zero_params_zero_logits():
    r = MLPRouter(3, 4, hidden=(5, 5), rng=seed_rng(2))
    for k in r.params:
        r.params[k][:] = 0.0
    logits, _ = r.forward(np.ones(3))
    assert np.array_equal(logits, np.zeros((1, 4)))


def test_forward_hand_computed_chain():
    # one unit per layer with fixed weights: o = w3*relu(w2*relu(w1*x+b1)+b2)+b3
    r = MLPRouter(1, 1, hidden=(1, 1), rng=seed_rng(3))
    r.params["W1"][:] = 2.0
    r.params["b1"][:] = -1.0
    r.params["W2"][:] = -3.0
    r.params["b2"][:] = 4.0
    r.params["W3"][:] = 0.5
    r.params["b3"][:] = 0.25
    x = np.array([1.5])
    a1 = max(2.0 * 1.5 - 1.0, 0.0)
    a2 = max(-3.0 * a1 + 4.0, 0.0)
    want = 0.5 * a2 + 0.25
    logits, _ = r.forward(x)
    assert logits[0, 0] == pytest.approx(want, abs=1e-12)
    assert r.forward_one(x)[0] == pytest.approx(want, abs=1e-12)


def test_forward_rejects_non_finite():
    r = MLPRouter(2, 2, rng=seed_rng(4))
    with pytest.raises(ValueError):
        r.forward(np.array([1.0, np.nan]))


def test_forward_one_matches_batch_forward():
    rng = seed_rng(5)
    r = _small_router(rng, d=4, k=3)
    for _ in range(20):
        x = rng.normal(0, 2, 4)
        batch, _ = r.forward(x)
        assert r.forward_one(x) == pytest.approx(batch[0], abs=1e-12)


# ---------------------------------------------------------------- gradients

def _numeric_grad(r, X, masks, key, h=1e-4):
    param = r.params[key]
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + h
        up = bce_with_logits(r.forward(X)[0], masks)
        param[idx] = orig - h
        down = bce_with_logits(r.forward(X)[0], masks)
        param[idx] = orig
        grad[idx] = (up - down) / (2 * h)
        it.iternext()
    return grad


def test_gradients_match_finite_differences():
    # central differences are only valid away from the ReLU kinks, so nudge
    # biases off zero and resample inputs until no pre-activation sits within
    # 10h of a kink
    rng = seed_rng(6)
    h = 1e-4
    trials = 0
    while trials < 100:
        r = _small_router(rng)
        r.params["b1"][:] = rng.uniform(0.02, 0.2, r.params["b1"].shape)
        r.params["b2"][:] = rng.uniform(0.02, 0.2, r.params["b2"].shape)
        B = int(rng.integers(1, 5))
        X = rng.normal(0, 1.5, (B, r.n_inputs))
        masks = (rng.random((B, r.n_experts)) < 0.5).astype(float)
        logits, cache = r.forward(X)
        if min(np.abs(cache["Z1"]).min(), np.abs(cache["Z2"]).min()) < 10 * h:
            continue
        trials += 1
        grads = r.backward(cache, masks)
        for key in r.params:
            num = _numeric_grad(r, X, masks, key, h=h)
            scale = max(np.abs(num).max(), np.abs(grads[key]).max(), 1e-8)
            rel = np.abs(grads[key] - num).max() / scale
            assert rel < 1e-4, f"trial {trials} param {key}: rel err {rel}"


def test_saturated_correct_gradient_and_loss_vanish():
    r = MLPRouter(2, 2, hidden=(4, 4), rng=seed_rng(7))
    X = np.array([[1.0, -1.0]])
    logits, cache = r.forward(X)
    # force saturation by training the bias path on the fixed mask target
    masks = np.array([[1.0, 0.0]])
    r.params["b3"][:] = [40.0, -40.0]
    r.params["W3"][:] = 0.0
    logits, cache = r.forward(X)
    assert bce_with_logits(logits, masks) < 1e-8
    grads = r.backward(cache, masks)
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    assert norm < 1e-10


def test_zero_input_batch_kills_W1_gradient():
    r = MLPRouter(3, 2, hidden=(4, 4), rng=seed_rng(8))
    # nonzero first-layer biases keep the units active so b1 still gets signal
    r.params["b1"][:] = 0.3
    X = np.zeros((2, 3))
    masks = np.array([[1.0, 0.0], [0.0, 1.0]])
    logits, cache = r.forward(X)
    grads = r.backward(cache, masks)
    assert np.abs(grads["W1"]).max() == 0.0
    assert np.abs(grads["b1"]).max() > 0.0


# ---------------------------------------------------------------- adam

def test_adam_first_step_magnitude():
    r = MLPRouter(1, 1, hidden=(1, 1), learning_rate=1e-3, rng=seed_rng(9))
    before = r.params["b3"].copy()
    grads = {k: np.zeros_like(v) for k, v in r.params.items()}
    grads["b3"][:] = 1.0
    r.adam_step(grads)
    delta = r.params["b3"] - before
    assert delta[0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_zero_gradient_no_move():
    r = MLPRouter(2, 2, rng=seed_rng(10))
    before = {k: v.copy() for k, v in r.params.items()}
    r.adam_step({k: np.zeros_like(v) for k, v in r.params.items()})
    for k in before:
        assert np.array_equal(before[k], r.params[k])


def test_adam_rejects_non_finite_gradient():
    r = MLPRouter(2, 2, rng=seed_rng(11))
    grads = {k: np.zeros_like(v) for k, v in r.params.items()}
    grads["W1"][0, 0] = np.inf
    with pytest.raises(FloatingPointError):
        r.adam_step(grads)


def test_adam_descends_convex_quadratic():
    # minimize f(theta) = 0.5*(theta - t)' A (theta - t) in 2 variables
    rng = seed_rng(12)
    A = np.array([[3.0, 0.4], [0.4, 1.0]])
    target = np.array([1.0, -2.0])
    theta = np.array([5.0, 4.0])
    r = MLPRouter(1, 1, hidden=(1, 1), learning_rate=0.05, rng=rng)
    m = np.zeros(2)
    v = np.zeros(2)
    def loss(th):
        d = th - target
        return 0.5 * d @ A @ d
    start = loss(theta)
    for t in range(1, 101):
        g = A @ (theta - target)
        m = r.beta1 * m + (1 - r.beta1) * g
        v = r.beta2 * v + (1 - r.beta2) * g * g
        mh = m / (1 - r.beta1**t)
        vh = v / (1 - r.beta2**t)
        theta = theta - r.learning_rate * mh / (np.sqrt(vh) + r.adam_epsilon)
    assert loss(theta) < start


def test_adam_on_network_reduces_loss():
    rng = seed_rng(13)
    r = MLPRouter(3, 2, hidden=(8, 8), learning_rate=1e-2, rng=rng)
    X = rng.normal(0, 1, (64, 3))
    masks = np.stack([(X[:, 0] > 0).astype(float), (X[:, 0] <= 0).astype(float)], axis=1)
    first = bce_with_logits(r.forward(X)[0], masks)
    for _ in range(100):
        r.train_batch(X, masks)
    assert bce_with_logits(r.forward(X)[0], masks) < first * 0.5


# ---------------------------------------------------------------- buffer

def test_buffer_no_update_until_capacity():
    r = MLPRouter(2, 2, rng=seed_rng(14))
    before = {k: v.copy() for k, v in r.params.items()}
    buf = BatchBuffer(r, capacity=64)
    rng = seed_rng(15)
    for _ in range(63):
        fired = buf.observe(rng.normal(0, 1, 2), np.array([1.0, 0.0]))
        assert not fired
    for k in before:
        assert np.array_equal(before[k], r.params[k])
    assert buf.updates == 0


def test_buffer_fires_exactly_at_capacity():
    r = MLPRouter(2, 2, rng=seed_rng(16))
    buf = BatchBuffer(r, capacity=64)
    rng = seed_rng(17)
    for i in range(64):
        fired = buf.observe(rng.normal(0, 1, 2), np.array([0.0, 1.0]))
    assert fired
    assert buf.updates == 1
    assert buf.size == 0
    assert r.adam_t == 1


def test_buffer_residual_flush():
    r = MLPRouter(2, 2, rng=seed_rng(18))
    buf = BatchBuffer(r, capacity=64)
    rng = seed_rng(19)
    for _ in range(10):
        buf.observe(rng.normal(0, 1, 2), np.array([1.0, 1.0]))
    assert buf.updates == 0
    buf.flush()
    assert buf.updates == 1 and buf.size == 0
    buf.flush()  # idempotent on empty
    assert buf.updates == 1


def test_buffer_stale_logit_mode_runs():
    r = MLPRouter(2, 2, rng=seed_rng(20))
    buf = BatchBuffer(r, capacity=4, reuse_prediction_logits=True)
    rng = seed_rng(21)
    for _ in range(4):
        x = rng.normal(0, 1, 2)
        buf.observe(x, np.array([1.0, 0.0]), logits=r.forward_one(x))
    assert buf.updates == 1


# ---------------------------------------------------------------- reproducibility & snapshots

def test_identical_seeds_identical_training():
    def build():
        rng = seed_rng(22)
        r = MLPRouter(3, 4, hidden=(16, 16), rng=rng)
        buf = BatchBuffer(r, capacity=8)
        data_rng = seed_rng(23)
        for _ in range(100):
            x = data_rng.normal(0, 1, 3)
            m = (data_rng.random(4) < 0.3).astype(float)
            buf.observe(x, m)
        return r

    a, b = build(), build()
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])


def test_snapshot_roundtrip(tmp_path):
    rng = seed_rng(24)
    r = MLPRouter(3, 4, hidden=(8, 8), rng=rng)
    path = tmp_path / "router.bin"
    r.save_params(path)
    r2 = MLPRouter(3, 4, hidden=(8, 8), rng=seed_rng(25))
    r2.load_params(path)
    for k in r.params:
        assert np.array_equal(r.params[k], r2.params[k])
    x = seed_rng(26).normal(0, 1, 3)
    assert np.array_equal(r.forward_one(x), r2.forward_one(x))


def test_snapshot_rejects_wrong_shape(tmp_path):
    r = MLPRouter(3, 4, hidden=(8, 8), rng=seed_rng(27))
    path = tmp_path / "router.bin"
    r.save_params(path)
    other = MLPRouter(3, 4, hidden=(16, 16), rng=seed_rng(28))
    with pytest.raises(ValueError):
        other.load_params(path)


def test_snapshot_rejects_garbage(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"not a snapshot")
    r = MLPRouter(2, 2, rng=seed_rng(29))
    with pytest.raises(ValueError):
        r.load_params(path)


def test_all_params_finite_after_updates():
    rng = seed_rng(30)
    r = MLPRouter(4, 3, hidden=(16, 16), learning_rate=1e-2, rng=rng)
    buf = BatchBuffer(r, capacity=16)
    for _ in range(500):
        x = rng.normal(0, 100, 4)  # large inputs
        m = (rng.random(3) < 0.5).astype(float)
        buf.observe(x, m)
    for k, v in r.params.items():
        assert np.all(np.isfinite(v)), k
