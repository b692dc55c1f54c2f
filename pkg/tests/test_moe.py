import numpy as np
import pytest

from driftmoe.generators import make_benchmark_stream
from driftmoe.moe import DriftMoEClassifier
from driftmoe.streams import binary_schema, numeric_schema, seed_rng, take


def _toy_schema():
    return numeric_schema(3, 4)


def _counting_model(mode, **kw):
    model = DriftMoEClassifier(mode=mode, n_experts=6, top_k=2, hidden=(8, 8),
                               batch_size=4, seed=1, **kw)
    model.initialize(_toy_schema())
    calls = []
    for i, expert in enumerate(model.experts_):
        orig = expert.learn_one

        def wrapped(x, y, _i=i, _orig=orig):
            calls.append(_i)
            _orig(x, y)

        expert.learn_one = wrapped
    return model, calls


def test_initialize_task_mode_forces_expert_count():
    m = DriftMoEClassifier(mode="task", n_experts=12).initialize(_toy_schema())
    assert m.n_experts_ == 4
    assert len(m.experts_) == 4


def test_initialize_validates_top_k():
    with pytest.raises(ValueError):
        DriftMoEClassifier(mode="data", n_experts=4, top_k=8).initialize(_toy_schema())


def test_initialize_rejects_unknown_mode():
    with pytest.raises(ValueError):
        DriftMoEClassifier(mode="hybrid").initialize(_toy_schema())


def test_data_mode_trains_exactly_top_k_experts():
    model, calls = _counting_model("data")
    rng = seed_rng(2)
    for _ in range(20):
        model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
    assert len(calls) == 20 * 2  # top_k = 2


def test_task_mode_trains_every_expert():
    model, calls = _counting_model("task")
    rng = seed_rng(3)
    for _ in range(15):
        model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
    assert len(calls) == 15 * 4  # one call per class expert
    for i in range(4):
        assert calls.count(i) == 15


def test_router_steps_every_batch_size_instances():
    model = DriftMoEClassifier(mode="data", n_experts=4, top_k=1, hidden=(8, 8),
                               batch_size=8, seed=1).initialize(_toy_schema())
    rng = seed_rng(4)
    stepped_at = []
    for t in range(1, 33):
        out = model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
        if out.router_stepped:
            stepped_at.append(t)
    assert stepped_at == [8, 16, 24, 32]
    assert model.buffer_.updates == 4


def test_finalize_flushes_residual_batch():
    model = DriftMoEClassifier(mode="data", n_experts=4, top_k=1, hidden=(8, 8),
                               batch_size=64, seed=1).initialize(_toy_schema())
    rng = seed_rng(5)
    for _ in range(10):
        model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
    assert model.buffer_.updates == 0
    model.finalize()
    assert model.buffer_.updates == 1


def test_untrained_model_cold_start_prediction():
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=1, hidden=(4, 4),
                               seed=1).initialize(_toy_schema())
    routed = model.route_one(np.zeros(3))
    assert 0 <= routed.expert_index < 3
    assert routed.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert routed.y_pred == 0  # uniform expert votes tie-break to class 0


def test_data_mode_prediction_follows_selected_expert():
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=1, hidden=(4, 4),
                               seed=1).initialize(_toy_schema())
    x = np.array([0.5, -0.5, 1.0])
    routed = model.route_one(x)
    expert_pred = int(np.argmax(model.experts_[routed.expert_index].log_votes_one(x)))
    assert routed.y_pred == expert_pred


def test_task_mode_prediction_is_selected_expert_index():
    model = DriftMoEClassifier(mode="task", hidden=(4, 4), seed=3).initialize(_toy_schema())
    x = np.array([1.0, 0.0, -1.0])
    routed = model.route_one(x)
    assert routed.y_pred == routed.expert_index


def test_mask_marks_correct_experts_data_mode():
    model = DriftMoEClassifier(mode="data", n_experts=4, top_k=1, hidden=(4, 4),
                               seed=2).initialize(binary_schema(2, 2))
    # bias experts: experts 0,1 learn class of attr0; experts 2,3 stay fresh
    for expert in model.experts_[:2]:
        for _ in range(60):
            expert.learn_one(np.array([1.0, 0.0]), 1)
            expert.learn_one(np.array([0.0, 1.0]), 0)
    out = model.learn_one(np.array([1.0, 0.0]), 1)
    # trained experts vote class 1 (correct); fresh experts tie-break to 0
    assert out.mask[0] == 1.0 and out.mask[1] == 1.0
    assert out.mask[2] == 0.0 and out.mask[3] == 0.0


def test_mask_fallback_reinforces_top_expert_data_mode():
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=1, hidden=(4, 4),
                               seed=2).initialize(binary_schema(2, 3))
    # fresh experts all predict 0; true label 2 -> all wrong -> fallback
    out = model.learn_one(np.array([1.0, 1.0]), 2)
    assert out.mask.sum() == 1.0
    assert out.mask[out.expert_index] == 1.0


def test_mask_task_mode_targets_true_class_expert():
    model = DriftMoEClassifier(mode="task", hidden=(4, 4), seed=2).initialize(_toy_schema())
    rng = seed_rng(6)
    for _ in range(30):
        y = int(rng.integers(0, 4))
        out = model.learn_one(rng.normal(0, 1, 3), y)
        assert out.mask.tolist() == [1.0 if i == y else 0.0 for i in range(4)]


def test_mask_never_all_zero():
    for mode in ("data", "task"):
        model = DriftMoEClassifier(mode=mode, n_experts=5, top_k=2, hidden=(8, 8),
                                   seed=4).initialize(_toy_schema())
        rng = seed_rng(7)
        for _ in range(200):
            out = model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
            assert out.mask.sum() >= 1.0


def test_prediction_recorded_before_updates():
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=3, hidden=(8, 8),
                               batch_size=4, seed=5).initialize(_toy_schema())
    rng = seed_rng(8)
    X = rng.normal(0, 1, (50, 3))
    ys = rng.integers(0, 4, 50)
    # replay oracle: a twin model fed the same prefix must predict the same
    twin = DriftMoEClassifier(mode="data", n_experts=3, top_k=3, hidden=(8, 8),
                              batch_size=4, seed=5).initialize(_toy_schema())
    for i in range(50):
        pred_before = twin.route_one(X[i]).y_pred
        out = model.learn_one(X[i], int(ys[i]))
        assert out.y_pred == pred_before
        twin.learn_one(X[i], int(ys[i]))


def test_instance_counter_increments():
    model = DriftMoEClassifier(mode="data", n_experts=2, top_k=1, hidden=(4, 4),
                               seed=6).initialize(_toy_schema())
    rng = seed_rng(9)
    for t in range(1, 21):
        model.learn_one(rng.normal(0, 1, 3), int(rng.integers(0, 4)))
        assert model.t_ == t


def test_full_determinism_same_seed_same_stream():
    def run():
        stream = make_benchmark_stream("sea_a", seed=11, length=3000)
        model = DriftMoEClassifier(mode="data", n_experts=4, top_k=2, hidden=(16, 16),
                                   batch_size=8, seed=11).initialize(stream.schema())
        preds = []
        for inst in stream:
            preds.append(model.learn_one(inst.features, inst.label).y_pred)
        return preds, model

    p1, m1 = run()
    p2, m2 = run()
    assert p1 == p2
    for k in m1.router_.params:
        assert np.array_equal(m1.router_.params[k], m2.router_.params[k])


def test_constant_label_stream_converges():
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=1, hidden=(8, 8),
                               batch_size=8, seed=7).initialize(numeric_schema(2, 3))
    rng = seed_rng(12)
    hits = 0
    for t in range(500):
        x = rng.normal(0, 1, 2)
        out = model.learn_one(x, 1)
        if t >= 250:
            hits += out.y_pred == 1
    assert hits / 250 == 1.0


def test_learns_simple_concept_both_modes():
    rng = seed_rng(13)
    for mode in ("data", "task"):
        model = DriftMoEClassifier(mode=mode, n_experts=4, top_k=2, hidden=(16, 16),
                                   batch_size=8, seed=8).initialize(numeric_schema(2, 2))
        hits = n = 0
        for t in range(3000):
            y = int(rng.random() < 0.5)
            x = np.array([y * 2.0 + rng.normal(0, 0.3), rng.normal(0, 1)])
            out = model.learn_one(x, y)
            if t >= 2000:
                hits += out.y_pred == y
                n += 1
        assert hits / n > 0.9, mode


def test_sklearn_surface():
    rng = seed_rng(14)
    X = rng.normal(0, 1, (300, 3))
    y = (X[:, 0] > 0).astype(int)
    model = DriftMoEClassifier(mode="data", n_experts=3, top_k=1, hidden=(8, 8),
                               batch_size=8, seed=9)
    model.partial_fit(X, y, classes=[0, 1])
    assert model.predict(X[:20]).shape == (20,)
    proba = model.predict_proba(X[:5])
    assert proba.shape == (5, 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    params = model.get_params()
    assert params["n_experts"] == 3 and params["mode"] == "data"


def test_checkpoint_roundtrip(tmp_path):
    stream = make_benchmark_stream("sea_a", seed=21, length=2000)
    model = DriftMoEClassifier(mode="data", n_experts=4, top_k=2, hidden=(16, 16),
                               batch_size=8, seed=21).initialize(stream.schema())
    insts = take(stream, 1500)
    for inst in insts:
        model.learn_one(inst.features, inst.label)
    path = tmp_path / "model.ckpt"
    model.save_checkpoint(path)
    restored = DriftMoEClassifier.load_checkpoint(path)

    rest = take(stream, 500)
    for inst in rest:
        a = model.learn_one(inst.features, inst.label)
        b = restored.learn_one(inst.features, inst.label)
        assert a.y_pred == b.y_pred
        assert np.array_equal(a.weights, b.weights)


def test_checkpoint_rejects_garbage(tmp_path):
    import pickle

    path = tmp_path / "junk.ckpt"
    with open(path, "wb") as fh:
        pickle.dump({"format": "something-else"}, fh)
    with pytest.raises(ValueError):
        DriftMoEClassifier.load_checkpoint(path)
