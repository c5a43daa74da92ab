"""Smoke tests for the Python bindings: the main operations round-trip
through numpy and agree with hand-computed values."""

import json
import math

import numpy as np
import pytest

import corrbalance as cb


def generator_config(num_scenes=120, seed=5):
    classes = []
    for cid, (offset, share) in enumerate([(0.0, 0.5), (5.0, 0.3), (-5.0, 0.2)]):
        prototype = [0.0] * 8
        prototype[0] = offset
        prototype[4] = offset
        classes.append(
            {"class_id": cid, "prototype": prototype, "sigma": 0.8, "share": share}
        )
    return {
        "num_scenes": num_scenes,
        "min_nodes": 4,
        "max_nodes": 6,
        "min_pairs": 1,
        "max_pairs": 2,
        "raw_dim": 8,
        "classes": classes,
        "seed": seed,
    }


def test_softmax_and_distance():
    p = cb.stable_softmax([0.0, 0.0, 0.0])
    assert p == pytest.approx([1 / 3] * 3)
    extreme = cb.stable_softmax([1000.0, 0.0])
    assert extreme[0] == pytest.approx(1.0)
    assert extreme[1] > 0.0
    assert cb.l2_distance([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)


def test_center_loss_and_graph():
    centers = np.zeros((2, 2))
    features = np.array([[1.0, 0.0]])
    assert cb.center_loss(features, [0], centers) == pytest.approx(1.0)
    grad = cb.center_loss_grad(features, [0], centers)
    assert grad[0, 0] == pytest.approx(-2.0)

    graph = cb.ClassGraph(3, 1, mode="minmax", seed=1)
    graph.set_centers(np.array([[0.0], [3.0], [4.0]]))
    graph.refresh_edges()
    assert list(graph.global_correlation) == pytest.approx([7.0, 4.0, 5.0])
    tau = graph.tau
    assert tau[0] == max(tau)
    assert tau[1] == min(tau)
    assert min(tau) > 0.0


def test_normalize_modes():
    u = [7.0, 4.0, 5.0]
    scaling = cb.normalize_correlation(u, mode="scaling")
    assert scaling == pytest.approx([1.0, 4 / 7, 5 / 7])
    degenerate = cb.normalize_correlation([2.0, 2.0], mode="softmax")
    assert degenerate == [1.0, 1.0]


def test_losses_and_gradients():
    logits = np.zeros((2, 4))
    result = cb.plain_ce(logits, [0, 1])
    assert result.loss == pytest.approx(math.log(4.0))
    assert result.logit_gradient.shape == (2, 4)

    weighted = cb.pcpl_loss(logits, [0, 1], [1.0, 0.5, 1.0, 1.0])
    assert weighted.per_sample_weights[0] == pytest.approx(2 / 3)

    with pytest.raises(ValueError):
        cb.pcpl_loss(logits, [0, 1], [1.0, 0.0, 1.0, 1.0])

    freq = [900.0, 100.0]
    rw = cb.reweight_pow_loss(np.zeros((2, 2)), [0, 1], freq, 1.0)
    assert rw.per_sample_weights[1] / rw.per_sample_weights[0] == pytest.approx(9.0)

    focal = cb.focal_loss(np.zeros((1, 2)), [0], gamma=0.0)
    ce = cb.plain_ce(np.zeros((1, 2)), [0])
    assert focal.loss == pytest.approx(ce.loss)


def test_drop_mask():
    graph = cb.ClassGraph(2, 1, seed=3)
    graph.set_centers(np.array([[0.0], [4.0]]))
    graph.refresh_edges()
    token = graph.update_count
    mask = cb.drop_mask(np.array([[3.5]]), [0], graph, 2.0, token)
    assert mask == [True]
    kept = cb.drop_mask(np.array([[3.0]]), [0], graph, 2.0, token)
    assert kept == [False]
    with pytest.raises(RuntimeError):
        cb.drop_mask(np.array([[3.0]]), [0], graph, 2.0, token + 1)


def test_encoder_forward_shapes_and_equivariance():
    config = cb.EncoderConfig(num_layers=2, num_heads=2, model_dim=8, ff_hidden_dim=16)
    stack = cb.EncoderStack.create(config, raw_dim=4, seed=11)
    rng = np.random.default_rng(0)
    features = rng.normal(size=(5, 4))
    corners = rng.uniform(0.0, 0.6, size=(5, 2))
    boxes = np.hstack([corners, corners + rng.uniform(0.1, 0.3, size=(5, 2))])
    out = stack.forward(features, boxes)
    assert out.shape == (5, 8)

    perm = rng.permutation(5)
    permuted = stack.forward(features[perm], boxes[perm])
    assert np.max(np.abs(permuted - out[perm])) <= 1e-9


def test_generate_fit_evaluate():
    dataset = cb.generate_dataset(json.dumps(generator_config()))
    assert dataset.num_scenes == 120
    assert dataset.num_classes == 3
    counts = dataset.class_counts
    assert sum(counts) == dataset.total_pairs

    train_config = {
        "epochs": 3,
        "batch_size": 32,
        "lr": 0.1,
        "lr_c": 0.5,
        "loss": {"variant": "pcpl"},
        "seed": 1,
        "feature_dim": 8,
        "pair_hidden_dim": 16,
        "encoder": None,
    }
    model = cb.fit(dataset, json.dumps(train_config))
    assert model.num_epochs == 3
    assert min(model.final_tau) > 0.0
    assert len(model.losses) == 3

    probs = model.predict(dataset, 0)
    assert probs.shape[1] == 3
    assert np.allclose(probs.sum(axis=1), 1.0)

    report = json.loads(model.evaluate(dataset, protocol="constrained"))
    assert report["protocol"] == "constrained"
    assert "100" in report["mean_recall"]
    assert 0.0 <= report["mean_recall"]["100"] <= 1.0

    # Determinism across fits with the same seed.
    again = cb.fit(dataset, json.dumps(train_config))
    assert again.losses == model.losses


def test_noise_injection():
    dataset = cb.generate_dataset(json.dumps(generator_config(num_scenes=300)))
    noisy = cb.inject_label_noise(dataset, 0.1, seed=9)
    assert noisy.total_pairs == dataset.total_pairs
    with pytest.raises(ValueError):
        cb.inject_label_noise(dataset, 0.7, seed=9)


def test_rank_predictions():
    scores = np.array([[0.9, 0.05, 0.05], [0.05, 0.7, 0.8]])
    constrained = cb.rank_predictions(scores, protocol="constrained")
    assert len(constrained) == 2
    assert constrained[0][:2] == (0, 0)
    unconstrained = cb.rank_predictions(scores, protocol="unconstrained")
    assert len(unconstrained) == 6
