import numpy as np
import pytest

from rpad.classifier import ClassifierModel, TrainConfig, forward, init_model, softmax, train
from rpad.errors import ConfigurationError
from rpad.projection import PseudoLabeledSet, build_projection_set, normalize_rows, transform_all
from rpad.scoring import brier_scores, brier_terms, perturb, score_pipeline
from rpad.tensor import Rng


def zero_model(q, m_count):
    model = init_model(Rng(0), q, m_count).eval()
    for name, p in model.params.items():
        if name.startswith("W"):
            p[...] = 0
    return model


def logit_model(table: np.ndarray) -> ClassifierModel:
    """A model whose eval logits on the standard basis rows ``e_i`` are ``table[i]``.

    Layers 0 and 1 act as (scaled) identities on non-negative inputs; the last
    layer's weight matrix is the table itself. Batch norm is the identity.
    """
    q, m_count = table.shape
    model = init_model(Rng(0), q, m_count).eval()
    eps = model.bn_eps
    for l in range(3):
        model.buffers[f"running_mean{l}"][...] = 0
        model.buffers[f"running_var{l}"][...] = 1 - eps
        model.params[f"b{l}"][...] = 0
        model.params[f"W{l}"][...] = 0
    model.params["W0"][:, :q] = np.eye(q)
    model.params["W1"][:q, :q] = np.eye(q)
    model.params["W2"][:q, :] = table
    return model


def test_eta_zero_is_identity():
    model = init_model(Rng(1), 4, 3).eval()
    x = np.random.default_rng(0).normal(size=(5, 4))
    assert perturb(model, x, 0.0).tobytes() == x.tobytes()


def test_zero_network_has_zero_gradient():
    x = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(perturb(zero_model(4, 3), x, 10.0), x)


def test_perturb_needs_eval_mode_and_valid_eta():
    model = init_model(Rng(1), 4, 3)
    with pytest.raises(ConfigurationError):
        perturb(model, np.ones((2, 4)), 1.0)
    with pytest.raises(ConfigurationError):
        perturb(model.eval(), np.ones((2, 4)), -1.0)


def test_perturb_moves_against_predicted_class():
    model = init_model(Rng(2), 4, 3).eval()
    x = np.random.default_rng(1).normal(size=(6, 4))
    logits, _ = forward(model, x)
    pred = logits.argmax(axis=1)
    rows = np.arange(6)
    # finite-difference direction check on log p_pred
    eps = 1e-6
    y = perturb(model, x, eps)
    after = np.log(softmax(forward(model, y)[0])[rows, pred])
    before = np.log(softmax(logits)[rows, pred])
    assert np.all(after < before)


def test_small_eta_lowers_confidence_on_trained_toy_model():
    rng = np.random.default_rng(0)
    centers = np.array([[4.0, 0.0], [0.0, 4.0], [-4.0, -4.0]])
    feats = np.vstack([c + rng.normal(size=(100, 2)) for c in centers])
    data = PseudoLabeledSet(feats, np.repeat([0, 1, 2], 100), np.tile(np.arange(100), 3), 3, 100)
    model = train(data, TrainConfig(0.95, batch_size=32), init_model(Rng(3), 2, 3)).model
    probs = softmax(forward(model, feats)[0])
    pred = probs.argmax(axis=1)
    moved = softmax(forward(model, perturb(model, feats, 1e-3))[0])
    rows = np.arange(len(feats))
    assert np.mean(moved[rows, pred] < probs[rows, pred]) >= 0.99


def test_perfect_classifier_scores_zero():
    table = np.array([[50.0, -50.0], [-50.0, 50.0]])
    model = logit_model(table)
    feats = np.eye(2)
    data = PseudoLabeledSet(feats, np.array([0, 1]), np.array([0, 0]), 2, 1)
    sv = brier_scores(model, data)
    np.testing.assert_allclose(sv.scores, [0.0], atol=1e-12)


def test_uniform_prediction_scores_three_quarters():
    model = zero_model(3, 4)
    feats = np.random.default_rng(0).normal(size=(8, 3))
    data = PseudoLabeledSet(feats, np.repeat(np.arange(4), 2), np.tile([0, 1], 4), 4, 2)
    np.testing.assert_allclose(brier_scores(model, data).scores, [-0.75, -0.75], atol=1e-12)


def test_hand_computed_two_sample_case():
    table = np.array([[np.log(3.0), 0.0], [0.0, np.log(4.0)]])  # softmax rows (3/4,1/4), (1/5,4/5)
    model = logit_model(table)
    e0, e1 = np.eye(2)
    # sample 0 -> transform 0 gives e0, transform 1 gives e1; sample 1 the reverse
    feats = np.array([e0, e1, e1, e0])
    labels = np.array([0, 0, 1, 1])
    source = np.array([0, 1, 0, 1])
    sv = brier_scores(model, PseudoLabeledSet(feats, labels, source, 2, 2))
    # sample 0: m=0 on (3/4,1/4): 1/16+1/16 = 1/8; m=1 on (1/5,4/5): 1/25+1/25 = 2/25
    # sample 1: m=0 on (1/5,4/5): 16/25+16/25 = 32/25; m=1 on (3/4,1/4): 9/16+9/16 = 9/8
    expected = [-(1 / 8 + 2 / 25) / 2, -(32 / 25 + 9 / 8) / 2]
    np.testing.assert_allclose(sv.scores, expected, rtol=0, atol=1e-12)


def test_brier_terms_bounds():
    model = init_model(Rng(4), 3, 5).eval()
    x = np.random.default_rng(2).normal(scale=100, size=(200, 3))
    t = brier_terms(model, x, np.random.default_rng(3).integers(0, 5, 200))
    assert np.all((t >= 0) & (t <= 2))


def _pipeline_fixture(seed=0):
    rng = np.random.default_rng(seed)
    x = normalize_rows(rng.normal(size=(30, 6)) + 2.0)
    pset = build_projection_set(seed, 4, 5, 6)
    data = transform_all(x, pset)
    model = train(data, TrainConfig(0.6, batch_size=16, max_epochs=3), init_model(Rng(seed), 5, 4)).model
    return model, pset, x, data


def test_pipeline_eta_zero_equals_unperturbed_path():
    model, pset, x, data = _pipeline_fixture()
    a = score_pipeline(model, pset, x, 0.0).scores
    b = brier_scores(model, data).scores
    assert a.tobytes() == b.tobytes()


def test_pipeline_matches_materialized_perturbation():
    model, pset, x, data = _pipeline_fixture(1)
    eta = 0.5
    moved = PseudoLabeledSet(perturb(model, data.features, eta), data.labels, data.source_index,
                             data.m_count, data.n_samples)
    np.testing.assert_allclose(score_pipeline(model, pset, x, eta).scores,
                               brier_scores(model, moved).scores, rtol=0, atol=1e-12)


def test_pipeline_length_and_range():
    model, pset, x, _ = _pipeline_fixture(2)
    sv = score_pipeline(model, pset, x, 3.0, keep_per_transform=True)
    assert sv.scores.shape == (30,)
    assert sv.per_transform.shape == (30, 4)
    assert np.all((sv.scores >= -2) & (sv.scores <= 0))


def test_pipeline_is_deterministic():
    model, pset, x, _ = _pipeline_fixture(3)
    assert score_pipeline(model, pset, x, 2.0).scores.tobytes() == score_pipeline(model, pset, x, 2.0).scores.tobytes()
