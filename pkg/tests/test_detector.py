import numpy as np
import pytest

from csocnn import data, detector, metrics, nn, trainer
from csocnn.errors import DegenerateClass, ScalerMismatch


@pytest.fixture(scope="module")
def trained_setup():
    records = data.make_synthetic_blobs(1200, k_classes=5, d=75,
                                        separation=2.0, seed=17)
    prep = data.prepare_dataset(records, data.SplitSpec(seed=17))
    net = nn.Network(nn.default_architecture(5), (75, 1, 1), seed=17)
    config = trainer.TrainConfig(epochs=2, batch_size=128, initial_lr=3e-3,
                                 seed=17)
    best, _ = trainer.train(net, prep.train, prep.val, config,
                            class_names=prep.codec.classes)
    return prep, best


def _probe_network(k=5):
    """Dense softmax net with fixed weights: deterministic probabilities."""
    net = nn.Network([nn.input_layer(), nn.dense(k, activation="softmax")],
                     (k,), seed=0)
    net.params["1.weight"][:] = 4.0 * np.eye(k, dtype=np.float32)
    return net


def test_pure_benign_probability_scores_zero():
    net = _probe_network()
    x = np.zeros((1, 5), dtype=np.float32)
    x[0, 0] = 8.0  # saturates class 0
    policy = detector.DetectionPolicy(threshold=0.2, benign_class_index=0)
    det = detector.score(net, x[0], policy)
    assert det.score < 0.01
    assert det.verdict == "normal"
    assert det.predicted_class == "class_0"


def test_uniform_probabilities_score():
    net = _probe_network()
    x = np.zeros((1, 5), dtype=np.float32)  # all-zero input -> uniform softmax
    mass = detector.DetectionPolicy(threshold=0.5,
                                    score_kind="non_benign_mass")
    top = detector.DetectionPolicy(threshold=0.5,
                                   score_kind="one_minus_max_prob")
    assert detector.score(net, x[0], mass).score == pytest.approx(0.8)
    assert detector.score(net, x[0], top).score == pytest.approx(0.8)


def test_verdict_strictly_greater_than_threshold():
    net = _probe_network()
    x = np.zeros((1, 5), dtype=np.float32)
    score = detector.score(
        net, x[0], detector.DetectionPolicy(threshold=0.5)).score
    at_score = detector.DetectionPolicy(threshold=score)
    below = detector.DetectionPolicy(threshold=max(score - 1e-6, 0.0))
    assert detector.score(net, x[0], at_score).verdict == "normal"
    assert detector.score(net, x[0], below).verdict == "anomalous"


def test_scores_live_in_unit_interval(trained_setup):
    prep, net = trained_setup
    policy = detector.DetectionPolicy(threshold=0.5)
    detections = detector.score_batch(net, prep.test[0], policy)
    for det in detections:
        assert 0.0 <= det.score <= 1.0


def test_verdicts_monotone_in_threshold(trained_setup):
    prep, net = trained_setup
    flagged = []
    for threshold in (0.1, 0.4, 0.7, 0.95):
        policy = detector.DetectionPolicy(threshold=threshold)
        detections = detector.score_batch(net, prep.test[0], policy)
        flagged.append({i for i, d in enumerate(detections)
                        if d.verdict == "anomalous"})
    for wider, narrower in zip(flagged, flagged[1:]):
        assert narrower <= wider


def test_batch_scoring_is_order_equivariant(trained_setup):
    prep, net = trained_setup
    x = prep.test[0].array[:40]
    policy = detector.DetectionPolicy(threshold=0.5)
    base = detector.score_batch(net, x, policy)
    perm = np.random.default_rng(0).permutation(len(x))
    shuffled = detector.score_batch(net, x[perm], policy)
    for out_pos, in_pos in enumerate(perm):
        assert shuffled[out_pos].score == base[in_pos].score
        assert shuffled[out_pos].verdict == base[in_pos].verdict


def test_threshold_sweep_reproduces_roc_points(trained_setup):
    prep, net = trained_setup
    x, y = prep.test
    benign = list(prep.codec.classes).index("Benign")
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=benign)
    detections = detector.score_batch(net, x, policy)
    scores = np.array([d.score for d in detections])
    assert scores.min() > 0.0  # keeps every ROC point reachable by strict >

    # benign-vs-rest via the one-vs-rest ROC op on (p_benign, 1-p_benign)
    y_bin = (y != benign).astype(int)
    probs2 = np.stack([1.0 - scores, scores], axis=1)
    points, _ = metrics.roc_curve(y_bin, probs2, 1)

    n_pos = int(y_bin.sum())
    n_neg = len(y_bin) - n_pos
    uniq = sorted(set(scores.tolist()), reverse=True)
    # threshold values that realize {score >= s} under the strict-> verdict
    realize = {s: (uniq[i + 1] if i + 1 < len(uniq) else 0.0)
               for i, s in enumerate(uniq)}
    for fpr, tpr, roc_threshold in points:
        t = scores.max() if roc_threshold == float("inf") \
            else realize[roc_threshold]
        swept = detector.score_batch(
            net, x, detector.DetectionPolicy(threshold=t,
                                             benign_class_index=benign))
        flagged = np.array([d.verdict == "anomalous" for d in swept])
        assert int((flagged & (y_bin == 1)).sum()) / n_pos == tpr
        assert int((flagged & (y_bin == 0)).sum()) / n_neg == fpr


def test_calibrate_perfectly_separable():
    net = _probe_network(2)
    x = np.zeros((6, 2), dtype=np.float32)
    x[:3, 0] = 8.0   # benign, p_benign ~ 1
    x[3:, 1] = 8.0   # attack, p_benign ~ 0
    y = np.array([0, 0, 0, 1, 1, 1])
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=0)
    t = detector.calibrate_threshold(net, (x, y), policy)
    detections = detector.score_batch(
        net, x, detector.DetectionPolicy(threshold=t, benign_class_index=0))
    verdicts = [d.verdict for d in detections]
    assert verdicts == ["normal"] * 3 + ["anomalous"] * 3


def test_calibrate_all_equal_scores_returns_zero():
    net = _probe_network(2)
    x = np.zeros((4, 2), dtype=np.float32)  # identical rows, equal scores
    y = np.array([0, 0, 1, 1])
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=0)
    assert detector.calibrate_threshold(net, (x, y), policy) == 0.0


def test_calibrate_matches_exhaustive_enumeration(trained_setup):
    prep, net = trained_setup
    x = prep.val[0].array[:20]
    y = prep.val[1][:20]
    benign = list(prep.codec.classes).index("Benign")
    if not ((y == benign).any() and (y != benign).any()):
        pytest.skip("20-sample slice lost one side")
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=benign)
    got = detector.calibrate_threshold(net, (x, y), policy)

    scores = np.array([d.score for d in detector.score_batch(net, x, policy)])
    positives = y != benign
    best_t, best_f1 = 0.0, -1.0
    for t in sorted({0.0} | set(scores.tolist())):
        flagged = scores > t
        tp = int((flagged & positives).sum())
        fp = int((flagged & ~positives).sum())
        fn = int(positives.sum()) - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    assert got == best_t


def test_calibrate_fpr_target(trained_setup):
    prep, net = trained_setup
    x, y = prep.val
    benign = list(prep.codec.classes).index("Benign")
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=benign)
    t = detector.calibrate_threshold(net, (x, y), policy, target="fpr_at",
                                     max_fpr=0.1)
    scores = np.array([d.score for d in detector.score_batch(net, x, policy)])
    benign_mask = y == benign
    fpr = int((scores[benign_mask] > t).sum()) / int(benign_mask.sum())
    assert fpr <= 0.1
    # smallest such threshold: an epsilon below must violate the budget
    # (unless it already flags nothing at all)
    smaller = [c for c in sorted({0.0} | set(scores.tolist())) if c < t]
    if smaller:
        prev = smaller[-1]
        prev_fpr = int((scores[benign_mask] > prev).sum()) / int(benign_mask.sum())
        assert prev_fpr > 0.1


def test_calibrate_degenerate_sides():
    net = _probe_network(2)
    x = np.zeros((3, 2), dtype=np.float32)
    policy = detector.DetectionPolicy(threshold=0.5, benign_class_index=0)
    with pytest.raises(DegenerateClass):
        detector.calibrate_threshold(net, (x, np.array([0, 0, 0])), policy)


def test_scaler_mismatch_guard():
    a = data.clean_and_scale([data.FlowRecord(np.array([0.0, 1.0]), "x"),
                              data.FlowRecord(np.array([2.0, 3.0]), "x")]).stats
    b = data.clean_and_scale([data.FlowRecord(np.array([5.0, 1.0]), "x"),
                              data.FlowRecord(np.array([9.0, 3.0]), "x")]).stats
    detector.ensure_scaler_match(a.fingerprint(), a)  # same: fine
    with pytest.raises(ScalerMismatch):
        detector.ensure_scaler_match(a.fingerprint(), b)


def test_policy_validation():
    with pytest.raises(ValueError):
        detector.DetectionPolicy(threshold=1.5)
    with pytest.raises(ValueError):
        detector.DetectionPolicy(score_kind="reconstruction")
