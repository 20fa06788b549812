"""
Pruebas de las tareas de evaluación
"""

import numpy as np
import pytest

from src.embedding_evaluator import (
    EdgeSplit, EvalReport, EvaluationError, _stratified_sample, aggregate_rows, auroc, classify_eval,
    f1_scores, link_prediction_eval, logistic_gradient, logistic_loss, logistic_regression_fit,
    reconstruction_eval, split_edges,
)
from src.graph_loader import load_graph
from src.hyperboloid_geometry import from_klein
from src.hyperboloid_optimizer import HyperboloidEmbedding
from src.seeding import stream_rng


def _cycle(n):
    return load_graph([f"n{i} n{(i + 1) % n}" for i in range(n)])


def _brute_force_auroc(pos, neg):
    wins = sum(1.0 if p < q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def test_auroc_known_values():
    assert auroc([0.1, 0.2], [0.3, 0.4]) == 1.0
    assert auroc([0.1, 0.35], [0.2, 0.3]) == 0.5
    assert auroc([0.5], [0.5]) == 0.5


def test_auroc_matches_brute_force_with_ties():
    rng = np.random.default_rng(0)
    for size in (1, 7, 100):
        pos = rng.integers(0, 20, size=size).astype(float)
        neg = rng.integers(0, 20, size=size + 3).astype(float)

        assert auroc(pos, neg) == _brute_force_auroc(pos, neg)


def test_auroc_is_invariant_to_monotone_transforms():
    rng = np.random.default_rng(1)
    pos, neg = rng.random(50), rng.random(60)

    assert auroc(pos, neg) == auroc(np.exp(3 * pos), np.exp(3 * neg))


def test_auroc_rejects_empty_side():
    with pytest.raises(EvaluationError):
        auroc([], [0.1])
    with pytest.raises(EvaluationError):
        auroc([0.1], [])


def test_split_edges_sizes_and_partition():
    graph = _cycle(100)

    split = split_edges(graph, 0.15, seed=3)

    assert len(split.held_out_edges) == 15
    assert len(split.train_edges) == 85
    assert len(split.non_edges) == 15
    everything = {tuple(e) for e in split.train_edges.tolist()} | {tuple(e) for e in split.held_out_edges.tolist()}
    assert everything == {tuple(e) for e in graph.edges.tolist()}
    for u, v in split.non_edges:
        assert graph.weights[u, v] == 0 and graph.weights[v, u] == 0
        assert u != v


def test_split_edges_is_deterministic():
    graph = _cycle(100)

    first, second = split_edges(graph, seed=5), split_edges(graph, seed=5)

    np.testing.assert_array_equal(first.held_out_edges, second.held_out_edges)
    np.testing.assert_array_equal(first.non_edges, second.non_edges)


def test_split_edges_zero_fraction():
    split = split_edges(_cycle(20), 0.0)

    assert len(split.held_out_edges) == 0
    assert len(split.train_edges) == 20
    assert len(split.non_edges) == 0


def test_split_edges_needs_ten_edges():
    with pytest.raises(EvaluationError):
        split_edges(_cycle(9))


def test_split_edges_fails_on_complete_graph():
    nodes = [f"k{i}" for i in range(5)]
    graph = load_graph([f"{a} {b}" for i, a in enumerate(nodes) for b in nodes[i + 1:]])

    with pytest.raises(EvaluationError):
        split_edges(graph, 0.5)


def test_reconstruction_perfect_on_geodesic_path(geodesic_point):
    graph = load_graph([f"p{i} p{i + 1}" for i in range(9)])
    emb = HyperboloidEmbedding(points=np.array([geodesic_point(float(t)) for t in range(10)]))

    report = reconstruction_eval(emb, graph)

    assert report.metrics['auroc'] == 1.0
    assert not report.subsampled
    assert report.task == 'reconstruction'


def test_subsampled_reconstruction_of_random_embedding(random_embedding):
    graph = _cycle(200)
    emb = random_embedding(200, 3, np.random.default_rng(2))

    report = reconstruction_eval(emb, graph, seed=1, subsample_threshold=1)

    assert report.subsampled
    assert report.metrics['auroc'] == pytest.approx(0.5, abs=0.1)
    assert reconstruction_eval(emb, graph, seed=1, subsample_threshold=1).metrics == report.metrics


def test_reconstruction_rejects_misaligned_embedding(random_embedding):
    with pytest.raises(EvaluationError):
        reconstruction_eval(random_embedding(3, 2, np.random.default_rng(0)), _cycle(10))


def test_link_prediction_perfect_separation(geodesic_point):
    emb = HyperboloidEmbedding(points=np.array([geodesic_point(t) for t in (0.0, 0.1, 0.2, 3.0, 4.0)]))
    split = EdgeSplit(train_edges=np.empty((0, 2), dtype=np.int64),
                      held_out_edges=np.array([[0, 1], [1, 2]]),
                      non_edges=np.array([[0, 3], [2, 4]]), seed=0)

    report = link_prediction_eval(emb, split, alpha=0.2)

    assert report.metrics == {'auroc': 1.0}
    assert report.task == 'lp'
    assert report.alpha == 0.2


def test_f1_scores_multilabel_counting():
    micro, macro = f1_scores([frozenset({'a', 'b'})], [frozenset({'a'})], ['a', 'b'])

    assert micro == pytest.approx(2 / 3)
    assert macro == pytest.approx(0.5)


def test_f1_scores_macro_counts_absent_classes_as_zero():
    micro, macro = f1_scores([frozenset({'a'}), frozenset({'b'})], [frozenset({'a'}), frozenset({'a'})],
                             ['a', 'b', 'c'])

    assert micro == pytest.approx(0.5)
    assert macro == pytest.approx(2 / 9)


def test_f1_scores_single_class():
    micro, macro = f1_scores([frozenset({'a'}), frozenset({'a'})], [frozenset({'a'}), frozenset()], ['a'])

    assert micro == pytest.approx(2 / 3)
    assert macro == pytest.approx(2 / 3)
    assert f1_scores([], [], []) == (0.0, 0.0)


def test_logistic_separable_one_dimensional():
    features = np.array([[-1.0], [-1.0], [1.0], [1.0]])
    targets = np.array([0.0, 0.0, 1.0, 1.0])

    model = logistic_regression_fit(features, targets)

    assert model.weights[0, 0] > 0
    assert abs(model.bias[0]) < 1e-6
    assert (model.decision_scores(features)[:, 0] > 0).tolist() == [False, False, True, True]


def test_logistic_zero_features_predict_majority():
    features = np.zeros((5, 2))
    targets = np.array([[1, 0], [1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)

    scores = logistic_regression_fit(features, targets).decision_scores(features)

    assert np.all(np.argmax(scores, axis=1) == 0)


def test_logistic_constant_columns():
    features = np.array([[0.1], [0.2]])
    targets = np.array([[1, 0], [1, 0]], dtype=float)

    scores = logistic_regression_fit(features, targets).decision_scores(features)

    assert np.all(scores[:, 0] == np.inf)
    assert np.all(scores[:, 1] == -np.inf)


def test_logistic_rejects_non_finite_features():
    with pytest.raises(EvaluationError):
        logistic_regression_fit(np.array([[np.nan]]), np.array([1.0]))


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    features = rng.normal(size=(20, 3))
    targets = (rng.random((20, 2)) > 0.5).astype(float)
    weights = rng.normal(size=(3, 2))
    bias = rng.normal(size=2)
    l2, step = 1e-2, 1e-6

    grad_w, grad_b = logistic_gradient(weights, bias, features, targets, l2)

    numeric_w = np.zeros_like(weights)
    for index in np.ndindex(weights.shape):
        plus, minus = weights.copy(), weights.copy()
        plus[index] += step
        minus[index] -= step
        numeric_w[index] = (logistic_loss(plus, bias, features, targets, l2)
                            - logistic_loss(minus, bias, features, targets, l2)) / (2 * step)
    numeric_b = np.zeros_like(bias)
    for k in range(bias.size):
        plus, minus = bias.copy(), bias.copy()
        plus[k] += step
        minus[k] -= step
        numeric_b[k] = (logistic_loss(weights, plus, features, targets, l2)
                        - logistic_loss(weights, minus, features, targets, l2)) / (2 * step)

    np.testing.assert_allclose(grad_w, numeric_w, rtol=1e-4, atol=1e-8)
    np.testing.assert_allclose(grad_b, numeric_b, rtol=1e-4, atol=1e-8)


def _two_clusters(rng, per_cluster=20):
    left = np.column_stack([np.full(per_cluster, -0.5), rng.uniform(-0.05, 0.05, per_cluster)])
    right = np.column_stack([np.full(per_cluster, 0.5), rng.uniform(-0.05, 0.05, per_cluster)])
    points = from_klein(np.concatenate([left, right]))
    labels = {i: frozenset({'left' if i < per_cluster else 'right'}) for i in range(2 * per_cluster)}
    return HyperboloidEmbedding(points=points), labels


def test_classify_separable_clusters():
    emb, labels = _two_clusters(np.random.default_rng(4))

    report = classify_eval(emb, labels, 0.1, seed=0)

    assert report.metrics['micro_f1'] == 1.0
    assert report.metrics['macro_f1'] == 1.0
    assert report.labelled_fraction == 0.1
    assert report.params['labelled_nodes'] == 4


def test_classify_is_deterministic_and_multilabel_runs():
    emb, labels = _two_clusters(np.random.default_rng(5))
    labels[0] = frozenset({'left', 'right'})

    first = classify_eval(emb, labels, 0.2, seed=3, multilabel=True)
    second = classify_eval(emb, labels, 0.2, seed=3, multilabel=True)

    assert first.metrics == second.metrics
    assert 0.0 <= first.metrics['micro_f1'] <= 1.0


@pytest.mark.parametrize('fraction', [0.0, 1.0])
def test_classify_rejects_bad_fraction(fraction):
    emb, labels = _two_clusters(np.random.default_rng(6))

    with pytest.raises(EvaluationError):
        classify_eval(emb, labels, fraction)


def test_multilabel_sample_covers_every_class():
    _, labels = _two_clusters(np.random.default_rng(7))
    labels[3] = frozenset({'left', 'rare'})
    classes = ['left', 'rare', 'right']

    for seed in range(10):
        chosen = _stratified_sample(sorted(labels), labels, classes, 0.05, True, stream_rng(seed, 'classifier'))

        covered = set().union(*(labels[int(u)] for u in chosen))
        assert covered == set(classes)
        assert 2 <= len(chosen) < len(labels)


def test_single_label_sample_keeps_one_node_per_class_out():
    _, labels = _two_clusters(np.random.default_rng(8), per_cluster=2)

    chosen = _stratified_sample(sorted(labels), labels, ['left', 'right'], 0.9, False, stream_rng(0, 'classifier'))

    assert len(chosen) == 2


def test_aggregate_rows_mean_and_sample_std():
    reports = [EvalReport(task='lp', metrics={'auroc': value}, seed=seed, dimension=10, alpha=0.2)
               for seed, value in enumerate([0.8, 0.9, 1.0])]

    rows = aggregate_rows(reports)

    assert len(rows) == 1
    assert rows[0]['seed'] == 'aggregate'
    assert rows[0]['value'] == pytest.approx(0.9)
    assert rows[0]['std'] == pytest.approx(0.1)
    assert aggregate_rows(reports[:1])[0]['std'] == ''


def test_report_text_block_is_sorted():
    report = EvalReport(task='classify', metrics={'micro_f1': 0.5, 'macro_f1': 0.25}, seed=1,
                        dimension=2, alpha=0.0, labelled_fraction=0.1)

    keys = [line.split('=')[0] for line in report.to_text().splitlines()]

    assert keys == sorted(keys)
    assert 'labelled_fraction' in keys
    assert len(report.to_rows()) == 2
