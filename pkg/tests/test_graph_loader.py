"""
Pruebas de carga y preprocesado de redes
"""

import numpy as np
import pytest
import scipy.sparse as sp

from src.graph_loader import (
    GraphDataError, attribute_similarity, build_transition_tables, load_graph, standardize_attributes,
)


def test_nodes_registered_in_order_of_appearance():
    graph = load_graph(["# comentario", "a b", "", "b c"])

    assert graph.node_ids == ('a', 'b', 'c')
    assert graph.num_edges == 2
    assert graph.edges.tolist() == [[0, 1], [1, 2]]
    assert (graph.weights != graph.weights.T).nnz == 0


def test_both_orientations_give_a_single_edge():
    graph = load_graph(["a b", "b a"])

    assert graph.num_edges == 1
    assert graph.weights[0, 1] == 1.0
    assert graph.weights[1, 0] == 1.0


def test_repeated_edges_sum_their_weights():
    graph = load_graph(["a b 2", "a b 3"])

    assert graph.weights[0, 1] == 5.0
    assert graph.stats['duplicate_edges'] == 1


def test_self_loops_are_dropped_but_node_is_kept():
    graph = load_graph(["a a", "a b"])

    assert graph.num_nodes == 2
    assert graph.num_edges == 1
    assert graph.stats['self_loops_dropped'] == 1


def test_bom_is_stripped(write_file):
    path = write_file('bom.edgelist', ["\ufeffx y", "y z"])

    graph = load_graph(path)

    assert graph.node_ids == ('x', 'y', 'z')


@pytest.mark.parametrize('line', ["a b c d", "a", "a b x", "a b -1", "a b 0", "a b nan", "a b inf"])
def test_malformed_lines_report_line_number(line):
    with pytest.raises(GraphDataError) as excinfo:
        load_graph(["# cabecera", "a b", line])

    assert excinfo.value.line_number == 3


def test_attributes_missing_rows_become_zero(write_file):
    attrs = write_file('attrs.csv', ["id,f1,f2", "a,1,2", "c,3,4"])

    graph = load_graph(["a b", "b c"], attribute_source=attrs)

    assert graph.attribute_dim == 2
    np.testing.assert_array_equal(graph.attributes, [[1, 2], [0, 0], [3, 4]])
    assert graph.stats['nodes_without_attributes'] == 1


@pytest.mark.parametrize('rows', [
    ["id,f1", "a,1", "a,2"],
    ["id,f1", "zz,1"],
    ["id,f1", "a,uno"],
    ["node,f1", "a,1"],
])
def test_invalid_attribute_files(write_file, rows):
    attrs = write_file('attrs.csv', rows)

    with pytest.raises(GraphDataError):
        load_graph(["a b"], attribute_source=attrs)


def test_labels_single_and_multilabel(write_file):
    single = write_file('single.csv', ["id,label", "a,x", "b,y"])
    multi = write_file('multi.csv', ["id,label", "a,x;y", "b,y"])

    graph = load_graph(["a b"], label_source=single)
    assert graph.labels == {0: frozenset({'x'}), 1: frozenset({'y'})}
    assert not graph.multilabel

    graph = load_graph(["a b"], label_source=multi)
    assert graph.labels[0] == frozenset({'x', 'y'})
    assert graph.multilabel


def test_duplicate_label_row_is_an_error(write_file):
    labels = write_file('labels.csv', ["id,label", "a,x", "a,y"])

    with pytest.raises(GraphDataError):
        load_graph(["a b"], label_source=labels)


def test_standardize_zero_mean_unit_std(write_file):
    attrs = write_file('attrs.csv', ["id,f1,f2", "a,1,5", "b,2,5", "c,6,5"])
    graph = load_graph(["a b", "b c"], attribute_source=attrs)

    standardized = standardize_attributes(graph)

    np.testing.assert_allclose(standardized.attributes[:, 0].mean(), 0.0, atol=1e-12)
    np.testing.assert_allclose(standardized.attributes[:, 0].std(), 1.0, atol=1e-12)
    np.testing.assert_array_equal(standardized.attributes[:, 1], 0.0)
    np.testing.assert_array_equal(graph.attributes[:, 1], 5.0)


def test_standardize_without_attributes_fails():
    with pytest.raises(GraphDataError):
        standardize_attributes(load_graph(["a b"]))


def test_attribute_similarity_clips_and_zeroes_diagonal(write_file):
    attrs = write_file('attrs.csv', ["id,f1,f2", "a,1,0", "b,0,1", "c,1,1", "d,-1,0"])
    graph = load_graph(["a b", "c d"], attribute_source=attrs)

    y = attribute_similarity(graph)

    assert y[0, 1] == 0.0
    assert y[0, 2] == pytest.approx(1 / np.sqrt(2))
    assert y[0, 3] == 0.0
    np.testing.assert_array_equal(np.diag(y), 0.0)
    np.testing.assert_allclose(y, y.T)


def test_blocked_similarity_matches_dense(tree_paths):
    graph = load_graph(tree_paths['edges'], attribute_source=tree_paths['attributes'])

    dense = attribute_similarity(graph)
    blocked = attribute_similarity(graph, dense_limit=0, block_rows=10)

    assert sp.issparse(blocked)
    np.testing.assert_allclose(blocked.toarray(), dense, atol=1e-12)


def test_blocked_similarity_keeps_top_k_per_row(tree_paths):
    graph = load_graph(tree_paths['edges'], attribute_source=tree_paths['attributes'])
    dense = attribute_similarity(graph)

    sparse = attribute_similarity(graph, dense_limit=10, block_rows=16, top_k=5)

    assert sparse.nnz <= 2 * 5 * graph.num_nodes
    assert (sparse != sparse.T).nnz == 0
    rows, cols = sparse.nonzero()
    np.testing.assert_allclose(np.asarray(sparse[rows, cols]).ravel(), dense[rows, cols], atol=1e-12)
    np.testing.assert_allclose(sparse.max(axis=1).toarray().ravel(), dense.max(axis=1), atol=1e-12)


def test_transition_tables_are_row_stochastic(tree_paths):
    graph = load_graph(tree_paths['edges'], attribute_source=tree_paths['attributes'])

    tables = build_transition_tables(graph, attribute_similarity(graph))

    for table in (tables.topo, tables.attr):
        sums = np.asarray(table.sum(axis=1)).ravel()
        assert np.all(np.isclose(sums, 1.0) | np.isclose(sums, 0.0))
    assert tables.topo[0, 1] == pytest.approx(0.5)


def test_isolated_node_has_zero_rows():
    graph = load_graph(["a b", "c c"])

    tables = build_transition_tables(graph)

    assert tables.topo[2].nnz == 0
    assert tables.attr.nnz == 0


def test_with_edges_keeps_nodes_and_weights():
    graph = load_graph(["a b 2", "b c 3", "c d 4"])

    restricted = graph.with_edges(np.array([[1, 2]]))

    assert restricted.num_nodes == 4
    assert restricted.num_edges == 1
    assert restricted.weights[2, 1] == 3.0
    assert graph.num_edges == 3
