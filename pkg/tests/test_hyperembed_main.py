"""
Pruebas de la línea de comandos y del pipeline completo
"""

import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.config_manager import build_run_config
from src.embedding_evaluator import reconstruction_eval
from src.embedding_store import read_key_values
from src.hyperembed_main import (
    EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, HyperEmbedPipeline, PipelineError, exit_code_for, main,
)
from src.graph_loader import GraphDataError

FAST = ['--walks-per-node', '2', '--walk-length', '10', '--epochs', '1', '--dim', '2']


def _tree_args(tree_paths, *extra):
    return ['--edges', str(tree_paths['edges']), '--attributes', str(tree_paths['attributes']), *extra]


def _embed(tree_paths, output_dir, *extra):
    return main(['embed', *_tree_args(tree_paths, *FAST, '--output-dir', str(output_dir), *extra)])


def test_embed_writes_outputs_and_manifest(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path) == EXIT_OK

    for name in ('embedding.csv', 'node_map.csv', 'loss_trace.csv', 'walk_stats.txt',
                 'training_stats.txt', 'manifest.txt'):
        assert (tmp_path / name).is_file()
    embedding = pd.read_csv(tmp_path / 'embedding.csv')
    assert list(embedding.columns) == ['id', 'x0', 'x1', 'x2']
    assert len(embedding) == 63
    assert len(pd.read_csv(tmp_path / 'loss_trace.csv')) == 1

    manifest = read_key_values(tmp_path / 'manifest.txt')
    assert manifest['command'] == 'embed'
    assert manifest['learning_rate'] == '0.3'
    assert manifest['negatives'] == '10'
    assert manifest['batch_size'] == '50'
    assert manifest['context_size'] == '3'
    assert manifest['sigma'] == '1.0'
    assert manifest['alpha'] == '0.2'
    assert manifest['epochs'] == '1'
    assert 'stream_seed.walks' in manifest


def test_embed_is_deterministic(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path / 'a', '--seed', '4') == EXIT_OK
    assert _embed(tree_paths, tmp_path / 'b', '--seed', '4') == EXIT_OK

    for name in ('embedding.csv', 'loss_trace.csv', 'walk_stats.txt'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_manifest_reproduces_embedding(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path / 'first', '--seed', '9', '--lr', '0.5') == EXIT_OK

    code = main(['embed', '--manifest', str(tmp_path / 'first' / 'manifest.txt'),
                 '--output-dir', str(tmp_path / 'second')])

    assert code == EXIT_OK
    assert ((tmp_path / 'first' / 'embedding.csv').read_bytes()
            == (tmp_path / 'second' / 'embedding.csv').read_bytes())


def test_walks_command_counts_and_determinism(tmp_path, write_file):
    edges = write_file('path.edgelist', ["a b", "b c"])
    args = ['walks', '--edges', str(edges), '--alpha', '0', '--walks-per-node', '1', '--walk-length', '3']

    assert main([*args, '--output-dir', str(tmp_path / 'a')]) == EXIT_OK
    assert main([*args, '--output-dir', str(tmp_path / 'b')]) == EXIT_OK

    lines = (tmp_path / 'a' / 'walks.txt').read_text().splitlines()
    assert len(lines) == 3
    assert [line.split()[0] for line in lines] == ['a', 'b', 'c']
    assert all(len(line.split()) <= 4 for line in lines)
    assert (tmp_path / 'a' / 'walks.txt').read_bytes() == (tmp_path / 'b' / 'walks.txt').read_bytes()


def test_isolated_node_walks_have_length_one(tmp_path, write_file):
    edges = write_file('isolated.edgelist', ["a b", "c c"])

    code = main(['walks', '--edges', str(edges), '--alpha', '0', '--walks-per-node', '3',
                 '--output-dir', str(tmp_path)])

    assert code == EXIT_OK
    lines = (tmp_path / 'walks.txt').read_text().splitlines()
    assert [line for line in lines if line.startswith('c')] == ['c', 'c', 'c']


def test_lp_split_is_deterministic(tmp_path, tree_paths):
    args = ['lp-split', '--edges', str(tree_paths['edges']), '--seed', '2']

    assert main([*args, '--output-dir', str(tmp_path / 'a')]) == EXIT_OK
    assert main([*args, '--output-dir', str(tmp_path / 'b')]) == EXIT_OK

    for name in ('train_edges.txt', 'held_out_edges.txt', 'non_edges.txt'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    held_out = (tmp_path / 'a' / 'held_out_edges.txt').read_text().splitlines()
    train = (tmp_path / 'a' / 'train_edges.txt').read_text().splitlines()
    assert len(held_out) == 9
    assert len(train) == 53
    assert all(len(line.split()) == 3 for line in train)


def test_project_with_check(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path) == EXIT_OK

    for model in ('poincare', 'klein'):
        code = main(['project', '--embedding', str(tmp_path / 'embedding.csv'), '--model', model,
                     '--check', '--output-dir', str(tmp_path)])
        assert code == EXIT_OK
        projected = pd.read_csv(tmp_path / f'projection_{model}.csv')
        assert list(projected.columns) == ['id', 'k1', 'k2']
        assert np.all(np.linalg.norm(projected[['k1', 'k2']].to_numpy(), axis=1) < 1)


def test_project_known_rows(tmp_path):
    embedding = tmp_path / 'embedding.csv'
    embedding.write_text(f"id,x0,x1,x2\norigen,1,0,0\nuno,{float(np.cosh(1.0))!r},{float(np.sinh(1.0))!r},0\n")

    assert main(['project', '--embedding', str(embedding), '--output-dir', str(tmp_path)]) == EXIT_OK

    projected = pd.read_csv(tmp_path / 'projection_klein.csv')
    np.testing.assert_array_equal(projected.iloc[0, 1:].to_numpy(dtype=float), [0.0, 0.0])
    np.testing.assert_allclose(projected.iloc[1, 1:].to_numpy(dtype=float), [0.761594, 0.0], atol=1e-6)


def test_eval_lp_rows(tmp_path, tree_paths):
    code = main(['eval-lp', *_tree_args(tree_paths, *FAST), '--reps', '3', '--output-dir', str(tmp_path)])

    assert code == EXIT_OK
    results = pd.read_csv(tmp_path / 'results.csv', dtype={'seed': str})
    assert len(results) == 4
    assert results['seed'].tolist() == ['0', '1', '2', 'aggregate']
    assert set(results['task']) == {'lp'}
    assert results['value'].between(0, 1).all()
    assert (tmp_path / 'lp_reports.txt').is_file()


def test_eval_classify_rows(tmp_path, tree_paths):
    code = main(['eval-classify', *_tree_args(tree_paths, *FAST), '--labels', str(tree_paths['labels']),
                 '--reps', '2', '--fractions', '0.1,0.2', '--output-dir', str(tmp_path)])

    assert code == EXIT_OK
    results = pd.read_csv(tmp_path / 'results.csv', dtype={'seed': str})
    per_seed = results[(results['metric'] == 'micro_f1') & (results['seed'] != 'aggregate')]
    assert len(per_seed) == 4
    assert sorted(per_seed['labelled_fraction'].unique().tolist()) == [0.1, 0.2]
    assert len(results[results['seed'] == 'aggregate']) == 4


def test_eval_reconstruction_from_stored_embedding(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path) == EXIT_OK

    code = main(['eval-reconstruction', '--edges', str(tree_paths['edges']),
                 '--embedding', str(tmp_path / 'embedding.csv'), '--output-dir', str(tmp_path)])

    assert code == EXIT_OK
    results = pd.read_csv(tmp_path / 'results.csv')
    assert results['task'].tolist() == ['reconstruction']
    assert 0.0 <= results['value'].iloc[0] <= 1.0


def test_results_file_is_appended(tmp_path, tree_paths):
    args = ['eval-lp', *_tree_args(tree_paths, *FAST), '--output-dir', str(tmp_path)]

    assert main(args) == EXIT_OK
    assert main(args) == EXIT_OK

    assert len(pd.read_csv(tmp_path / 'results.csv')) == 2
    assert not (pd.read_csv(tmp_path / 'results.csv', dtype={'seed': str})['seed'] == 'aggregate').any()


@pytest.mark.parametrize('argv', [
    ['explode'],
    [],
    ['embed', '--epochs', 'muchas'],
])
def test_usage_errors_exit_one(argv):
    assert main(argv) == EXIT_USAGE


def test_alpha_without_attributes_is_config_error(tmp_path, tree_paths):
    code = main(['embed', '--edges', str(tree_paths['edges']), '--output-dir', str(tmp_path)])

    assert code == EXIT_USAGE
    assert not (tmp_path / 'embedding.csv').exists()


def test_alpha_zero_without_attributes_succeeds(tmp_path, tree_paths):
    code = main(['embed', '--edges', str(tree_paths['edges']), '--alpha', '0', *FAST,
                 '--output-dir', str(tmp_path)])

    assert code == EXIT_OK


def test_malformed_edges_exit_two(tmp_path, write_file):
    edges = write_file('bad.edgelist', ["a b", "a b c d"])

    code = main(['embed', '--edges', str(edges), '--alpha', '0', '--output-dir', str(tmp_path)])

    assert code == EXIT_DATA


def test_invalid_embedding_exit_two(tmp_path):
    embedding = tmp_path / 'embedding.csv'
    embedding.write_text("id,x0,x1,x2\na,1,0,0\nb,3,0,0\n")

    assert main(['project', '--embedding', str(embedding), '--output-dir', str(tmp_path)]) == EXIT_DATA


def test_infinite_learning_rate_exit_three(tmp_path, tree_paths):
    assert _embed(tree_paths, tmp_path, '--lr', 'inf') == EXIT_NUMERIC


def test_unwritable_output_dir_exits_two(tmp_path, tree_paths):
    blocked = tmp_path / 'ocupado'
    blocked.write_text("no es un directorio\n")

    assert _embed(tree_paths, blocked) == EXIT_DATA


def test_io_errors_map_to_data_exit_code():
    assert exit_code_for(PipelineError('write', PermissionError('sin permiso'))) == EXIT_DATA
    assert exit_code_for(RuntimeError('otro')) == EXIT_USAGE


def test_init_config_writes_usable_template(tmp_path, tree_paths):
    path = tmp_path / 'config' / 'hyperembed.json'

    assert main(['init-config', '--path', str(path)]) == EXIT_OK
    assert path.is_file()
    assert _embed(tree_paths, tmp_path / 'salida', '--config', str(path)) == EXIT_OK


def test_pipeline_errors_name_their_stage(tmp_path, write_file):
    edges = write_file('bad.edgelist', ["a b x"])
    config = build_run_config('walks', {'edges': str(edges), 'alpha': 0.0, 'output_dir': str(tmp_path)})

    with pytest.raises(PipelineError) as excinfo:
        HyperEmbedPipeline(config, 'walks').run()

    assert excinfo.value.stage == 'graph'
    assert isinstance(excinfo.value.cause, GraphDataError)
    assert exit_code_for(excinfo.value) == EXIT_DATA


def test_tree_reconstruction_single_seed(tmp_path, tree_paths):
    config = build_run_config('eval-reconstruction', {
        'edges': str(tree_paths['edges']), 'alpha': 0.0, 'walk_length': 20, 'dimension': 5,
        'output_dir': str(tmp_path),
    })
    pipeline = HyperEmbedPipeline(config, 'eval-reconstruction')

    pipeline.run()

    results = pd.read_csv(tmp_path / 'results.csv')
    assert results['value'].iloc[0] > 0.75


@pytest.mark.slow
def test_tree_reconstruction_with_defaults(tmp_path, tree_paths):
    config = build_run_config('eval-reconstruction', {
        'edges': str(tree_paths['edges']), 'alpha': 0.0, 'output_dir': str(tmp_path),
    })
    pipeline = HyperEmbedPipeline(config, 'eval-reconstruction')
    graph = pipeline.graph

    passing = 0
    for seed in range(10):
        run = pipeline.embed_graph(graph, seed, alpha=0.0, dimension=10)
        report = reconstruction_eval(run.embedding, graph, seed)
        if report.metrics['auroc'] >= 0.95 and run.loss_trace[-1] < run.loss_trace[0]:
            passing += 1

    assert passing >= 8


@pytest.mark.slow
def test_defaults_manifest_on_tree(tmp_path, tree_paths):
    assert main(['embed', *_tree_args(tree_paths), '--output-dir', str(tmp_path)]) == EXIT_OK

    manifest = read_key_values(tmp_path / 'manifest.txt')
    expected = {'learning_rate': '0.3', 'epochs': '5', 'negatives': '10', 'batch_size': '50',
                'context_size': '3', 'walks_per_node': '10', 'walk_length': '80', 'sigma': '1.0',
                'alpha': '0.2', 'dimension': '10'}
    assert {key: manifest[key] for key in expected} == expected
    trace = pd.read_csv(tmp_path / 'loss_trace.csv')['mean_loss']
    assert trace.iloc[-1] < trace.iloc[0]


CORA_DIR = os.getenv('HYPEREMBED_CORA_DIR')
requires_cora = pytest.mark.skipif(not CORA_DIR, reason='HYPEREMBED_CORA_DIR no está definido')


def _cora_args(*extra):
    base = Path(CORA_DIR)
    return ['--edges', str(base / 'cora_ml.edgelist'), '--attributes', str(base / 'cora_ml.attributes.csv'),
            *extra]


def _aggregates(results_path, metric):
    results = pd.read_csv(results_path, dtype={'seed': str})
    rows = results[(results['seed'] == 'aggregate') & (results['metric'] == metric)]
    return dict(zip(rows['alpha'].round(6), rows['value']))


@pytest.mark.dataset
@requires_cora
def test_cora_link_prediction(tmp_path):
    code = main(['eval-lp', *_cora_args('--alpha-grid', '0,0.2', '--reps', '10', '--output-dir', str(tmp_path))])

    assert code == EXIT_OK
    means = _aggregates(tmp_path / 'results.csv', 'auroc')
    assert means[0.2] == pytest.approx(0.968, abs=0.03)
    assert means[0.0] == pytest.approx(0.929, abs=0.03)
    assert means[0.2] > means[0.0]


@pytest.mark.dataset
@requires_cora
def test_cora_classification_prefers_attributes(tmp_path):
    labels = str(Path(CORA_DIR) / 'cora_ml.labels.csv')
    code = main(['eval-classify', *_cora_args('--labels', labels, '--alpha-grid', '0,0.2', '--fractions', '0.1',
                                              '--reps', '3', '--output-dir', str(tmp_path))])

    assert code == EXIT_OK
    means = _aggregates(tmp_path / 'results.csv', 'micro_f1')
    assert means[0.2] > means[0.0]
