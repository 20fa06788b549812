#!/usr/bin/env python3
"""
HYPEREMBED - Embedding hiperbólico de redes con atributos
Punto de entrada principal de la aplicación
"""

import os
import sys
import logging
import argparse
from contextlib import contextmanager
from dataclasses import dataclass, fields
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from colorama import Fore, Style, just_fix_windows_console
from dotenv import load_dotenv

# Añadir el directorio raíz al path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

try:
    from src.config_manager import (
        DEFAULT_CONFIG_PATH, ENV_LOG_LEVEL, PROJECTION_MODELS, ConfigError, RunConfig, build_run_config,
        create_default_config,
    )
    from src.embedding_evaluator import (
        RESULT_COLUMNS, EvalReport, EvaluationError, aggregate_rows, classify_eval,
        LogisticConfig, link_prediction_eval, reconstruction_eval, split_edges,
    )
    from src.embedding_store import (
        EmbeddingFileError, align_embedding, append_results, read_embedding, write_edge_list,
        write_embedding, write_key_values, write_loss_trace, write_node_map, write_projection, write_text,
        write_walks,
    )
    from src.graph_loader import (
        AttributedGraph, GraphDataError, attribute_similarity, build_transition_tables,
        load_graph, standardize_attributes,
    )
    from src.hyperboloid_geometry import GeometryError, from_klein, from_poincare, to_klein, to_poincare
    from src.hyperboloid_optimizer import (
        HyperboloidEmbedding, NumericalFailure, TrainingStats, init_embedding, train,
    )
    from src.walk_sampler import SamplerError, SamplerStats, extract_pairs, generate_walks
except ImportError as e:
    print(f"Error importando módulos: {e}")
    print("Asegúrate de ejecutar desde el directorio raíz del proyecto")
    sys.exit(1)

PACKAGE_LOGGER = 'src'
PROJECTION_CHECK_TOLERANCE = 1e-9

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3
EXIT_INTERRUPTED = 130

DATA_ERRORS = (GraphDataError, EmbeddingFileError, EvaluationError, SamplerError, GeometryError)


def setup_logging(log_level: str = "INFO", log_dir: Optional[Path] = None) -> logging.Logger:
    """
    Configura el sistema de logging del paquete

    Reemplaza los handlers previos, así que puede llamarse varias veces.

    Args:
        log_level: Nivel de log (DEBUG, INFO, ...)
        log_dir: Directorio del archivo de log (None = solo consola)
    """
    log_format = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(
            log_dir / f'hyperembed_{datetime.now().strftime("%Y%m%d")}.log',
            encoding='utf-8'
        )
        file_handler.setFormatter(log_format)
        logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(log_format)
    logger.addHandler(console_handler)
    return logger


class PipelineError(RuntimeError):
    """Error de un módulo, etiquetado con la etapa del pipeline"""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Error en etapa {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def exit_code_for(error: BaseException) -> int:
    """Código de salida: 1 configuración, 2 datos o E/S, 3 numérico"""
    if isinstance(error, PipelineError):
        error = error.cause
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    if isinstance(error, NumericalFailure):
        return EXIT_NUMERIC
    if isinstance(error, DATA_ERRORS):
        return EXIT_DATA
    if isinstance(error, OSError):
        return EXIT_DATA
    return EXIT_USAGE


@dataclass
class EmbeddingRun:
    """Resultado de caminatas + entrenamiento para una semilla"""
    embedding: HyperboloidEmbedding
    loss_trace: List[float]
    walk_stats: SamplerStats
    training_stats: TrainingStats


class HyperEmbedPipeline:
    """Orquesta grafo -> caminatas -> pares -> entrenamiento -> evaluación"""

    def __init__(self, config: RunConfig, command: str, logger: Optional[logging.Logger] = None):
        """
        Args:
            config: Configuración validada
            command: Subcomando en ejecución
            logger: Logger del paquete
        """
        self.config = config
        self.command = command
        self.logger = logger or logging.getLogger(PACKAGE_LOGGER)
        self.output_dir = Path(config.output_dir)
        self._graph: Optional[AttributedGraph] = None

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        try:
            yield
        except (KeyboardInterrupt, PipelineError):
            raise
        except Exception as e:
            self.logger.error(f"❌ Error en etapa {name}: {e}")
            raise PipelineError(name, e) from e

    # --- bloques comunes -------------------------------------------------

    @property
    def graph(self) -> AttributedGraph:
        if self._graph is None:
            with self.stage('graph'):
                graph = load_graph(self.config.edges, self.config.attributes, self.config.labels)
                if graph.has_attributes and self.config.standardize:
                    graph = standardize_attributes(graph)
            self._graph = graph
        return self._graph

    def embed_graph(self, graph: AttributedGraph, seed: int, alpha: float, dimension: int) -> EmbeddingRun:
        """Caminatas, pares y entrenamiento para una semilla"""
        with self.stage('similarity'):
            similarity = attribute_similarity(graph) if alpha > 0 else None
            tables = build_transition_tables(graph, similarity)
        walk_stats = SamplerStats()
        with self.stage('walks'):
            walks = generate_walks(tables, self.config.walk_config(seed, alpha), walk_stats,
                                   progress=self.config.progress)
        with self.stage('pairs'):
            corpus = extract_pairs(walks, self.config.context_size, num_nodes=graph.num_nodes, stats=walk_stats)
        training_stats = TrainingStats()
        with self.stage('train'):
            initial = init_embedding(graph.num_nodes, dimension, seed, self.config.sigma)
            embedding, trace = train(initial, corpus, self.config.train_config(seed),
                                     sampler_stats=walk_stats, stats=training_stats)
        return EmbeddingRun(embedding, trace, walk_stats, training_stats)

    def write_manifest(self) -> Path:
        with self.stage('write'):
            return write_key_values(self.output_dir / 'manifest.txt', self.config.to_manifest(self.command))

    def _seeds(self) -> List[int]:
        return [self.config.seed + r for r in range(self.config.reps)]

    def _grid(self) -> List[Tuple[float, int]]:
        return [(alpha, dim) for alpha in self.config.alphas for dim in self.config.dimensions]

    def _write_reports(self, task: str, groups: Dict[Tuple, List[EvalReport]]) -> Path:
        rows: List[Dict[str, Any]] = []
        blocks: List[str] = []
        for reports in groups.values():
            for report in reports:
                rows.extend(report.to_rows())
                blocks.append(report.to_text())
            if len(reports) > 1:
                rows.extend(aggregate_rows(reports))
        with self.stage('write'):
            write_text(self.output_dir / f'{task}_reports.txt', '\n'.join(blocks))
            return append_results(self.output_dir / 'results.csv', rows, RESULT_COLUMNS)

    def _stored_embedding(self) -> HyperboloidEmbedding:
        with self.stage('evaluate'):
            node_ids, embedding = read_embedding(self.config.embedding, sigma=self.config.sigma)
            return align_embedding(node_ids, embedding, self.graph)

    # --- subcomandos -----------------------------------------------------

    def cmd_embed(self) -> Path:
        """Entrena el embedding y escribe embedding, mapa de nodos, traza y manifiesto"""
        graph = self.graph
        run = self.embed_graph(graph, self.config.seed, self.config.alpha, self.config.dimension)
        with self.stage('write'):
            path = write_embedding(self.output_dir / 'embedding.csv', graph.node_ids, run.embedding)
            write_node_map(self.output_dir / 'node_map.csv', graph.node_ids)
            write_loss_trace(self.output_dir / 'loss_trace.csv', run.loss_trace)
            write_key_values(self.output_dir / 'walk_stats.txt', run.walk_stats.to_dict())
            write_key_values(self.output_dir / 'training_stats.txt', run.training_stats.to_dict())
        self.write_manifest()
        return path

    def cmd_walks(self) -> Path:
        """Genera las caminatas y las vuelca en orden canónico"""
        graph = self.graph
        alpha = self.config.alpha
        with self.stage('similarity'):
            similarity = attribute_similarity(graph) if alpha > 0 else None
            tables = build_transition_tables(graph, similarity)
        stats = SamplerStats()
        with self.stage('walks'):
            walks = generate_walks(tables, self.config.walk_config(self.config.seed), stats,
                                   progress=self.config.progress)
        with self.stage('write'):
            path = write_walks(self.output_dir / 'walks.txt', walks.in_canonical_order(), graph.node_ids)
            write_key_values(self.output_dir / 'walk_stats.txt', stats.to_dict())
        self.write_manifest()
        return path

    def cmd_lp_split(self) -> Path:
        """Escribe las aristas de entrenamiento, las retenidas y las no-aristas"""
        graph = self.graph
        with self.stage('split'):
            split = split_edges(graph, self.config.holdout_fraction, self.config.seed)
        train_weights = np.asarray(graph.weights[split.train_edges[:, 0], split.train_edges[:, 1]]).ravel()
        with self.stage('write'):
            write_edge_list(self.output_dir / 'train_edges.txt', split.train_edges, graph.node_ids, train_weights)
            write_edge_list(self.output_dir / 'held_out_edges.txt', split.held_out_edges, graph.node_ids)
            path = write_edge_list(self.output_dir / 'non_edges.txt', split.non_edges, graph.node_ids)
        self.write_manifest()
        return path

    def cmd_eval_reconstruction(self) -> Path:
        graph = self.graph
        groups: Dict[Tuple, List[EvalReport]] = {}
        if self.config.embedding:
            embedding = self._stored_embedding()
            with self.stage('evaluate'):
                report = reconstruction_eval(embedding, graph, self.config.seed, self.config.alpha,
                                             self.config.subsample_threshold)
            groups[(self.config.alpha, embedding.dimension)] = [report]
        else:
            for alpha, dim in self._grid():
                for seed in self._seeds():
                    run = self.embed_graph(graph, seed, alpha, dim)
                    with self.stage('evaluate'):
                        report = reconstruction_eval(run.embedding, graph, seed, alpha,
                                                     self.config.subsample_threshold)
                    groups.setdefault((alpha, dim), []).append(report)
        path = self._write_reports('reconstruction', groups)
        self.write_manifest()
        return path

    def cmd_eval_lp(self) -> Path:
        graph = self.graph
        groups: Dict[Tuple, List[EvalReport]] = {}
        for alpha, dim in self._grid():
            for seed in self._seeds():
                with self.stage('split'):
                    split = split_edges(graph, self.config.holdout_fraction, seed)
                    train_graph = graph.with_edges(split.train_edges)
                run = self.embed_graph(train_graph, seed, alpha, dim)
                with self.stage('evaluate'):
                    report = link_prediction_eval(run.embedding, split, alpha)
                groups.setdefault((alpha, dim), []).append(report)
        path = self._write_reports('lp', groups)
        self.write_manifest()
        return path

    def cmd_eval_classify(self) -> Path:
        graph = self.graph
        if not graph.labels:
            raise PipelineError('evaluate', EvaluationError("La red no tiene etiquetas"))
        logistic = LogisticConfig(l2=self.config.logistic_l2, iterations=self.config.logistic_iterations,
                                  step=self.config.logistic_step)
        groups: Dict[Tuple, List[EvalReport]] = {}

        def evaluate(embedding: HyperboloidEmbedding, seed: int, alpha: float, dim: int) -> None:
            for fraction in self.config.fractions:
                with self.stage('evaluate'):
                    report = classify_eval(embedding, graph.labels, fraction, seed, graph.multilabel,
                                           alpha, logistic)
                groups.setdefault((alpha, dim, fraction), []).append(report)

        if self.config.embedding:
            embedding = self._stored_embedding()
            for seed in self._seeds():
                evaluate(embedding, seed, self.config.alpha, embedding.dimension)
        else:
            for alpha, dim in self._grid():
                for seed in self._seeds():
                    evaluate(self.embed_graph(graph, seed, alpha, dim).embedding, seed, alpha, dim)
        path = self._write_reports('classify', groups)
        self.write_manifest()
        return path

    def cmd_project(self) -> Path:
        """Proyecta un embedding guardado a la bola de Poincaré o al disco de Klein"""
        with self.stage('project'):
            node_ids, embedding = read_embedding(self.config.embedding)
            model = self.config.projection_model
            project, lift = (to_klein, from_klein) if model == 'klein' else (to_poincare, from_poincare)
            coordinates = project(embedding.points)
            if self.config.check:
                lifted = lift(coordinates)
                scale = np.maximum(1.0, np.abs(embedding.points[:, :1]))
                residual = float(np.max(np.abs(lifted - embedding.points) / scale)) if len(node_ids) else 0.0
                self.logger.info(f"📊 Residuo máximo de ida y vuelta: {residual:.3e}")
                if residual > PROJECTION_CHECK_TOLERANCE:
                    raise GeometryError(f"Residuo de ida y vuelta {residual:.3e} > {PROJECTION_CHECK_TOLERANCE}")
        with self.stage('write'):
            path = write_projection(self.output_dir / f'projection_{model}.csv', node_ids, coordinates)
        self.write_manifest()
        return path

    def run(self) -> Path:
        handlers = {
            'embed': self.cmd_embed,
            'walks': self.cmd_walks,
            'lp-split': self.cmd_lp_split,
            'eval-reconstruction': self.cmd_eval_reconstruction,
            'eval-lp': self.cmd_eval_lp,
            'eval-classify': self.cmd_eval_classify,
            'project': self.cmd_project,
        }
        self.logger.info(f"🚀 HYPEREMBED {self.command} (semilla {self.config.seed})")
        path = handlers[self.command]()
        self.logger.info(f"✅ Salida principal: {path}")
        return path


class HyperEmbedArgumentParser(argparse.ArgumentParser):
    """Los errores de uso terminan con código 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de reales inválida: {text!r}") from None


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"lista de enteros inválida: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', help='Archivo de configuración JSON')
    common.add_argument('--manifest', help='Manifiesto de una ejecución previa')
    common.add_argument('--output-dir', '-o', dest='output_dir', help='Directorio de salida')
    common.add_argument('--seed', type=int, help='Semilla maestra')
    common.add_argument('--log-level', dest='log_level', help='Nivel de log')
    common.add_argument('--progress', action='store_const', const=True, help='Mostrar barras de progreso')
    common.add_argument('--verbose', '-v', action='store_true', help='Mostrar trazas completas de error')

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--edges', help='Lista de aristas `src dst [weight]`')
    data.add_argument('--attributes', help='CSV de atributos `id,f1,...,fd`')
    data.add_argument('--labels', help='CSV de etiquetas `id,label`')
    data.add_argument('--no-standardize', dest='standardize', action='store_const', const=False,
                      help='No estandarizar los atributos')

    walks = argparse.ArgumentParser(add_help=False)
    walks.add_argument('--walks-per-node', dest='walks_per_node', type=int, help='Caminatas por nodo (s)')
    walks.add_argument('--walk-length', dest='walk_length', type=int, help='Longitud de caminata (l)')
    walks.add_argument('--context', dest='context_size', type=int, help='Tamaño de contexto (c)')
    walks.add_argument('--alpha', type=float, help='Probabilidad de teletransporte (α)')

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument('--dim', dest='dimension', type=int, help='Dimensión del embedding (n)')
    training.add_argument('--lr', dest='learning_rate', type=float, help='Tasa de aprendizaje (η)')
    training.add_argument('--epochs', type=int, help='Épocas (e_max)')
    training.add_argument('--negatives', type=int, help='Negativos por par (m)')
    training.add_argument('--batch', dest='batch_size', type=int, help='Pares por lote (b)')
    training.add_argument('--sigma', type=float, help='Anchura gaussiana (σ)')
    training.add_argument('--no-symmetric-negatives', dest='symmetric_negatives', action='store_const',
                          const=False, help='No actualizar los negativos en cada lote')

    evaluation = argparse.ArgumentParser(add_help=False)
    evaluation.add_argument('--reps', type=int, help='Repeticiones (semillas)')
    evaluation.add_argument('--alpha-grid', dest='alpha_grid', type=_float_list, help='Valores de α separados por comas')
    evaluation.add_argument('--dim-grid', dest='dim_grid', type=_int_list, help='Dimensiones separadas por comas')

    holdout = argparse.ArgumentParser(add_help=False)
    holdout.add_argument('--holdout', dest='holdout_fraction', type=float, help='Fracción de aristas retenidas')

    stored = argparse.ArgumentParser(add_help=False)
    stored.add_argument('--embedding', help='Embedding CSV existente')

    parser = HyperEmbedArgumentParser(
        description='HYPEREMBED - Embedding hiperbólico de redes con atributos',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Ejemplos de uso:
  python src/hyperembed_main.py embed --edges data/binary_tree_63.edgelist \\
      --attributes data/binary_tree_63.attributes.csv
  python src/hyperembed_main.py eval-lp --edges red.edgelist --alpha 0 --reps 3
  python src/hyperembed_main.py eval-classify --edges red.edgelist --attributes attrs.csv \\
      --labels labels.csv --alpha-grid 0,0.2,0.5
  python src/hyperembed_main.py project --embedding output/embedding.csv --model poincare
        """
    )
    subparsers = parser.add_subparsers(dest='command', metavar='COMANDO', parser_class=HyperEmbedArgumentParser)
    subparsers.required = True

    subparsers.add_parser('embed', parents=[common, data, walks, training], help='Entrenar un embedding')
    subparsers.add_parser('walks', parents=[common, data, walks], help='Volcar caminatas aleatorias')
    subparsers.add_parser('lp-split', parents=[common, data, holdout], help='Dividir aristas para predicción de enlaces')
    subparsers.add_parser('eval-reconstruction', parents=[common, data, walks, training, evaluation, stored],
                          help='AUROC de reconstrucción de la red')
    subparsers.add_parser('eval-lp', parents=[common, data, walks, training, evaluation, holdout],
                          help='AUROC de predicción de enlaces')
    classify = subparsers.add_parser('eval-classify', parents=[common, data, walks, training, evaluation, stored],
                                     help='F1 de clasificación de nodos')
    classify.add_argument('--fractions', type=_float_list, help='Fracciones etiquetadas separadas por comas')
    project = subparsers.add_parser('project', parents=[common, stored], help='Proyectar a Poincaré o Klein')
    project.add_argument('--model', dest='projection_model', choices=PROJECTION_MODELS, help='Modelo de destino')
    project.add_argument('--check', action='store_const', const=True, help='Verificar la ida y vuelta')
    init = subparsers.add_parser('init-config', help='Crear un archivo de configuración por defecto')
    init.add_argument('--path', default=DEFAULT_CONFIG_PATH, help='Ruta del archivo JSON')
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    names = {f.name for f in fields(RunConfig)}
    return {key: value for key, value in vars(args).items() if key in names}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Función principal; devuelve el código de salida"""
    load_dotenv()
    just_fix_windows_console()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logger = setup_logging(os.getenv(ENV_LOG_LEVEL, 'INFO'))
    code = EXIT_OK
    try:
        if args.command == 'init-config':
            create_default_config(args.path)
        else:
            config = build_run_config(args.command, _overrides(args), args.config, args.manifest)
            logger = setup_logging(config.log_level, Path(config.output_dir) / 'logs')
            HyperEmbedPipeline(config, args.command, logger).run()
    except KeyboardInterrupt:
        print("\n\n⚠️ Ejecución interrumpida por el usuario")
        return EXIT_INTERRUPTED
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"❌ {e}")
        if getattr(args, 'verbose', False):
            import traceback
            traceback.print_exc()

    if code == EXIT_OK:
        print(f"{Fore.GREEN}✅ {args.command} completado{Style.RESET_ALL}")
    else:
        print(f"{Fore.RED}❌ {args.command} falló (código {code}){Style.RESET_ALL}")
    return code


if __name__ == "__main__":
    sys.exit(main())
