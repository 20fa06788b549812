#!/usr/bin/env python3
"""
Embedding Evaluator - HYPEREMBED
Tareas de evaluación: reconstrucción de la red (AUROC), predicción de
enlaces sobre aristas retenidas (AUROC) y clasificación de nodos con
regresión logística sobre coordenadas de Klein (F1 micro y macro)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import f1_score
from sklearn.preprocessing import MultiLabelBinarizer

from src.graph_loader import AttributedGraph
from src.hyperboloid_geometry import distance, pairwise_distances, to_klein
from src.hyperboloid_optimizer import HyperboloidEmbedding
from src.seeding import stream_rng

logger = logging.getLogger(__name__)

DEFAULT_HOLDOUT_FRACTION = 0.15
MIN_EDGES_FOR_SPLIT = 10
DEFAULT_SUBSAMPLE_THRESHOLD = 10000
NEGATIVES_PER_EDGE = 10
DISTANCE_BLOCK_ROWS = 1024
DEFAULT_LABELLED_FRACTIONS = (0.02, 0.04, 0.06, 0.08, 0.10)

RESULT_COLUMNS = ['task', 'dim', 'alpha', 'seed', 'labelled_fraction',
                  'metric', 'value', 'std', 'subsampled']


class EvaluationError(ValueError):
    """Entrada inválida para una tarea de evaluación"""


@dataclass
class EdgeSplit:
    """Partición de aristas para predicción de enlaces"""
    train_edges: np.ndarray
    held_out_edges: np.ndarray
    non_edges: np.ndarray
    seed: int
    fraction: float = DEFAULT_HOLDOUT_FRACTION


@dataclass
class EvalReport:
    """Resultado de una tarea para una semilla"""
    task: str
    metrics: Dict[str, float]
    seed: int
    dimension: int
    alpha: float
    labelled_fraction: Optional[float] = None
    subsampled: bool = False
    params: Dict[str, Any] = field(default_factory=dict)

    def to_text(self) -> str:
        """Bloque clave=valor con claves ordenadas"""
        values: Dict[str, Any] = {
            'task': self.task,
            'seed': self.seed,
            'dim': self.dimension,
            'alpha': self.alpha,
            'subsampled': self.subsampled,
        }
        if self.labelled_fraction is not None:
            values['labelled_fraction'] = self.labelled_fraction
        values.update(self.metrics)
        values.update({f"param.{k}": v for k, v in self.params.items()})
        return ''.join(f"{key}={values[key]}\n" for key in sorted(values))

    def to_rows(self) -> List[Dict[str, Any]]:
        return [{
            'task': self.task,
            'dim': self.dimension,
            'alpha': self.alpha,
            'seed': self.seed,
            'labelled_fraction': self.labelled_fraction if self.labelled_fraction is not None else '',
            'metric': metric,
            'value': value,
            'std': '',
            'subsampled': self.subsampled,
        } for metric, value in sorted(self.metrics.items())]


def aggregate_rows(reports: Sequence[EvalReport]) -> List[Dict[str, Any]]:
    """
    Filas agregadas (media y desviación típica muestral) por métrica

    Todos los informes deben compartir tarea, dimensión, α y fracción.
    """
    if not reports:
        return []
    first = reports[0]
    rows = []
    for metric in sorted(first.metrics):
        values = np.array([r.metrics[metric] for r in reports], dtype=np.float64)
        rows.append({
            'task': first.task,
            'dim': first.dimension,
            'alpha': first.alpha,
            'seed': 'aggregate',
            'labelled_fraction': first.labelled_fraction if first.labelled_fraction is not None else '',
            'metric': metric,
            'value': float(values.mean()),
            'std': float(values.std(ddof=1)) if values.size > 1 else '',
            'subsampled': any(r.subsampled for r in reports),
        })
    return rows


def auroc(positive_scores: Sequence[float], negative_scores: Sequence[float]) -> float:
    """
    AUROC con distancias como puntuación (menor distancia predice arista)

    Estadístico de Mann-Whitney: P(positivo < negativo) con empates a ½.

    Raises:
        EvaluationError: Si alguna de las dos listas está vacía o no es finita
    """
    pos = np.asarray(positive_scores, dtype=np.float64).ravel()
    neg = np.asarray(negative_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("AUROC requiere puntuaciones positivas y negativas")
    if not (np.isfinite(pos).all() and np.isfinite(neg).all()):
        raise EvaluationError("Puntuaciones no finitas")

    ranks = rankdata(np.concatenate([pos, neg]))
    negative_rank_sum = ranks[pos.size:].sum()
    u_statistic = negative_rank_sum - neg.size * (neg.size + 1) / 2.0
    return float(u_statistic / (pos.size * neg.size))


def _edge_distances(emb: HyperboloidEmbedding, pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return distance(emb.points[pairs[:, 0]], emb.points[pairs[:, 1]])


def _sample_non_edges(graph: AttributedGraph, count: int, rng: np.random.Generator,
                      max_attempts: int) -> np.ndarray:
    """Pares uniformes (u < v) que no son aristas, sin repetición"""
    n = graph.num_nodes
    weights = graph.weights
    chosen: List[Tuple[int, int]] = []
    seen: Set[Tuple[int, int]] = set()
    attempts = 0
    while len(chosen) < count:
        if attempts >= max_attempts:
            raise EvaluationError(
                f"No se pudieron muestrear {count} no-aristas tras {attempts} intentos (red casi completa)")
        batch = min(max(2 * (count - len(chosen)), 16), max_attempts - attempts)
        candidates = rng.integers(0, n, size=(batch, 2))
        for u, v in candidates:
            attempts += 1
            u, v = int(u), int(v)
            if u == v:
                continue
            key = (u, v) if u < v else (v, u)
            if key in seen or weights[key[0], key[1]] > 0:
                continue
            seen.add(key)
            chosen.append(key)
            if len(chosen) == count:
                break
    return np.array(chosen, dtype=np.int64).reshape(-1, 2)


def reconstruction_eval(emb: HyperboloidEmbedding, graph: AttributedGraph, seed: int = 0,
                        alpha: float = 0.0,
                        subsample_threshold: int = DEFAULT_SUBSAMPLE_THRESHOLD) -> EvalReport:
    """
    AUROC de reconstrucción: aristas positivas frente al resto de pares

    Hasta subsample_threshold nodos se puntúan los N(N-1)/2 pares; por encima
    se muestrean 10·|E| no-aristas y el informe lo indica.
    """
    if emb.num_nodes != graph.num_nodes:
        raise EvaluationError(f"El embedding tiene {emb.num_nodes} nodos y la red {graph.num_nodes}")
    if graph.num_edges == 0:
        raise EvaluationError("La red no tiene aristas")

    n = graph.num_nodes
    subsampled = n > subsample_threshold
    if subsampled:
        positives = _edge_distances(emb, graph.edges)
        rng = stream_rng(seed, 'reconstruction')
        count = NEGATIVES_PER_EDGE * graph.num_edges
        non_edges = _sample_non_edges(graph, count, rng, max_attempts=100 * count)
        negatives = _edge_distances(emb, non_edges)
        logger.info(f"📊 Reconstrucción con {count} no-aristas muestreadas (N={n})")
    else:
        positive_chunks, negative_chunks = [], []
        adjacency = graph.weights.tocsr()
        for start in range(0, n, DISTANCE_BLOCK_ROWS):
            stop = min(start + DISTANCE_BLOCK_ROWS, n)
            block = pairwise_distances(emb.points[start:stop], emb.points)
            is_edge = adjacency[start:stop].toarray() > 0
            upper = np.arange(n)[None, :] > np.arange(start, stop)[:, None]
            positive_chunks.append(block[upper & is_edge])
            negative_chunks.append(block[upper & ~is_edge])
        positives = np.concatenate(positive_chunks)
        negatives = np.concatenate(negative_chunks)

    score = auroc(positives, negatives)
    logger.info(f"✅ AUROC de reconstrucción: {score:.4f}")
    return EvalReport(task='reconstruction', metrics={'auroc': score}, seed=seed,
                      dimension=emb.dimension, alpha=alpha, subsampled=subsampled)


def split_edges(graph: AttributedGraph, fraction: float = DEFAULT_HOLDOUT_FRACTION,
                seed: int = 0) -> EdgeSplit:
    """
    Retiene round(fraction·|E|) aristas y muestrea el mismo número de no-aristas

    Raises:
        EvaluationError: Con menos de 10 aristas o si el muestreo de no-aristas
            agota 100·|E| intentos
    """
    edges = graph.edges
    if edges.shape[0] < MIN_EDGES_FOR_SPLIT:
        raise EvaluationError(f"Se necesitan al menos {MIN_EDGES_FOR_SPLIT} aristas: {edges.shape[0]}")
    if not 0.0 <= fraction < 1.0:
        raise EvaluationError(f"La fracción retenida debe estar en [0, 1): {fraction}")

    rng = stream_rng(seed, 'split')
    held_count = int(np.floor(fraction * edges.shape[0] + 0.5))
    order = rng.permutation(edges.shape[0])
    held_out = edges[np.sort(order[:held_count])]
    train_edges = edges[np.sort(order[held_count:])]
    non_edges = _sample_non_edges(graph, held_count, rng, max_attempts=100 * edges.shape[0])

    logger.info(f"✅ División: {len(train_edges)} aristas de entrenamiento, "
                f"{len(held_out)} retenidas, {len(non_edges)} no-aristas")
    return EdgeSplit(train_edges=train_edges, held_out_edges=held_out, non_edges=non_edges,
                     seed=seed, fraction=fraction)


def link_prediction_eval(emb: HyperboloidEmbedding, split: EdgeSplit, alpha: float = 0.0) -> EvalReport:
    """AUROC de las aristas retenidas frente a las no-aristas muestreadas"""
    if split.held_out_edges.shape[0] == 0:
        raise EvaluationError("La división no tiene aristas retenidas")
    score = auroc(_edge_distances(emb, split.held_out_edges), _edge_distances(emb, split.non_edges))
    logger.info(f"✅ AUROC de predicción de enlaces: {score:.4f}")
    return EvalReport(task='lp', metrics={'auroc': score}, seed=split.seed,
                      dimension=emb.dimension, alpha=alpha,
                      params={'holdout_fraction': split.fraction})


@dataclass
class LogisticConfig:
    """Hiperparámetros de la regresión logística"""
    l2: float = 1e-4
    iterations: int = 500
    step: float = 0.1


@dataclass
class LogisticModel:
    """Modelo uno-contra-resto; constant marca columnas sin ambas clases"""
    weights: np.ndarray
    bias: np.ndarray
    constant: np.ndarray

    def decision_scores(self, features: np.ndarray) -> np.ndarray:
        scores = features @ self.weights + self.bias
        scores[:, self.constant == 0] = -np.inf
        scores[:, self.constant == 1] = np.inf
        return scores


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss(weights: np.ndarray, bias: np.ndarray, features: np.ndarray,
                  targets: np.ndarray, l2: float) -> float:
    """Log-loss media con regularización L2 sobre los pesos (no sobre el sesgo)"""
    z = features @ weights + bias
    per_entry = np.logaddexp(0.0, z) - targets * z
    return float(per_entry.mean(axis=0).sum() + 0.5 * l2 * np.sum(weights ** 2))


def logistic_gradient(weights: np.ndarray, bias: np.ndarray, features: np.ndarray,
                      targets: np.ndarray, l2: float) -> Tuple[np.ndarray, np.ndarray]:
    residual = _sigmoid(features @ weights + bias) - targets
    n = features.shape[0]
    return features.T @ residual / n + l2 * weights, residual.sum(axis=0) / n


def logistic_regression_fit(features: np.ndarray, targets: np.ndarray,
                            config: Optional[LogisticConfig] = None) -> LogisticModel:
    """
    Ajusta una regresión logística binaria por columna de targets

    Descenso de gradiente de lote completo, determinista.

    Args:
        features: Matriz (muestras, d)
        targets: Matriz binaria (muestras, clases)
        config: Hiperparámetros (λ, iteraciones, paso)
    """
    config = config or LogisticConfig()
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[:, None]
    if not np.isfinite(features).all():
        raise EvaluationError("Características no finitas")
    if features.shape[0] != targets.shape[0]:
        raise EvaluationError("Características y objetivos no están alineados")

    positives = targets.sum(axis=0)
    constant = np.full(targets.shape[1], np.nan)
    constant[positives == 0] = 0.0
    constant[positives == targets.shape[0]] = 1.0
    trainable = np.isnan(constant)

    weights = np.zeros((features.shape[1], targets.shape[1]))
    bias = np.zeros(targets.shape[1])
    if trainable.any():
        w = weights[:, trainable]
        b = bias[trainable]
        y = targets[:, trainable]
        for _ in range(config.iterations):
            grad_w, grad_b = logistic_gradient(w, b, features, y, config.l2)
            w = w - config.step * grad_w
            b = b - config.step * grad_b
        weights[:, trainable] = w
        bias[trainable] = b
    return LogisticModel(weights=weights, bias=bias, constant=constant)


def _stratified_sample(nodes: List[int], labels: Dict[int, FrozenSet[str]], classes: List[str],
                       fraction: float, multilabel: bool, rng: np.random.Generator) -> np.ndarray:
    if not multilabel:
        chosen: List[int] = []
        for cls in classes:
            members = [u for u in nodes if cls in labels[u]]
            if not members:
                continue
            k = int(np.floor(fraction * len(members) + 0.5))
            k = min(max(k, 1), max(len(members) - 1, 1))
            chosen.extend(int(u) for u in rng.choice(members, size=k, replace=False))
        return np.array(sorted(chosen), dtype=np.int64)

    target = int(np.floor(fraction * len(nodes) + 0.5))
    target = min(max(target, 1), len(nodes) - 1)
    selected: Set[int] = set()
    for cls in classes:
        if any(cls in labels[u] for u in selected):
            continue
        members = [u for u in nodes if cls in labels[u] and u not in selected]
        if members:
            selected.add(int(rng.choice(members)))
    remaining = [u for u in nodes if u not in selected]
    extra = target - len(selected)
    if extra > 0 and remaining:
        selected.update(int(u) for u in rng.choice(remaining, size=min(extra, len(remaining)), replace=False))
    return np.array(sorted(selected), dtype=np.int64)


def f1_scores(true_sets: Sequence[FrozenSet[str]], predicted_sets: Sequence[FrozenSet[str]],
              classes: Sequence[str]) -> Tuple[float, float]:
    """
    F1 micro y macro a partir de conjuntos de etiquetas

    El macro promedia sobre todas las clases de `classes`; una clase sin
    verdaderos ni predichos aporta 0.
    """
    if not classes:
        return 0.0, 0.0
    binarizer = MultiLabelBinarizer(classes=list(classes))
    y_true = binarizer.fit_transform(true_sets)
    y_pred = binarizer.transform(predicted_sets)
    labels = list(range(len(classes)))
    if len(classes) == 1:
        # una sola columna se interpreta como binaria: se puntúa la clase positiva
        y_true, y_pred, labels = y_true[:, 0], y_pred[:, 0], [1]
    micro = f1_score(y_true, y_pred, average='micro', labels=labels, zero_division=0)
    macro = f1_score(y_true, y_pred, average='macro', labels=labels, zero_division=0)
    return float(micro), float(macro)


def classify_eval(emb: HyperboloidEmbedding, labels: Dict[int, FrozenSet[str]],
                  labelled_fraction: float, seed: int = 0, multilabel: bool = False,
                  alpha: float = 0.0, config: Optional[LogisticConfig] = None) -> EvalReport:
    """
    Clasificación de nodos sobre coordenadas de Klein

    Entrena uno-contra-resto con una muestra estratificada de la fracción
    indicada y evalúa sobre el resto. Etiqueta única: argmax de puntuaciones;
    multietiqueta: sigmoide > 0.5.
    """
    if not labels:
        raise EvaluationError("No hay etiquetas para clasificar")
    if not 0.0 < labelled_fraction < 1.0:
        raise EvaluationError(f"La fracción etiquetada debe estar en (0, 1): {labelled_fraction}")

    nodes = sorted(labels)
    if len(nodes) < 2:
        raise EvaluationError("Se necesitan al menos 2 nodos etiquetados")
    classes = sorted(set().union(*labels.values()))
    features = to_klein(emb.points)
    if not np.isfinite(features).all():
        raise EvaluationError("Coordenadas de Klein no finitas")

    rng = stream_rng(seed, 'classifier')
    train_nodes = _stratified_sample(nodes, labels, classes, labelled_fraction, multilabel, rng)
    train_set = set(train_nodes.tolist())
    test_nodes = np.array([u for u in nodes if u not in train_set], dtype=np.int64)
    if test_nodes.size == 0:
        raise EvaluationError("No quedan nodos para evaluar")

    column = {c: i for i, c in enumerate(classes)}
    targets = np.zeros((train_nodes.size, len(classes)))
    for row, u in enumerate(train_nodes):
        for c in labels[int(u)]:
            targets[row, column[c]] = 1.0
    missing = [c for c in classes if targets[:, column[c]].sum() == 0]
    if missing:
        logger.warning(f"⚠️ {len(missing)} clases sin ejemplos etiquetados: aportan 0 al F1 macro")

    model = logistic_regression_fit(features[train_nodes], targets, config)
    scores = model.decision_scores(features[test_nodes])
    if multilabel:
        predicted = [frozenset(classes[j] for j in np.flatnonzero(row > 0)) for row in scores]
    else:
        predicted = [frozenset([classes[int(np.argmax(row))]]) for row in scores]
    truth = [labels[int(u)] for u in test_nodes]

    micro, macro = f1_scores(truth, predicted, classes)
    logger.info(f"✅ Clasificación ({labelled_fraction:.0%} etiquetado): "
                f"F1 micro {micro:.4f}, F1 macro {macro:.4f}")
    return EvalReport(task='classify', metrics={'micro_f1': micro, 'macro_f1': macro},
                      seed=seed, dimension=emb.dimension, alpha=alpha,
                      labelled_fraction=labelled_fraction,
                      params={'labelled_nodes': int(train_nodes.size), 'test_nodes': int(test_nodes.size)})
