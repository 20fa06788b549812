#!/usr/bin/env python3
"""
Hyperboloid Optimizer - HYPEREMBED
Entrenamiento del embedding con pérdida softmax de muestreo negativo y
descenso de gradiente riemanniano exacto (gradiente ambiente, proyección
tangente y mapa exponencial)
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from src.hyperboloid_geometry import (
    MAX_TANGENT_STEP, arccosh_clamped, clip_tangent, constraint_residual, distance,
    exp_map, project_to_tangent, reproject, tangent_norm,
)
from src.seeding import stream_rng
from src.walk_sampler import PairCorpus, SamplerError, SamplerStats, draw_negatives

logger = logging.getLogger(__name__)

INIT_RANGE = 1e-3
# Lotes cuyos negativos se dibujan de una sola vez
NEGATIVE_CHUNK_BATCHES = 256
CONSTRAINT_TOLERANCE = 1e-9

BatchItem = Tuple[int, int, Sequence[int]]


class NumericalFailure(RuntimeError):
    """Pérdida o actualización no finita durante el entrenamiento"""

    def __init__(self, message: str, epoch: int = -1, batch: int = -1, node: int = -1):
        super().__init__(f"{message} (época {epoch}, lote {batch}, nodo {node})")
        self.epoch = epoch
        self.batch = batch
        self.node = node


@dataclass
class HyperboloidEmbedding:
    """Θ: un punto del hiperboloide por nodo, alineado con los índices del grafo"""
    points: np.ndarray
    sigma: float = 1.0

    @property
    def num_nodes(self) -> int:
        return int(self.points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1]) - 1

    def max_constraint_residual(self) -> float:
        return float(constraint_residual(self.points).max()) if self.num_nodes else 0.0

    def copy(self) -> 'HyperboloidEmbedding':
        return HyperboloidEmbedding(points=self.points.copy(), sigma=self.sigma)


@dataclass
class TrainConfig:
    """Parámetros de entrenamiento (η, e_max, m, b, σ)"""
    learning_rate: float = 0.3
    epochs: int = 5
    negatives: int = 10
    batch_size: int = 50
    sigma: float = 1.0
    seed: int = 0
    symmetric_negatives: bool = True
    max_step: float = MAX_TANGENT_STEP
    progress: bool = False

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate debe ser >= 0: {self.learning_rate}")
        for name in ('epochs', 'negatives', 'batch_size'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} debe ser >= 1: {getattr(self, name)}")
        if self.sigma <= 0:
            raise ValueError(f"sigma debe ser > 0: {self.sigma}")


@dataclass
class TrainingStats:
    """Contadores del entrenamiento"""
    epochs: int = 0
    batches: int = 0
    updated_nodes: int = 0
    clipped_steps: int = 0
    loss_trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def init_embedding(num_nodes: int, dimension: int, seed: int, sigma: float = 1.0) -> HyperboloidEmbedding:
    """
    Inicializa los puntos cerca del origen del hiperboloide

    Las coordenadas espaciales son uniformes en [-1e-3, 1e-3]; la temporal se
    fija con reproject.
    """
    if num_nodes < 1:
        raise ValueError(f"Se necesita al menos un nodo: {num_nodes}")
    if dimension < 2:
        raise ValueError(f"La dimensión debe ser >= 2: {dimension}")
    rng = stream_rng(seed, 'init')
    spatial = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(num_nodes, dimension))
    points = reproject(np.concatenate([np.zeros((num_nodes, 1)), spatial], axis=1))
    return HyperboloidEmbedding(points=points, sigma=sigma)


def _scores(points: np.ndarray, sources: np.ndarray, candidates: np.ndarray,
            sigma: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """o_uv' para cada candidato; devuelve también z = -⟨x_u, x_v'⟩ y la distancia"""
    xu = points[sources]
    xc = points[candidates]
    inner = -xu[:, None, 0] * xc[..., 0] + np.einsum('bd,bkd->bk', xu[:, 1:], xc[..., 1:])
    z = np.maximum(-inner, 1.0)
    dist = arccosh_clamped(z)
    return -dist ** 2 / (2.0 * sigma ** 2), z, dist


def _softmax(scores: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    shift = scores.max(axis=-1, keepdims=True)
    exp = np.exp(scores - shift)
    total = exp.sum(axis=-1, keepdims=True)
    return exp / total, shift + np.log(total)


def _gradient_ratio(z: np.ndarray, dist: np.ndarray) -> np.ndarray:
    # arccosh(z) / sqrt(z² - 1), con límite 1 en puntos coincidentes
    root = np.sqrt((z - 1.0) * (z + 1.0))
    return np.divide(dist, root, out=np.ones_like(dist), where=root > 0)


def pair_score(emb: HyperboloidEmbedding, u: int, v: int) -> float:
    """o_uv = -d(x_u, x_v)² / 2σ², con la distancia en forma de diferencia (0 si u = v)"""
    return float(-distance(emb.points[u], emb.points[v]) ** 2 / (2.0 * emb.sigma ** 2))


def softmax_probabilities(emb: HyperboloidEmbedding, u: int, candidates: Sequence[int]) -> np.ndarray:
    """Softmax de o_uv' sobre los candidatos (estable con resta del máximo)"""
    candidates = np.asarray(candidates, dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("La lista de candidatos está vacía")
    scores, _, _ = _scores(emb.points, np.array([u]), candidates[None, :], emb.sigma)
    probabilities, _ = _softmax(scores)
    return probabilities[0]


def _as_arrays(batch: Sequence[BatchItem]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Convierte [(u, v, S)] en fuentes, candidatos y la posición del positivo"""
    sources = np.array([item[0] for item in batch], dtype=np.int64)
    candidates = np.array([list(item[2]) for item in batch], dtype=np.int64)
    positive = np.empty(len(batch), dtype=np.int64)
    for i, (_, v, slots) in enumerate(batch):
        hits = np.flatnonzero(np.asarray(slots) == v)
        if hits.size == 0:
            raise ValueError(f"El conjunto de candidatos del par {i} no contiene el contexto {v}")
        positive[i] = hits[-1]
    return sources, candidates, positive


def _loss_items(points: np.ndarray, sources: np.ndarray, candidates: np.ndarray,
                positive: np.ndarray, sigma: float):
    scores, z, dist = _scores(points, sources, candidates, sigma)
    probabilities, log_total = _softmax(scores)
    rows = np.arange(sources.size)
    losses = log_total[:, 0] - scores[rows, positive]
    return losses, probabilities, z, dist


def batch_loss(emb: HyperboloidEmbedding, batch: Sequence[BatchItem]) -> float:
    """
    Media de -log P(v | u) con el softmax restringido a S_m(u, v)

    Args:
        emb: Embedding actual
        batch: Lista de (u, v, S) donde S contiene a v
    """
    if len(batch) == 0:
        return 0.0
    sources, candidates, positive = _as_arrays(batch)
    losses, _, _, _ = _loss_items(emb.points, sources, candidates, positive, emb.sigma)
    return float(np.maximum(losses, 0.0).mean())


def _batch_gradients(points: np.ndarray, sources: np.ndarray, candidates: np.ndarray,
                     positive: np.ndarray, sigma: float, symmetric_negatives: bool,
                     scale: Optional[int] = None):
    """
    Gradientes ambiente acumulados por nodo para un lote

    Returns:
        (pérdidas por par, nodos tocados en orden creciente, gradientes por nodo)
    """
    batch = sources.size
    scale = scale or batch
    losses, probabilities, z, dist = _loss_items(points, sources, candidates, positive, sigma)

    delta = np.zeros_like(probabilities)
    delta[np.arange(batch), positive] = 1.0
    coef = (probabilities - delta) * _gradient_ratio(z, dist) / (sigma ** 2 * scale)

    xu = points[sources]
    xc = points[candidates]
    source_grad = np.einsum('bk,bkd->bd', coef, xc)

    touched = np.concatenate([sources, candidates.ravel()])
    nodes, inverse = np.unique(touched, return_inverse=True)
    accumulated = np.zeros((nodes.size, points.shape[1]))
    np.add.at(accumulated, inverse[:batch], source_grad)
    if symmetric_negatives:
        negative_coef = coef * (1.0 - delta)
        negative_grad = negative_coef[..., None] * xu[:, None, :]
        np.add.at(accumulated, inverse[batch:], negative_grad.reshape(-1, points.shape[1]))
    return losses, nodes, accumulated


def ambient_gradient(emb: HyperboloidEmbedding, u: int, batch: Sequence[BatchItem],
                     include_negative_role: bool = False) -> np.ndarray:
    """
    Gradiente ambiente de Minkowski de la pérdida del lote respecto a x_u

    Suma (P(v'|u) - δ_vv') · ∇o_uv' sobre los pares con fuente u, escalado por
    1/|lote|, con ∇o_uv = arccosh(z)/(σ² sqrt(z² - 1)) · x_v. La componente
    temporal ya tiene el signo invertido de la métrica.

    Args:
        emb: Embedding actual
        u: Nodo cuyo gradiente se calcula
        batch: Lista de (u', v, S)
        include_negative_role: Sumar también los términos en que u es negativo
    """
    gradient = np.zeros(emb.dimension + 1)
    if len(batch) == 0:
        return gradient
    sources, candidates, positive = _as_arrays(batch)
    if include_negative_role:
        _, nodes, accumulated = _batch_gradients(emb.points, sources, candidates, positive,
                                                 emb.sigma, symmetric_negatives=True)
        hit = np.flatnonzero(nodes == u)
        return accumulated[hit[0]] if hit.size else gradient

    mine = sources == u
    if not mine.any():
        return gradient
    _, nodes, accumulated = _batch_gradients(emb.points, sources[mine], candidates[mine], positive[mine],
                                             emb.sigma, symmetric_negatives=False, scale=len(batch))
    hit = np.flatnonzero(nodes == u)
    return accumulated[hit[0]]


def riemannian_step(points: np.ndarray, gradients: np.ndarray, learning_rate: float,
                    max_step: float = MAX_TANGENT_STEP) -> Tuple[np.ndarray, int]:
    """
    Proyecta al tangente, escala por -η, recorta y aplica el mapa exponencial

    Returns:
        (nuevos puntos, número de pasos recortados)
    """
    tangent = project_to_tangent(points, gradients)
    step = -learning_rate * tangent
    clipped = int((tangent_norm(step) > max_step).sum())
    return exp_map(points, clip_tangent(step, max_step)), clipped


def train(emb: HyperboloidEmbedding, corpus: PairCorpus, config: TrainConfig,
          sampler_stats: Optional[SamplerStats] = None,
          stats: Optional[TrainingStats] = None) -> Tuple[HyperboloidEmbedding, List[float]]:
    """
    Entrena el embedding durante e_max épocas

    Cada época baraja D, lo parte en lotes de b pares, dibuja negativos nuevos
    y aplica de forma síncrona las actualizaciones calculadas sobre el estado
    del embedding al inicio del lote.

    Args:
        emb: Embedding inicial (no se modifica)
        corpus: Pares fuente-contexto y distribución de ruido
        config: Parámetros de entrenamiento
        sampler_stats: Contadores del muestreo negativo (opcional)
        stats: Contadores del entrenamiento (opcional)

    Returns:
        (embedding entrenado, pérdida media por época)
    """
    config.validate()
    if len(corpus) == 0:
        raise SamplerError("El corpus de pares está vacío")
    if corpus.num_nodes != emb.num_nodes:
        raise ValueError(f"El corpus tiene {corpus.num_nodes} nodos y el embedding {emb.num_nodes}")

    stats = stats if stats is not None else TrainingStats()
    points = emb.points.copy()
    pairs = corpus.pairs
    chunk = config.batch_size * NEGATIVE_CHUNK_BATCHES
    trace: List[float] = []

    for epoch in tqdm(range(config.epochs), desc='Épocas', disable=not config.progress):
        order = stream_rng(config.seed, 'shuffle', epoch).permutation(len(pairs))
        negative_rng = stream_rng(config.seed, 'negatives', epoch)
        batch_losses: List[float] = []
        batch_number = 0

        for chunk_start in range(0, len(order), chunk):
            selected = order[chunk_start:chunk_start + chunk]
            sources = pairs[selected, 0]
            contexts = pairs[selected, 1]
            negatives = draw_negatives(corpus, sources, config.negatives, negative_rng, sampler_stats)
            candidates = np.concatenate([negatives, contexts[:, None]], axis=1)
            positive = np.full(selected.size, config.negatives, dtype=np.int64)

            for start in range(0, selected.size, config.batch_size):
                window = slice(start, start + config.batch_size)
                losses, nodes, gradients = _batch_gradients(
                    points, sources[window], candidates[window], positive[window],
                    config.sigma, config.symmetric_negatives)

                if not np.isfinite(losses).all():
                    node = int(sources[window][np.argmax(~np.isfinite(losses))])
                    raise NumericalFailure("Pérdida no finita", epoch, batch_number, node)
                with np.errstate(invalid='ignore', over='ignore'):
                    finite_rows = np.isfinite(config.learning_rate * gradients).all(axis=1)
                if not finite_rows.all():
                    raise NumericalFailure("Paso no finito", epoch, batch_number,
                                           int(nodes[np.argmax(~finite_rows)]))

                updated, clipped = riemannian_step(points[nodes], gradients, config.learning_rate,
                                                   config.max_step)
                residual = constraint_residual(updated)
                if (residual > CONSTRAINT_TOLERANCE).any():
                    worst = int(np.argmax(residual))
                    raise NumericalFailure(f"Punto fuera del hiperboloide (residuo {residual[worst]:.3e})",
                                           epoch, batch_number, int(nodes[worst]))
                points[nodes] = updated
                batch_losses.append(float(losses.mean()))
                stats.batches += 1
                stats.updated_nodes += int(nodes.size)
                stats.clipped_steps += clipped
                batch_number += 1

        mean_loss = float(np.mean(batch_losses))
        trace.append(mean_loss)
        stats.epochs += 1
        stats.loss_trace.append(mean_loss)
        logger.info(f"🔄 Época {epoch + 1}/{config.epochs}: pérdida media {mean_loss:.6f}")

    trained = HyperboloidEmbedding(points=points, sigma=config.sigma)
    logger.info(f"✅ Entrenamiento completado; residuo máximo {trained.max_constraint_residual():.2e}")
    return trained, trace
