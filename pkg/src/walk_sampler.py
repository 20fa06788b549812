#!/usr/bin/env python3
"""
Walk Sampler - HYPEREMBED
Caminatas aleatorias con teletransporte por atributos, extracción de pares
fuente-contexto y muestreo negativo con distribución unigrama^(3/4)
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from src.graph_loader import TransitionTables
from src.seeding import stream_rng

logger = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75
MAX_REJECTION_ATTEMPTS = 100


class SamplerError(ValueError):
    """Error de configuración o de datos del muestreador"""


@dataclass
class WalkConfig:
    """Parámetros de las caminatas (s, l, c, α)"""
    num_walks_per_node: int = 10
    walk_length: int = 80
    context_size: int = 3
    alpha: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise SamplerError(f"alpha debe estar en [0, 1]: {self.alpha}")
        if self.context_size < 1:
            raise SamplerError(f"context_size debe ser >= 1: {self.context_size}")
        if self.walk_length < 2:
            raise SamplerError(f"walk_length debe ser >= 2: {self.walk_length}")
        if self.num_walks_per_node < 1:
            raise SamplerError(f"num_walks_per_node debe ser >= 1: {self.num_walks_per_node}")
        if not 0 <= self.seed < 2 ** 64:
            raise SamplerError(f"La semilla debe ser un entero sin signo de 64 bits: {self.seed}")


@dataclass
class SamplerStats:
    """Contadores del muestreo (se emiten como bloque clave=valor)"""
    walks: int = 0
    truncated_walks: int = 0
    topological_steps: int = 0
    teleport_steps: int = 0
    fallback_steps: int = 0
    rejection_cap_hits: int = 0
    pairs: int = 0
    corpus_entropy: float = 0.0

    @property
    def teleport_fraction(self) -> float:
        steps = self.topological_steps + self.teleport_steps
        return self.teleport_steps / steps if steps else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_text(self) -> str:
        return ''.join(f"{key}={value}\n" for key, value in sorted(self.to_dict().items()))


class _RowSampler:
    """Muestreo categórico por filas de una matriz CSR (búsqueda binaria sobre la CDF)"""

    def __init__(self, table: sp.csr_matrix):
        table = sp.csr_matrix(table)
        table.sort_indices()
        self.indptr = table.indptr
        self.indices = table.indices.astype(np.int64)
        self.cdf = np.zeros(table.nnz, dtype=np.float64)
        for u in range(table.shape[0]):
            start, end = self.indptr[u], self.indptr[u + 1]
            if end > start:
                self.cdf[start:end] = np.cumsum(table.data[start:end])

    def has_row(self, u: int) -> bool:
        return self.indptr[u + 1] > self.indptr[u]

    def draw(self, u: int, r: float) -> int:
        start, end = self.indptr[u], self.indptr[u + 1]
        segment = self.cdf[start:end]
        k = int(np.searchsorted(segment, r * segment[-1], side='right'))
        return int(self.indices[start + min(k, end - start - 1)])


@dataclass
class WalkSet:
    """Caminatas generadas junto con su clave (nodo inicial, índice de caminata)"""
    walks: List[np.ndarray]
    keys: List[Tuple[int, int]]
    stats: SamplerStats = field(default_factory=SamplerStats)

    def __len__(self) -> int:
        return len(self.walks)

    def __iter__(self):
        return iter(self.walks)

    def in_canonical_order(self) -> List[np.ndarray]:
        """Caminatas ordenadas por (nodo, índice de caminata), para el volcado a archivo"""
        order = sorted(range(len(self.walks)), key=lambda i: self.keys[i])
        return [self.walks[i] for i in order]


def _single_walk(start: int, length: int, alpha: float,
                 topo: _RowSampler, attr: _RowSampler,
                 rng: np.random.Generator, stats: SamplerStats) -> np.ndarray:
    coins = rng.random(length)
    picks = rng.random(length)
    walk = [start]
    u = start
    for i in range(length):
        teleport = coins[i] < alpha
        primary, secondary = (attr, topo) if teleport else (topo, attr)
        if primary.has_row(u):
            table = primary
        elif secondary.has_row(u) and (teleport or alpha > 0.0):
            # con alpha = 0 la caminata es puramente topológica
            table = secondary
            stats.fallback_steps += 1
        else:
            stats.truncated_walks += 1
            break
        if table is attr:
            stats.teleport_steps += 1
        else:
            stats.topological_steps += 1
        u = table.draw(u, picks[i])
        walk.append(u)
    return np.asarray(walk, dtype=np.int64)


def generate_walks(tables: TransitionTables, config: WalkConfig,
                   stats: Optional[SamplerStats] = None,
                   progress: bool = False) -> WalkSet:
    """
    Genera s caminatas por nodo con teletransporte por atributos

    Cada paso sale de Ȳ con probabilidad α y de W̄ con probabilidad 1-α.
    Si la fila elegida es cero se usa la otra; si ambas lo son la caminata
    termina antes de tiempo.

    Args:
        tables: Tablas de transición normalizadas
        config: Parámetros de caminata
        stats: Contadores a actualizar (opcional)
        progress: Mostrar barra de progreso

    Returns:
        WalkSet en el orden barajado de generación
    """
    config.validate()
    stats = stats if stats is not None else SamplerStats()
    topo = _RowSampler(tables.topo)
    attr = _RowSampler(tables.attr)
    n = tables.num_nodes

    order_rng = stream_rng(config.seed, 'order')
    walks: List[np.ndarray] = []
    keys: List[Tuple[int, int]] = []
    with tqdm(total=n * config.num_walks_per_node, desc='Caminatas', disable=not progress) as bar:
        for walk_index in range(config.num_walks_per_node):
            for start in order_rng.permutation(n):
                start = int(start)
                rng = stream_rng(config.seed, 'walks', start, walk_index)
                walks.append(_single_walk(start, config.walk_length, config.alpha, topo, attr, rng, stats))
                keys.append((start, walk_index))
                bar.update(1)

    stats.walks += len(walks)
    logger.info(f"✅ {len(walks)} caminatas generadas ({stats.truncated_walks} truncadas, "
                f"fracción de teletransporte {stats.teleport_fraction:.3f})")
    return WalkSet(walks=walks, keys=keys, stats=stats)


@dataclass
class PairCorpus:
    """Multiconjunto D de pares fuente-contexto y distribución de ruido"""
    pairs: np.ndarray
    occurrence_counts: np.ndarray
    noise_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        self.occurrence_counts = np.asarray(self.occurrence_counts, dtype=np.int64)
        self.noise_weights = self.occurrence_counts.astype(np.float64) ** NOISE_EXPONENT
        self._noise_cdf = np.cumsum(self.noise_weights)
        n = self.num_nodes
        self._pair_keys = np.unique(self.pairs[:, 0] * n + self.pairs[:, 1])

    @property
    def num_nodes(self) -> int:
        return int(self.occurrence_counts.shape[0])

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    def contains(self, sources: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """Pertenencia vectorizada de (u, x) a D"""
        keys = np.asarray(sources, dtype=np.int64) * self.num_nodes + np.asarray(targets, dtype=np.int64)
        if self._pair_keys.size == 0:
            return np.zeros(keys.shape, dtype=bool)
        pos = np.searchsorted(self._pair_keys, keys)
        pos = np.minimum(pos, self._pair_keys.size - 1)
        return self._pair_keys[pos] == keys

    def noise_probabilities(self) -> np.ndarray:
        total = self.noise_weights.sum()
        return self.noise_weights / total if total > 0 else self.noise_weights.copy()

    def entropy(self) -> float:
        """Entropía (nats) de la distribución de apariciones de nodos"""
        total = self.occurrence_counts.sum()
        if total == 0:
            return 0.0
        p = self.occurrence_counts[self.occurrence_counts > 0] / total
        return float(-(p * np.log(p)).sum())

    def draw_noise(self, rng: np.random.Generator, size) -> np.ndarray:
        total = self._noise_cdf[-1] if self._noise_cdf.size else 0.0
        if total <= 0:
            raise SamplerError("Distribución de ruido vacía: ningún nodo aparece en las caminatas")
        idx = np.searchsorted(self._noise_cdf, rng.random(size) * total, side='right')
        return np.minimum(idx, self.num_nodes - 1)


def extract_pairs(walks: Union[WalkSet, Sequence[Sequence[int]]], context_size: int,
                  num_nodes: Optional[int] = None,
                  stats: Optional[SamplerStats] = None) -> PairCorpus:
    """
    Recorre las caminatas con una ventana deslizante y construye D

    Ambas orientaciones de cada par entran en D; los pares (u, u) se omiten.

    Args:
        walks: Caminatas (WalkSet o secuencias de índices)
        context_size: Tamaño de ventana c
        num_nodes: Número de nodos N (por defecto, máximo índice + 1)
        stats: Contadores a actualizar (opcional)

    Returns:
        PairCorpus con pares, conteos de aparición y pesos de ruido
    """
    if isinstance(walks, WalkSet):
        stats = stats if stats is not None else walks.stats
        walks = walks.walks
    arrays = [np.asarray(w, dtype=np.int64) for w in walks]
    if not arrays:
        raise SamplerError("No hay caminatas de las que extraer pares")
    if context_size < 1:
        raise SamplerError(f"context_size debe ser >= 1: {context_size}")

    chunks: List[np.ndarray] = []
    for walk in arrays:
        for offset in range(1, min(context_size, len(walk) - 1) + 1):
            left, right = walk[:-offset], walk[offset:]
            keep = left != right
            forward = np.column_stack([left[keep], right[keep]])
            chunks.append(forward)
            chunks.append(forward[:, ::-1])
    pairs = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)

    positions = np.concatenate(arrays)
    if num_nodes is None:
        num_nodes = int(positions.max()) + 1
    counts = np.bincount(positions, minlength=num_nodes)
    corpus = PairCorpus(pairs=pairs, occurrence_counts=counts)

    if stats is not None:
        stats.pairs = len(corpus)
        stats.corpus_entropy = corpus.entropy()
    logger.info(f"📊 |D| = {len(corpus)} pares a partir de {len(arrays)} caminatas")
    return corpus


def draw_negatives(corpus: PairCorpus, sources: Iterable[int], m: int,
                   rng: np.random.Generator,
                   stats: Optional[SamplerStats] = None) -> np.ndarray:
    """
    Dibuja m negativos por fuente con reemplazo según noise_weights

    Se rechaza y se vuelve a dibujar cualquier x con x = u o (u, x) ∈ D,
    hasta MAX_REJECTION_ATTEMPTS intentos por posición; después se acepta.

    Returns:
        Matriz (len(sources), m) de índices de nodo
    """
    if m < 1:
        raise SamplerError(f"m debe ser >= 1: {m}")
    sources = np.asarray(list(sources) if not isinstance(sources, np.ndarray) else sources, dtype=np.int64)
    draws = corpus.draw_noise(rng, (sources.size, m))
    grid = np.broadcast_to(sources[:, None], draws.shape)

    rejected = (draws == grid) | corpus.contains(grid, draws)
    attempts = 0
    while rejected.any() and attempts < MAX_REJECTION_ATTEMPTS:
        redrawn = corpus.draw_noise(rng, int(rejected.sum()))
        draws[rejected] = redrawn
        rows = grid[rejected]
        rejected[rejected] = (redrawn == rows) | corpus.contains(rows, redrawn)
        attempts += 1

    hits = int(rejected.sum())
    if hits and stats is not None:
        stats.rejection_cap_hits += hits
    return draws


def sample_negatives(corpus: PairCorpus, u: int, v: int, m: int,
                     rng: np.random.Generator,
                     stats: Optional[SamplerStats] = None) -> np.ndarray:
    """
    Conjunto de candidatos S_m(u, v): m negativos seguidos del contexto v

    Returns:
        Vector de m + 1 índices con v en la última posición
    """
    negatives = draw_negatives(corpus, np.array([u], dtype=np.int64), m, rng, stats)[0]
    return np.append(negatives, np.int64(v))
