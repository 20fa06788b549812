#!/usr/bin/env python3
"""
Graph Loader - HYPEREMBED
Carga, valida y preprocesa redes con atributos: adyacencia, atributos,
etiquetas, similitud de atributos y tablas de transición
"""

import io
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

logger = logging.getLogger(__name__)

# Por encima de este número de nodos Y se calcula por bloques de filas
DEFAULT_DENSE_SIMILARITY_LIMIT = 20000
SIMILARITY_BLOCK_ROWS = 1024
SIMILARITY_TOP_K = 100
ROW_SUM_TOLERANCE = 1e-9

Source = Union[str, Path, io.IOBase]


class GraphDataError(ValueError):
    """Error en los datos de entrada de la red"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True)
class AttributedGraph:
    """Red con pesos, atributos y etiquetas opcionales (inmutable)"""
    node_ids: Tuple[str, ...]
    weights: sp.csr_matrix
    attributes: Optional[np.ndarray] = None
    labels: Optional[Dict[int, FrozenSet[str]]] = None
    multilabel: bool = False
    stats: Dict[str, int] = field(default_factory=dict)

    @cached_property
    def index(self) -> Dict[str, int]:
        """Mapa id externo -> índice denso"""
        return {node_id: i for i, node_id in enumerate(self.node_ids)}

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @cached_property
    def edges(self) -> np.ndarray:
        """Aristas no dirigidas (u < v), una fila por arista, en orden lexicográfico"""
        upper = sp.triu(self.weights, k=1).tocoo()
        pairs = np.column_stack([upper.row, upper.col]).astype(np.int64)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def has_attributes(self) -> bool:
        return self.attributes is not None

    @property
    def attribute_dim(self) -> int:
        return 0 if self.attributes is None else int(self.attributes.shape[1])

    def has_edge(self, u: int, v: int) -> bool:
        return self.weights[u, v] > 0

    def with_edges(self, edges: np.ndarray) -> 'AttributedGraph':
        """
        Grafo con el mismo conjunto de nodos restringido a las aristas dadas

        Args:
            edges: Pares (u, v) no dirigidos que se conservan

        Returns:
            Nuevo AttributedGraph; los pesos se toman del grafo original
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = self.num_nodes
        if edges.shape[0] == 0:
            restricted = sp.csr_matrix((n, n), dtype=np.float64)
        else:
            w = np.asarray(self.weights[edges[:, 0], edges[:, 1]]).ravel()
            rows = np.concatenate([edges[:, 0], edges[:, 1]])
            cols = np.concatenate([edges[:, 1], edges[:, 0]])
            restricted = sp.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))
        restricted.sort_indices()
        return replace(self, weights=restricted, stats=dict(self.stats))


@dataclass(frozen=True)
class TransitionTables:
    """Matrices estocásticas por filas para los pasos de la caminata"""
    topo: sp.csr_matrix
    attr: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return int(self.topo.shape[0])

    def validate(self) -> None:
        """Verifica que cada fila sume 1 o sea completamente cero"""
        for name, table in (('topo', self.topo), ('attr', self.attr)):
            sums = np.asarray(table.sum(axis=1)).ravel()
            bad = ~(np.isclose(sums, 0.0, atol=ROW_SUM_TOLERANCE)
                    | np.isclose(sums, 1.0, atol=ROW_SUM_TOLERANCE))
            if bad.any():
                raise GraphDataError(f"Tabla {name}: la fila {int(np.argmax(bad))} no es estocástica")


def _open_lines(source: Union[Source, Iterable[str]]) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        with open(source, 'r', encoding='utf-8-sig') as f:
            yield from f
    else:
        yield from source


def _parse_edges(lines: Iterable[str]) -> Tuple[List[str], Dict[Tuple[int, int], float], Dict[str, int]]:
    """Lee registros `src dst [weight]` y acumula pesos por orientación"""
    index: Dict[str, int] = {}
    node_ids: List[str] = []
    oriented: Dict[Tuple[int, int], float] = {}
    counts = {'self_loops_dropped': 0, 'duplicate_edges': 0, 'edge_lines': 0}

    def register(node_id: str) -> int:
        if node_id not in index:
            index[node_id] = len(node_ids)
            node_ids.append(node_id)
        return index[node_id]

    for line_number, raw in enumerate(lines, 1):
        line = raw.lstrip('\ufeff').strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphDataError(
                f"Línea {line_number}: se esperaba 'src dst [weight]', se obtuvo {line!r}",
                line_number=line_number)
        weight = 1.0
        if len(parts) == 3:
            try:
                weight = float(parts[2])
            except ValueError:
                raise GraphDataError(f"Línea {line_number}: peso no numérico {parts[2]!r}",
                                     line_number=line_number) from None
            if not np.isfinite(weight):
                raise GraphDataError(f"Línea {line_number}: peso no finito", line_number=line_number)
            if weight < 0:
                raise GraphDataError(f"Línea {line_number}: peso negativo {weight}", line_number=line_number)
            if weight == 0:
                raise GraphDataError(f"Línea {line_number}: peso cero", line_number=line_number)

        counts['edge_lines'] += 1
        u, v = register(parts[0]), register(parts[1])
        if u == v:
            counts['self_loops_dropped'] += 1
            continue
        if (u, v) in oriented:
            counts['duplicate_edges'] += 1
            oriented[(u, v)] += weight
        else:
            oriented[(u, v)] = weight

    return node_ids, oriented, counts


def _symmetric_weights(num_nodes: int, oriented: Dict[Tuple[int, int], float]) -> sp.csr_matrix:
    # Las dos orientaciones de un par se fusionan con el mayor peso acumulado
    undirected: Dict[Tuple[int, int], float] = {}
    for (u, v), w in oriented.items():
        key = (u, v) if u < v else (v, u)
        undirected[key] = max(undirected.get(key, 0.0), w)

    if not undirected:
        return sp.csr_matrix((num_nodes, num_nodes), dtype=np.float64)
    keys = np.array(list(undirected.keys()), dtype=np.int64)
    values = np.array(list(undirected.values()), dtype=np.float64)
    rows = np.concatenate([keys[:, 0], keys[:, 1]])
    cols = np.concatenate([keys[:, 1], keys[:, 0]])
    weights = sp.csr_matrix((np.concatenate([values, values]), (rows, cols)),
                            shape=(num_nodes, num_nodes))
    weights.sort_indices()
    return weights


def _read_table(source: Source) -> pd.DataFrame:
    table = pd.read_csv(source, dtype=str, keep_default_na=False, encoding='utf-8-sig')
    table.columns = [str(c).lstrip('\ufeff').strip() for c in table.columns]
    return table


def _load_attributes(source: Source, index: Dict[str, int], stats: Dict[str, int]) -> np.ndarray:
    table = _read_table(source)
    if len(table.columns) < 2 or table.columns[0] != 'id':
        raise GraphDataError("Archivo de atributos: la cabecera debe ser 'id,f1,...,fd'")

    ids = table.iloc[:, 0].str.strip()
    unknown = [node_id for node_id in ids if node_id not in index]
    if unknown:
        raise GraphDataError(f"Archivo de atributos: nodo desconocido {unknown[0]!r}")
    duplicated = ids[ids.duplicated()]
    if len(duplicated):
        raise GraphDataError(f"Archivo de atributos: fila duplicada para {duplicated.iloc[0]!r}")

    try:
        values = table.iloc[:, 1:].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise GraphDataError(f"Archivo de atributos: valor no numérico ({e})") from None
    if not np.isfinite(values).all():
        raise GraphDataError("Archivo de atributos: valores no finitos")

    attributes = np.zeros((len(index), values.shape[1]), dtype=np.float64)
    attributes[[index[node_id] for node_id in ids]] = values
    stats['nodes_without_attributes'] = len(index) - len(ids)
    if stats['nodes_without_attributes']:
        logger.warning(f"⚠️ {stats['nodes_without_attributes']} nodos sin atributos (vector cero)")
    return attributes


def _load_labels(source: Source, index: Dict[str, int]) -> Tuple[Dict[int, FrozenSet[str]], bool]:
    table = _read_table(source)
    if list(table.columns[:2]) != ['id', 'label']:
        raise GraphDataError("Archivo de etiquetas: la cabecera debe ser 'id,label'")

    labels: Dict[int, FrozenSet[str]] = {}
    multilabel = False
    for node_id, raw in zip(table['id'].str.strip(), table['label']):
        if node_id not in index:
            raise GraphDataError(f"Archivo de etiquetas: nodo desconocido {node_id!r}")
        if index[node_id] in labels:
            raise GraphDataError(f"Archivo de etiquetas: fila duplicada para {node_id!r}")
        if ';' in raw:
            multilabel = True
        values = frozenset(part.strip() for part in raw.split(';') if part.strip())
        if values:
            labels[index[node_id]] = values
    return labels, multilabel


def load_graph(edge_source: Union[Source, Iterable[str]],
               attribute_source: Optional[Source] = None,
               label_source: Optional[Source] = None) -> AttributedGraph:
    """
    Carga una red con atributos desde archivos preparados

    Args:
        edge_source: Lista de aristas `src dst [weight]` (ruta o líneas)
        attribute_source: CSV `id,f1,...,fd` opcional
        label_source: CSV `id,label` opcional (multietiqueta separada por ';')

    Returns:
        AttributedGraph con todos sus invariantes verificados
    """
    node_ids, oriented, stats = _parse_edges(_open_lines(edge_source))
    if stats['duplicate_edges']:
        logger.warning(f"⚠️ {stats['duplicate_edges']} aristas duplicadas: pesos sumados")
    if stats['self_loops_dropped']:
        logger.warning(f"⚠️ {stats['self_loops_dropped']} auto-lazos descartados")

    index = {node_id: i for i, node_id in enumerate(node_ids)}
    weights = _symmetric_weights(len(node_ids), oriented)

    attributes = _load_attributes(attribute_source, index, stats) if attribute_source is not None else None
    labels, multilabel = (_load_labels(label_source, index) if label_source is not None else (None, False))

    graph = AttributedGraph(
        node_ids=tuple(node_ids),
        weights=weights,
        attributes=attributes,
        labels=labels,
        multilabel=multilabel,
        stats=stats,
    )
    stats['nodes'] = graph.num_nodes
    stats['edges'] = graph.num_edges
    stats['attribute_dim'] = graph.attribute_dim
    logger.info(f"✅ Red cargada: N={graph.num_nodes}, |E|={graph.num_edges}, d={graph.attribute_dim}")
    return graph


def standardize_attributes(graph: AttributedGraph) -> AttributedGraph:
    """
    Estandariza cada columna de atributos a media 0 y desviación típica 1

    Usa la desviación poblacional; las columnas constantes quedan en cero.
    """
    if graph.attributes is None:
        raise GraphDataError("No hay atributos que estandarizar")

    x = graph.attributes
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < 1e-12
    scale = np.where(constant, 1.0, std)
    standardized = (x - mean) / scale
    standardized[:, constant] = 0.0
    if constant.any():
        logger.info(f"📊 {int(constant.sum())} columnas constantes -> cero")
    return replace(graph, attributes=standardized, stats=dict(graph.stats))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    return np.divide(x, norms[:, None], out=np.zeros_like(x), where=norms[:, None] > 0)


def attribute_similarity(graph: AttributedGraph,
                         dense_limit: int = DEFAULT_DENSE_SIMILARITY_LIMIT,
                         block_rows: int = SIMILARITY_BLOCK_ROWS,
                         top_k: int = SIMILARITY_TOP_K) -> Union[np.ndarray, sp.csr_matrix]:
    """
    Similitud coseno recortada a [0, 1] con diagonal cero

    Por encima de dense_limit nodos se calcula por bloques de filas y cada
    fila conserva solo sus top_k similitudes positivas; el resultado se
    simetriza con el máximo, así que tiene a lo sumo 2·top_k·N entradas.

    Args:
        graph: Red con atributos
        dense_limit: Máximo de nodos para materializar Y densa
        block_rows: Filas por bloque en el cálculo por flujo
        top_k: Vecinos por fila que se conservan en el cálculo por flujo

    Returns:
        Matriz Y simétrica (densa hasta dense_limit nodos, CSR por encima)
    """
    if graph.attributes is None:
        raise GraphDataError("La similitud de atributos requiere atributos")
    if top_k < 1:
        raise GraphDataError(f"top_k debe ser >= 1: {top_k}")

    unit = _unit_rows(graph.attributes)
    n = graph.num_nodes
    if n <= dense_limit:
        similarity = np.clip(unit @ unit.T, 0.0, 1.0)
        similarity = (similarity + similarity.T) * 0.5
        np.fill_diagonal(similarity, 0.0)
        return similarity

    logger.info(f"🔄 Similitud por bloques de {block_rows} filas, top-{top_k} por fila (N={n})")
    rows, cols, values = [], [], []
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        block = np.clip(unit[start:stop] @ unit.T, 0.0, 1.0)
        local = np.arange(stop - start)
        block[local, np.arange(start, stop)] = 0.0
        if top_k < n:
            kept = np.argpartition(-block, top_k - 1, axis=1)[:, :top_k]
        else:
            kept = np.broadcast_to(np.arange(n), block.shape)
        picked = block[local[:, None], kept]
        positive = picked > 0
        rows.append(np.broadcast_to((start + local)[:, None], kept.shape)[positive])
        cols.append(kept[positive])
        values.append(picked[positive])

    similarity = sp.csr_matrix((np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n))
    similarity = similarity.maximum(similarity.T).tocsr()
    similarity.sort_indices()
    logger.info(f"📊 Similitud dispersa: {similarity.nnz} entradas")
    return similarity


def _row_normalize(matrix: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    inverse = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    normalized = (sp.diags(inverse) @ matrix).tocsr()
    normalized.sort_indices()
    return normalized


def build_transition_tables(graph: AttributedGraph,
                            similarity: Optional[Union[np.ndarray, sp.spmatrix]] = None) -> TransitionTables:
    """
    Normaliza por filas W e Y (las filas cero siguen siendo cero)

    Args:
        graph: Red cargada
        similarity: Matriz Y; None deshabilita el teletransporte

    Returns:
        TransitionTables con topo = W̄ y attr = Ȳ
    """
    topo = _row_normalize(graph.weights.astype(np.float64).tocsr())

    n = graph.num_nodes
    if similarity is None:
        attr = sp.csr_matrix((n, n), dtype=np.float64)
    else:
        y = sp.csr_matrix(similarity, dtype=np.float64)
        y = (y - sp.diags(y.diagonal())).tocsr()
        y.eliminate_zeros()
        attr = _row_normalize(y)

    tables = TransitionTables(topo=topo, attr=attr)
    tables.validate()
    logger.info(f"✅ Tablas de transición: {topo.nnz} entradas topológicas, {attr.nnz} de atributos")
    return tables
