#!/usr/bin/env python3
"""
Embedding Store - HYPEREMBED
Lectura y escritura de todos los archivos del pipeline: embeddings,
proyecciones, caminatas, listas de aristas, trazas de pérdida, manifiestos,
resultados y bloques de estadísticas
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.graph_loader import AttributedGraph
from src.hyperboloid_geometry import constraint_residual
from src.hyperboloid_optimizer import HyperboloidEmbedding

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FLOAT_FORMAT = '%.17g'
EMBEDDING_TOLERANCE = 1e-6


class EmbeddingFileError(ValueError):
    """Archivo de embedding o de resultados mal formado"""

    def __init__(self, message: str, path: PathLike = '', row: int = -1):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = str(path)
        self.row = row


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    path = _prepare(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def write_embedding(path: PathLike, node_ids: Sequence[str], emb: HyperboloidEmbedding) -> Path:
    """CSV `id,x0,...,xn` con 17 dígitos significativos"""
    columns = [f"x{k}" for k in range(emb.dimension + 1)]
    frame = pd.DataFrame(emb.points, columns=columns)
    frame.insert(0, 'id', list(node_ids))
    path = _write_frame(frame, path)
    logger.info(f"💾 Embedding guardado en: {path}")
    return path


def read_embedding(path: PathLike, sigma: float = 1.0) -> Tuple[List[str], HyperboloidEmbedding]:
    """
    Lee un CSV de embedding y verifica la restricción del hiperboloide

    Raises:
        EmbeddingFileError: Cabecera inválida, valores no numéricos o filas
            con |⟨x, x⟩ + 1| > 1e-6 (se indica la fila)
    """
    path = Path(path)
    if not path.exists():
        raise EmbeddingFileError("archivo no encontrado", path)
    try:
        frame = pd.read_csv(path, dtype={'id': str}, keep_default_na=False, encoding='utf-8-sig',
                            float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise EmbeddingFileError(f"CSV ilegible ({e})", path) from None

    expected = ['id'] + [f"x{k}" for k in range(len(frame.columns) - 1)]
    if list(frame.columns) != expected or len(frame.columns) < 4:
        raise EmbeddingFileError("la cabecera debe ser 'id,x0,x1,...,xn' con n >= 2", path)
    try:
        points = frame.iloc[:, 1:].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise EmbeddingFileError(f"valor no numérico ({e})", path) from None
    if not np.isfinite(points).all():
        row = int(np.argmax(~np.isfinite(points).all(axis=1)))
        raise EmbeddingFileError(f"fila {row + 1} ({frame['id'].iloc[row]}) no finita", path, row + 1)

    residual = constraint_residual(points)
    if (residual > EMBEDDING_TOLERANCE).any():
        row = int(np.argmax(residual > EMBEDDING_TOLERANCE))
        raise EmbeddingFileError(
            f"fila {row + 1} ({frame['id'].iloc[row]}) fuera del hiperboloide (residuo {residual[row]:.3e})",
            path, row + 1)
    return frame['id'].astype(str).tolist(), HyperboloidEmbedding(points=points, sigma=sigma)


def align_embedding(node_ids: Sequence[str], emb: HyperboloidEmbedding,
                    graph: AttributedGraph) -> HyperboloidEmbedding:
    """Reordena las filas del embedding según los índices del grafo"""
    position = {node_id: i for i, node_id in enumerate(node_ids)}
    missing = [node_id for node_id in graph.node_ids if node_id not in position]
    if missing:
        raise EmbeddingFileError(f"el embedding no contiene el nodo {missing[0]!r}")
    order = [position[node_id] for node_id in graph.node_ids]
    return HyperboloidEmbedding(points=emb.points[order], sigma=emb.sigma)


def write_projection(path: PathLike, node_ids: Sequence[str], coordinates: np.ndarray) -> Path:
    """CSV `id,k1,...,kn` de coordenadas proyectadas"""
    columns = [f"k{k}" for k in range(1, coordinates.shape[1] + 1)]
    frame = pd.DataFrame(coordinates, columns=columns)
    frame.insert(0, 'id', list(node_ids))
    path = _write_frame(frame, path)
    logger.info(f"💾 Proyección guardada en: {path}")
    return path


def write_node_map(path: PathLike, node_ids: Sequence[str]) -> Path:
    frame = pd.DataFrame({'index': np.arange(len(node_ids)), 'id': list(node_ids)})
    return _write_frame(frame, path)


def write_loss_trace(path: PathLike, loss_trace: Sequence[float]) -> Path:
    frame = pd.DataFrame({'epoch': np.arange(1, len(loss_trace) + 1), 'mean_loss': list(loss_trace)})
    return _write_frame(frame, path)


def write_walks(path: PathLike, walks: Iterable[np.ndarray], node_ids: Sequence[str]) -> Path:
    """Una caminata por línea con ids externos separados por espacios"""
    path = _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for walk in walks:
            f.write(' '.join(node_ids[int(u)] for u in walk) + '\n')
    logger.info(f"💾 Caminatas guardadas en: {path}")
    return path


def write_edge_list(path: PathLike, edges: np.ndarray, node_ids: Sequence[str],
                    weights: Union[np.ndarray, None] = None) -> Path:
    """Lista de aristas `src dst [weight]` con ids externos"""
    path = _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for i, (u, v) in enumerate(np.asarray(edges, dtype=np.int64).reshape(-1, 2)):
            line = f"{node_ids[u]} {node_ids[v]}"
            if weights is not None:
                line += f" {FLOAT_FORMAT % weights[i]}"
            f.write(line + '\n')
    return path


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(v) for v in value)
    return str(value)


def write_key_values(path: PathLike, values: Mapping[str, Any]) -> Path:
    """Archivo clave=valor con claves ordenadas (manifiestos y estadísticas)"""
    path = _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for key in sorted(values):
            f.write(f"{key}={format_value(values[key])}\n")
    return path


def read_key_values(path: PathLike) -> Dict[str, str]:
    """Lee un archivo clave=valor; ignora líneas vacías y comentarios"""
    path = Path(path)
    if not path.exists():
        raise EmbeddingFileError("archivo no encontrado", path)
    values: Dict[str, str] = {}
    with open(path, 'r', encoding='utf-8-sig') as f:
        for line_number, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise EmbeddingFileError(f"línea {line_number} sin '='", path, line_number)
            key, value = line.split('=', 1)
            values[key.strip()] = value.strip()
    return values


def write_text(path: PathLike, text: str) -> Path:
    path = _prepare(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    return path


def append_results(path: PathLike, rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> Path:
    """
    Añade filas al CSV de resultados, escribiendo la cabecera si es nuevo

    Los reales se escriben con su representación exacta más corta.
    """
    path = _prepare(path)
    formatted = [{key: format_value(row.get(key, '')) for key in columns} for row in rows]
    frame = pd.DataFrame(formatted, columns=list(columns))
    new_file = not path.exists() or path.stat().st_size == 0
    frame.to_csv(path, mode='a', header=new_file, index=False, lineterminator='\n')
    logger.info(f"📊 {len(frame)} filas añadidas a: {path}")
    return path
