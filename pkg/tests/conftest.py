"""
Fixtures compartidas de las pruebas de HYPEREMBED
"""

import sys
from pathlib import Path
from typing import Iterable

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT))

from src.hyperboloid_geometry import reproject  # noqa: E402
from src.hyperboloid_optimizer import HyperboloidEmbedding  # noqa: E402

DATA_DIR = ROOT / 'data'


@pytest.fixture
def tree_paths():
    """Rutas del árbol binario de 63 nodos incluido"""
    return {
        'edges': DATA_DIR / 'binary_tree_63.edgelist',
        'attributes': DATA_DIR / 'binary_tree_63.attributes.csv',
        'labels': DATA_DIR / 'binary_tree_63.labels.csv',
    }


@pytest.fixture
def write_file(tmp_path):
    """Escribe líneas en un archivo temporal y devuelve su ruta"""
    def _write(name: str, lines: Iterable[str]) -> Path:
        path = tmp_path / name
        path.write_text(''.join(f"{line}\n" for line in lines), encoding='utf-8')
        return path
    return _write


def _geodesic_point(t: float, dimension: int = 2) -> np.ndarray:
    point = np.zeros(dimension + 1)
    point[0] = np.cosh(t)
    point[1] = np.sinh(t)
    return point


def _random_embedding(num_nodes: int, dimension: int, rng: np.random.Generator,
                      scale: float = 1.0, sigma: float = 1.0) -> HyperboloidEmbedding:
    spatial = rng.normal(scale=scale, size=(num_nodes, dimension))
    points = reproject(np.concatenate([np.zeros((num_nodes, 1)), spatial], axis=1))
    return HyperboloidEmbedding(points=points, sigma=sigma)


@pytest.fixture
def geodesic_point():
    """Punto a distancia t del origen sobre el primer eje espacial"""
    return _geodesic_point


@pytest.fixture
def random_embedding():
    """Embedding aleatorio ya proyectado al hiperboloide"""
    return _random_embedding
