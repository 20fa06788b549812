#!/usr/bin/env python3
"""
Hyperboloid Geometry - HYPEREMBED
Primitivas exactas del modelo del hiperboloide (ψ = 1, curvatura -1)

Todas las funciones operan sobre el último eje, así que aceptan tanto un
punto (n+1,) como lotes (..., n+1). El índice 0 es la coordenada temporal.
"""

import numpy as np

# Tope de la norma del paso tangente antes del mapa exponencial
MAX_TANGENT_STEP = 1.0
ZERO_NORM_CUTOFF = 1e-12


class GeometryError(ValueError):
    """Entrada inválida para una operación geométrica"""


def minkowski_inner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Forma bilineal de Minkowski ⟨x, y⟩ = -x⁰y⁰ + Σ xᵏyᵏ

    Args:
        x: Vector(es) de longitud n+1
        y: Vector(es) de longitud n+1

    Returns:
        Producto por cada vector del lote
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != y.shape[-1]:
        raise GeometryError(f"Longitudes distintas: {x.shape[-1]} != {y.shape[-1]}")
    if x.shape[-1] < 2:
        raise GeometryError("Se necesitan al menos 2 coordenadas")
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def constraint_residual(x: np.ndarray) -> np.ndarray:
    """|⟨x, x⟩ + 1| por punto"""
    return np.abs(minkowski_inner(x, x) + 1.0)


def arccosh_clamped(z: np.ndarray) -> np.ndarray:
    """arccosh(max(z, 1)) evaluado como log1p para precisión cerca de 1"""
    q = np.maximum(np.asarray(z, dtype=np.float64) - 1.0, 0.0)
    return np.log1p(q + np.sqrt(q * (q + 2.0)))


def distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Distancia geodésica arccosh(-⟨x, y⟩)

    El argumento se evalúa como 1 + ⟨x-y, x-y⟩/2, que coincide con -⟨x, y⟩
    sobre el hiperboloide y vale exactamente 1 cuando x = y; se recorta a >= 1.
    """
    diff = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    half_sq = 0.5 * minkowski_inner(diff, diff)
    return arccosh_clamped(1.0 + half_sq)


def pairwise_distances(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Matriz de distancias entre dos conjuntos de puntos (para puntuar pares)"""
    a = np.asarray(points_a, dtype=np.float64)
    b = np.asarray(points_b, dtype=np.float64)
    inner = -np.outer(a[:, 0], b[:, 0]) + a[:, 1:] @ b[:, 1:].T
    return arccosh_clamped(-inner)


def project_to_tangent(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    Proyección al espacio tangente: g + ⟨x, g⟩·x

    Returns:
        Dirección tangente en x (⟨x, resultado⟩ = 0)
    """
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return g + minkowski_inner(x, g)[..., None] * x


def tangent_norm(v: np.ndarray) -> np.ndarray:
    """Norma de Minkowski de vectores tangentes (real y >= 0)"""
    return np.sqrt(np.maximum(minkowski_inner(v, v), 0.0))


def clip_tangent(v: np.ndarray, max_norm: float = MAX_TANGENT_STEP) -> np.ndarray:
    """Escala los vectores tangentes cuya norma excede max_norm"""
    v = np.asarray(v, dtype=np.float64)
    norms = tangent_norm(v)
    scale = np.where(norms > max_norm, max_norm / np.where(norms > 0, norms, 1.0), 1.0)
    return v * scale[..., None]


def reproject(x: np.ndarray) -> np.ndarray:
    """
    Recalcula x⁰ = sqrt(1 + Σ (xᵏ)²) sin tocar la parte espacial

    Raises:
        GeometryError: Si la parte espacial no es finita
    """
    x = np.array(x, dtype=np.float64)
    spatial = x[..., 1:]
    if not np.isfinite(spatial).all():
        raise GeometryError("Coordenadas espaciales no finitas")
    x[..., 0] = np.sqrt(1.0 + np.sum(spatial * spatial, axis=-1))
    return x


def exp_map(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    Mapa exponencial Exp_x(v) = cosh(‖v‖)·x + sinh(‖v‖)·v/‖v‖

    Los vectores con ‖v‖ < 1e-12 devuelven x sin cambios; el resultado se
    reproyecta al hiperboloide.
    """
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    norm = tangent_norm(v)
    moving = norm >= ZERO_NORM_CUTOFF
    safe = np.where(moving, norm, 1.0)[..., None]
    moved = reproject(np.cosh(safe) * x + np.sinh(safe) * (v / safe))
    return np.where(moving[..., None], moved, x)


def to_poincare(x: np.ndarray) -> np.ndarray:
    """Proyección estereográfica a la bola de Poincaré: xₛ / (1 + x⁰)"""
    x = np.asarray(x, dtype=np.float64)
    return x[..., 1:] / (1.0 + x[..., :1])


def to_klein(x: np.ndarray) -> np.ndarray:
    """Proyección gnomónica al modelo de Klein: xₛ / x⁰"""
    x = np.asarray(x, dtype=np.float64)
    return x[..., 1:] / x[..., :1]


def from_poincare(p: np.ndarray) -> np.ndarray:
    """Levanta un punto de la bola de Poincaré al hiperboloide"""
    p = np.asarray(p, dtype=np.float64)
    sq = np.sum(p * p, axis=-1, keepdims=True)
    denom = 1.0 - sq
    return np.concatenate([(1.0 + sq) / denom, 2.0 * p / denom], axis=-1)


def from_klein(k: np.ndarray) -> np.ndarray:
    """Levanta un punto del disco de Klein al hiperboloide"""
    k = np.asarray(k, dtype=np.float64)
    time = 1.0 / np.sqrt(1.0 - np.sum(k * k, axis=-1, keepdims=True))
    return np.concatenate([time, k * time], axis=-1)
