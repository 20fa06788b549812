#!/usr/bin/env python3
"""
Seeding - HYPEREMBED
Flujos aleatorios con nombre derivados de una semilla maestra
"""

from typing import Dict

import numpy as np

# Identificadores fijos: cambiarlos rompe la reproducibilidad de resultados previos
STREAMS: Dict[str, int] = {
    'walks': 1,
    'order': 2,
    'shuffle': 3,
    'negatives': 4,
    'split': 5,
    'init': 6,
    'classifier': 7,
    'reconstruction': 8,
}


def stream_seed(seed: int, stream: str, *keys: int) -> np.random.SeedSequence:
    """
    Construye la SeedSequence de un flujo con nombre

    Args:
        seed: Semilla maestra (entero sin signo de 64 bits)
        stream: Nombre del flujo (ver STREAMS)
        keys: Claves adicionales (nodo, índice de caminata, época...)

    Returns:
        SeedSequence independiente para (seed, stream, keys)
    """
    if stream not in STREAMS:
        raise KeyError(f"Flujo aleatorio desconocido: {stream}")
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, STREAMS[stream], *[int(k) for k in keys]]
    return np.random.SeedSequence(entropy)


def stream_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    """Generador PCG64 para el flujo (seed, stream, keys)"""
    return np.random.default_rng(stream_seed(seed, stream, *keys))


def stream_seeds(seed: int) -> Dict[str, int]:
    """Semillas derivadas por flujo, para el manifiesto"""
    return {
        name: int(stream_seed(seed, name).generate_state(1, dtype=np.uint64)[0])
        for name in sorted(STREAMS)
    }
