#!/usr/bin/env python3
"""
Config Manager - HYPEREMBED
Configuración por capas: valores por defecto, archivo JSON, manifiesto de
una ejecución previa y opciones de línea de comandos
"""

import json
import os
import logging
from dataclasses import dataclass, fields, asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from src.embedding_evaluator import DEFAULT_HOLDOUT_FRACTION, DEFAULT_LABELLED_FRACTIONS, DEFAULT_SUBSAMPLE_THRESHOLD
from src.embedding_store import EmbeddingFileError, read_key_values
from src.hyperboloid_optimizer import TrainConfig
from src.seeding import stream_seeds
from src.walk_sampler import WalkConfig

logger = logging.getLogger(__name__)

COMMANDS = ('embed', 'walks', 'lp-split', 'eval-reconstruction', 'eval-lp', 'eval-classify', 'project')
PROJECTION_MODELS = ('poincare', 'klein')

ENV_OUTPUT_DIR = 'HYPEREMBED_OUTPUT_DIR'
ENV_LOG_LEVEL = 'HYPEREMBED_LOG_LEVEL'
DEFAULT_CONFIG_PATH = 'config/hyperembed.json'


class ConfigError(ValueError):
    """Configuración inválida o incompleta"""


@dataclass
class RunConfig:
    """Todos los parámetros de una ejecución (valores por defecto de la tabla de parámetros)"""
    edges: Optional[str] = None
    attributes: Optional[str] = None
    labels: Optional[str] = None
    embedding: Optional[str] = None
    output_dir: str = 'output'
    dimension: int = 10
    walks_per_node: int = 10
    walk_length: int = 80
    context_size: int = 3
    alpha: float = 0.2
    learning_rate: float = 0.3
    epochs: int = 5
    negatives: int = 10
    batch_size: int = 50
    sigma: float = 1.0
    seed: int = 0
    reps: int = 1
    fractions: Tuple[float, ...] = DEFAULT_LABELLED_FRACTIONS
    alpha_grid: Optional[Tuple[float, ...]] = None
    dim_grid: Optional[Tuple[int, ...]] = None
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION
    subsample_threshold: int = DEFAULT_SUBSAMPLE_THRESHOLD
    standardize: bool = True
    symmetric_negatives: bool = True
    projection_model: str = 'klein'
    check: bool = False
    logistic_l2: float = 1e-4
    logistic_iterations: int = 500
    logistic_step: float = 0.1
    progress: bool = False
    log_level: str = 'INFO'

    @property
    def alphas(self) -> Tuple[float, ...]:
        return self.alpha_grid or (self.alpha,)

    @property
    def dimensions(self) -> Tuple[int, ...]:
        return self.dim_grid or (self.dimension,)

    def walk_config(self, seed: int, alpha: Optional[float] = None) -> WalkConfig:
        return WalkConfig(
            num_walks_per_node=self.walks_per_node,
            walk_length=self.walk_length,
            context_size=self.context_size,
            alpha=self.alpha if alpha is None else alpha,
            seed=seed,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            negatives=self.negatives,
            batch_size=self.batch_size,
            sigma=self.sigma,
            seed=seed,
            symmetric_negatives=self.symmetric_negatives,
            progress=self.progress,
        )

    def validate(self, command: str) -> None:
        """
        Valida la configuración antes de cualquier cálculo

        Raises:
            ConfigError: Con el primer problema encontrado
        """
        if command not in COMMANDS:
            raise ConfigError(f"Comando desconocido: {command}")
        self.validate_ranges()
        self._validate_inputs(command)

    def validate_ranges(self) -> None:
        """Rangos de los parámetros numéricos (sin tocar el sistema de archivos)"""
        for name in ('walks_per_node', 'epochs', 'negatives', 'batch_size', 'context_size',
                     'reps', 'subsample_threshold', 'logistic_iterations'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} debe ser >= 1: {getattr(self, name)}")
        if self.walk_length < 2:
            raise ConfigError(f"walk_length debe ser >= 2: {self.walk_length}")
        if any(n < 2 for n in self.dimensions):
            raise ConfigError(f"La dimensión debe ser >= 2: {self.dimensions}")
        if any(not 0.0 <= a <= 1.0 for a in self.alphas):
            raise ConfigError(f"alpha debe estar en [0, 1]: {self.alphas}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate debe ser >= 0: {self.learning_rate}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma debe ser > 0: {self.sigma}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"La semilla debe ser un entero sin signo de 64 bits: {self.seed}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError(f"holdout_fraction debe estar en [0, 1): {self.holdout_fraction}")
        if not self.fractions or any(not 0.0 < f < 1.0 for f in self.fractions):
            raise ConfigError(f"Las fracciones etiquetadas deben estar en (0, 1): {self.fractions}")
        if self.projection_model not in PROJECTION_MODELS:
            raise ConfigError(f"Modelo de proyección desconocido: {self.projection_model}")

    def _validate_inputs(self, command: str) -> None:
        reuses_embedding = self.embedding is not None and command in ('eval-reconstruction', 'eval-classify')
        if command == 'project':
            self._require_file('embedding')
        else:
            self._require_file('edges')
        if command == 'eval-classify':
            self._require_file('labels')
        if reuses_embedding:
            self._require_file('embedding')
        for name in ('attributes', 'labels'):
            if getattr(self, name) is not None:
                self._require_file(name)

        trains = command in ('embed', 'walks', 'eval-lp') or (
            command in ('eval-reconstruction', 'eval-classify') and not reuses_embedding)
        if trains and self.attributes is None and any(a > 0 for a in self.alphas):
            raise ConfigError("alpha > 0 requiere un archivo de atributos (--attributes) o --alpha 0")

    def _require_file(self, name: str) -> None:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"Falta el archivo requerido: --{name}")
        if not Path(value).is_file() or not os.access(value, os.R_OK):
            raise ConfigError(f"No se puede leer {name}: {value}")

    def to_manifest(self, command: str) -> Dict[str, Any]:
        """Parámetros, comando y semillas derivadas, para el manifiesto"""
        values: Dict[str, Any] = {
            key: ('' if value is None else value) for key, value in asdict(self).items()
        }
        values['command'] = command
        values['master_seed'] = self.seed
        for stream, derived in stream_seeds(self.seed).items():
            values[f"stream_seed.{stream}"] = derived
        return values


_INT_FIELDS = {'dimension', 'walks_per_node', 'walk_length', 'context_size', 'epochs', 'negatives',
               'batch_size', 'seed', 'reps', 'subsample_threshold', 'logistic_iterations'}
_FLOAT_FIELDS = {'alpha', 'learning_rate', 'sigma', 'holdout_fraction', 'logistic_l2', 'logistic_step'}
_BOOL_FIELDS = {'standardize', 'symmetric_negatives', 'check', 'progress'}
_OPTIONAL_PATHS = {'edges', 'attributes', 'labels', 'embedding'}

# sección JSON -> {clave JSON: campo de RunConfig}
_SECTION_FIELDS: Dict[str, Dict[str, str]] = {
    'walks': {
        'num_walks_per_node': 'walks_per_node',
        'walk_length': 'walk_length',
        'context_size': 'context_size',
        'alpha': 'alpha',
    },
    'training': {
        'dimension': 'dimension',
        'learning_rate': 'learning_rate',
        'epochs': 'epochs',
        'negatives': 'negatives',
        'batch_size': 'batch_size',
        'sigma': 'sigma',
        'seed': 'seed',
        'symmetric_negatives': 'symmetric_negatives',
    },
    'evaluation': {
        'reps': 'reps',
        'fractions': 'fractions',
        'alpha_grid': 'alpha_grid',
        'dim_grid': 'dim_grid',
        'holdout_fraction': 'holdout_fraction',
        'subsample_threshold': 'subsample_threshold',
        'logistic_l2': 'logistic_l2',
        'logistic_iterations': 'logistic_iterations',
        'logistic_step': 'logistic_step',
    },
    'paths': {
        'edges': 'edges',
        'attributes': 'attributes',
        'labels': 'labels',
        'embedding': 'embedding',
        'output_dir': 'output_dir',
        'standardize': 'standardize',
    },
    'logging': {
        'level': 'log_level',
        'progress': 'progress',
    },
}


def _parse_bool(raw: Any) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ('true', '1', 'yes', 'si', 'sí'):
        return True
    if text in ('false', '0', 'no'):
        return False
    raise ConfigError(f"Valor booleano inválido: {raw!r}")


def _parse_list(raw: Any, cast) -> Optional[Tuple]:
    if raw is None or raw == '':
        return None
    items = raw if isinstance(raw, (list, tuple)) else str(raw).split(',')
    return tuple(cast(item) for item in items if str(item).strip() != '')


def coerce_field(name: str, raw: Any) -> Any:
    """
    Convierte un valor (texto del manifiesto o JSON) al tipo del campo

    Raises:
        ConfigError: Campo desconocido o valor no convertible
    """
    try:
        if name in _INT_FIELDS:
            return int(raw)
        if name in _FLOAT_FIELDS:
            return float(raw)
        if name in _BOOL_FIELDS:
            return _parse_bool(raw)
        if name in ('fractions', 'alpha_grid'):
            return _parse_list(raw, float)
        if name == 'dim_grid':
            return _parse_list(raw, int)
        if name in _OPTIONAL_PATHS:
            return None if raw in (None, '') else str(raw)
        if name in ('output_dir', 'projection_model', 'log_level'):
            return str(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Valor inválido para {name}: {raw!r} ({e})") from None
    raise ConfigError(f"Parámetro desconocido: {name}")


class ConfigManager:
    """Gestor del archivo de configuración JSON de HYPEREMBED"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Inicializa el gestor de configuración

        Args:
            config_path: Ruta al archivo JSON (None = solo valores por defecto)
        """
        self.config_path = Path(config_path) if config_path else None
        self.config: Dict[str, Any] = {}
        self.normalized_config: Dict[str, Dict[str, Any]] = {section: {} for section in _SECTION_FIELDS}

    def load_config(self) -> Dict[str, Dict[str, Any]]:
        """
        Carga y normaliza el archivo JSON

        Returns:
            Diccionario por secciones con los nombres de campo de RunConfig
        """
        if self.config_path is None:
            return self.normalized_config
        if not self.config_path.exists():
            raise ConfigError(f"Archivo de configuración no encontrado: {self.config_path}")
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                self.config = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"❌ Error parseando JSON: {e}")
            raise ConfigError(f"JSON inválido en {self.config_path}: {e}") from None

        self.normalized_config = self._normalize_config(self.config)
        logger.info(f"✅ Configuración cargada desde: {self.config_path}")
        return self.normalized_config

    def _normalize_config(self, config: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
        if not isinstance(config, dict):
            raise ConfigError("La configuración debe ser un objeto JSON")
        normalized: Dict[str, Dict[str, Any]] = {}
        for section, mapping in _SECTION_FIELDS.items():
            raw = config.get(section, {}) or {}
            unknown = sorted(set(raw) - set(mapping))
            if unknown:
                raise ConfigError(f"Claves desconocidas en '{section}': {', '.join(unknown)}")
            normalized[section] = {mapping[key]: coerce_field(mapping[key], value) for key, value in raw.items()}
        extra = sorted(set(config) - set(_SECTION_FIELDS))
        if extra:
            logger.warning(f"⚠️ Secciones ignoradas: {', '.join(extra)}")
        return normalized

    def get(self, key: str, default: Any = None) -> Any:
        """Devuelve una sección normalizada"""
        return self.normalized_config.get(key, default)

    def run_fields(self) -> Dict[str, Any]:
        """Valores del archivo aplanados a campos de RunConfig"""
        flat: Dict[str, Any] = {}
        for section in _SECTION_FIELDS:
            flat.update(self.get(section, {}))
        return flat

    def validate_config(self) -> bool:
        """
        Comprueba que los valores del archivo forman una RunConfig válida

        Raises:
            ConfigError: Si algún valor está fuera de rango
        """
        candidate = RunConfig(**self.run_fields())
        candidate.validate_ranges()
        logger.info("✅ Configuración validada correctamente")
        return True


def load_manifest(path: str) -> Dict[str, Any]:
    """Campos de RunConfig registrados en un manifiesto previo"""
    known = {f.name for f in fields(RunConfig)}
    try:
        values = read_key_values(path)
    except EmbeddingFileError as e:
        raise ConfigError(f"Manifiesto inválido: {e}") from None
    logger.info(f"📋 Manifiesto cargado: {path}")
    return {key: coerce_field(key, raw) for key, raw in values.items() if key in known}


def build_run_config(command: str, overrides: Dict[str, Any],
                     config_path: Optional[str] = None,
                     manifest_path: Optional[str] = None) -> RunConfig:
    """
    Construye y valida la RunConfig de un comando

    Orden de precedencia (de menor a mayor): valores por defecto y entorno,
    archivo JSON, manifiesto y opciones explícitas (las que no son None).
    """
    values: Dict[str, Any] = {
        'output_dir': os.getenv(ENV_OUTPUT_DIR, 'output'),
        'log_level': os.getenv(ENV_LOG_LEVEL, 'INFO'),
    }
    if config_path:
        manager = ConfigManager(config_path)
        manager.load_config()
        manager.validate_config()
        values.update(manager.run_fields())
    if manifest_path:
        values.update(load_manifest(manifest_path))
    values.update({key: value for key, value in overrides.items() if value is not None})

    config = RunConfig(**values)
    config.validate(command)
    return config


def create_default_config(path: str = DEFAULT_CONFIG_PATH) -> Dict[str, Any]:
    """
    Crea un archivo de configuración con los valores por defecto

    Args:
        path: Ruta donde crear el archivo
    """
    defaults = asdict(RunConfig())
    default_config = {
        section: {key: defaults[field_name] for key, field_name in mapping.items()}
        for section, mapping in _SECTION_FIELDS.items()
    }
    default_config['evaluation']['fractions'] = list(DEFAULT_LABELLED_FRACTIONS)

    config_path = Path(path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, 'w', encoding='utf-8') as f:
        json.dump(default_config, f, indent=2, ensure_ascii=False)

    logger.info(f"✅ Configuración por defecto creada en: {config_path}")
    return default_config
