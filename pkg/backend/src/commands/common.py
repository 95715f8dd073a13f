"""
Shared plumbing of the qmle commands: config resolution, output writing and
the mapping from errors to exit codes.
"""

import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from src.config import env_seed, load_config_file, output_dir
from src.exceptions import CapacityExceededError, ConstructionFailedError, PlanConditionsError
from src.utils import dumps_line, dumps_stable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PLAN = 2
EXIT_CHECK = 3

Model = TypeVar("Model", bound=BaseModel)


def apply_overrides(data: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Set dotted keys ("distribution.n") on a nested dict; None values are skipped."""
    merged = dict(data)
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            child = target.get(key)
            target[key] = dict(child) if isinstance(child, dict) else {}
            target = target[key]
        target[leaf] = value
    return merged


def resolve_config(model: Type[Model], config_path: Optional[str], overrides: Dict[str, Any]) -> Model:
    """defaults < config file < flags < QMLE_SEED."""
    data = load_config_file(config_path) if config_path else {}
    data = apply_overrides(data, overrides)
    seed = env_seed()
    if seed is not None and "seed" in model.model_fields:
        data["seed"] = seed
    return model.model_validate(data)


def write_json(directory: Path, name: str, obj: Any) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(dumps_stable(obj))
    return path


def write_jsonl(directory: Path, name: str, rows: Iterable[Any]) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text("".join(dumps_line(row) + "\n" for row in rows))
    return path


def emit(obj: Any) -> None:
    """The command result is the only thing written to stdout."""
    sys.stdout.write(dumps_stable(obj))
    sys.stdout.flush()


def resolve_output(out: Optional[str]) -> Path:
    return output_dir(out)


def command_errors(func: Callable[..., int]) -> Callable[..., int]:
    """Turn the failures a command can meet into exit codes 1 and 2."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)
        except ValidationError as e:
            logger.error(f"Invalid configuration: {e}")
            return EXIT_INVALID
        except (ConstructionFailedError, PlanConditionsError) as e:
            logger.error(f"Plan construction failed: {e}")
            return EXIT_PLAN
        except (ValueError, CapacityExceededError, OSError) as e:
            logger.error(f"Invalid argument: {e}")
            return EXIT_INVALID

    return wrapper
