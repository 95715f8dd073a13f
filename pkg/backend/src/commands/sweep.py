"""
scale-sweep: total queries over an (n, eps) grid for a fixed Tsallis q.
Writes sweep.csv and fit.json.
"""

import asyncio
import logging
from typing import Any, Dict, Optional

from src.commands.common import EXIT_OK, command_errors, emit, resolve_config, resolve_output, write_json
from src.config import SweepConfig
from src.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

FLAGS = {
    "q": "q",
    "eps": "eps_values",
    "n": "n_values",
    "distribution": "distribution",
    "s": "s",
    "trials": "trials",
    "profile": "discriminator.profile",
    "workers": "workers",
    "seed": "seed",
}


@command_errors
def run_sweep_command(config_path: Optional[str], overrides: Dict[str, Any], out: Optional[str] = None) -> int:
    config = resolve_config(SweepConfig, config_path, overrides)
    service = ExperimentService(workers=config.workers)
    frame, fit = asyncio.run(service.run_sweep(config))

    directory = resolve_output(out)
    directory.mkdir(parents=True, exist_ok=True)
    frame.to_csv(directory / "sweep.csv", index=False, float_format="%.12g")
    write_json(directory, "fit.json", fit)
    logger.info(f"scale-sweep: {len(frame)} rows written to {directory}")

    emit({key: value for key, value in fit.items() if key not in ("config", "predicted_query_bound")})
    return EXIT_OK
