"""
estimate: seeded trials of one functional on one distribution.
Writes plan.json, trials.jsonl and summary.json.
"""

import asyncio
import logging
from typing import Any, Dict, Optional

from src.commands.common import EXIT_OK, command_errors, emit, resolve_config, resolve_output, write_json, write_jsonl
from src.config import EstimateConfig
from src.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

# flag name -> config key
FLAGS = {
    "distribution": "distribution.kind",
    "n": "distribution.n",
    "s": "distribution.s",
    "path": "distribution.path",
    "functional": "functional.kind",
    "q": "functional.q",
    "alpha": "functional.alpha",
    "eps": "eps",
    "trials": "trials",
    "backend": "backend",
    "purification": "purification",
    "profile": "discriminator.profile",
    "perturb_map": "discriminator.perturb_map",
    "shannon_tail_factor": "shannon_tail_factor",
    "workers": "workers",
    "seed": "seed",
}


@command_errors
def run_estimate_command(config_path: Optional[str], overrides: Dict[str, Any], out: Optional[str] = None) -> int:
    config = resolve_config(EstimateConfig, config_path, overrides)
    service = ExperimentService(workers=config.workers)
    result = asyncio.run(service.run_estimate(config))

    directory = resolve_output(out)
    write_json(directory, "plan.json", result.plan.to_dict())
    write_jsonl(directory, "trials.jsonl", [trial.to_dict() for trial in result.trials])
    write_json(directory, "summary.json", result.summary)
    logger.info(f"estimate outputs written to {directory}")

    emit({key: value for key, value in result.summary.items() if key not in ("diagnostics", "config", "plan_conditions")})
    return EXIT_OK
