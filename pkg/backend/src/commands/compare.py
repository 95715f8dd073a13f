"""
compare-backends: per-level amplitudes of the block and dense backends on
random distributions with n <= 8, under both purifications.
"""

import asyncio
import logging
from typing import Any, Dict, Optional

from src.commands.common import EXIT_CHECK, EXIT_OK, command_errors, emit, resolve_config, resolve_output, write_json
from src.config import CompareConfig
from src.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

FLAGS = {
    "count": "count",
    "max_n": "max_n",
    "q": "q",
    "eps": "eps",
    "tolerance": "tolerance",
    "profile": "discriminator.profile",
    "workers": "workers",
    "seed": "seed",
}


@command_errors
def run_compare_command(config_path: Optional[str], overrides: Dict[str, Any], out: Optional[str] = None) -> int:
    config = resolve_config(CompareConfig, config_path, overrides)
    service = ExperimentService(workers=config.workers)
    report = asyncio.run(service.run_compare(config))

    write_json(resolve_output(out), "report.json", report)
    logger.info(f"compare-backends: max gap {report['max_gap']:.3e} over {config.count} distributions")
    emit({"passed": report["passed"], "max_gap": report["max_gap"], "tolerance": report["tolerance"]})
    return EXIT_OK if report["passed"] else EXIT_CHECK
