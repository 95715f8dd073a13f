"""
verify: planner conformance, deterministic error budgets, beta inequalities
and backend equivalence. Exit 3 when any check fails.
"""

import asyncio
import logging
from typing import Any, Dict, Optional

from src.commands.common import EXIT_CHECK, EXIT_OK, command_errors, emit, resolve_config, resolve_output, write_json
from src.config import VerifyConfig
from src.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)

FLAGS = {
    "q": "q_values",
    "eps": "eps_values",
    "n": "n_values",
    "include_shannon": "include_shannon",
    "profiles": "profiles",
    "adversarial_seeds": "adversarial_seeds",
    "compare_count": "compare_count",
    "sabotage_bounds": "sabotage_bounds",
    "workers": "workers",
    "seed": "seed",
}


@command_errors
def run_verify_command(config_path: Optional[str], overrides: Dict[str, Any], out: Optional[str] = None) -> int:
    config = resolve_config(VerifyConfig, config_path, overrides)
    if config.sabotage_bounds is not None:
        logger.warning(f"Debug run: every B_j is scaled by {config.sabotage_bounds}")
    service = ExperimentService(workers=config.workers)
    report = asyncio.run(service.run_verify(config))

    write_json(resolve_output(out), "report.json", report)
    comparison = report["compare_backends"]
    emit({
        "passed": report["passed"],
        "cases": len(report["cases"]),
        "failed_cases": report["failed_cases"],
        "compare_max_gap": comparison["max_gap"] if comparison else None,
    })
    return EXIT_OK if report["passed"] else EXIT_CHECK
