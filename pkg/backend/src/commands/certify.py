"""
certify-poly: build one polynomial and dump its certificate and coefficients.
"""

import logging
from typing import Any, Dict, Optional

from src.commands.common import (
    EXIT_CHECK,
    EXIT_OK,
    EXIT_PLAN,
    command_errors,
    emit,
    resolve_config,
    resolve_output,
    write_json,
)
from src.config import CertifyConfig
from src.exceptions import ConstructionFailedError
from src.services.experiment_service import certify_polynomial

logger = logging.getLogger(__name__)

FLAGS = {
    "kind": "kind",
    "c": "c",
    "delta": "delta",
    "nu": "nu",
    "beta": "beta",
    "eps": "eps",
    "j": "j",
    "m": "m",
    "max_explicit_degree": "polynomials.max_explicit_degree",
}


@command_errors
def run_certify_command(config_path: Optional[str], overrides: Dict[str, Any], out: Optional[str] = None) -> int:
    config = resolve_config(CertifyConfig, config_path, overrides)
    directory = resolve_output(out)
    try:
        report = certify_polynomial(config)
    except ConstructionFailedError as e:
        logger.error(f"certify-poly: {e}")
        write_json(directory, "report.json", {"passed": False, "failure": e.to_dict(), "config": config.model_dump(mode="json")})
        return EXIT_PLAN

    write_json(directory, "report.json", report)
    poly = report["poly"]
    emit({"passed": report["passed"], "degree": poly["degree"], "representation": poly["representation"], "cert": poly["cert"]})
    return EXIT_OK if report["passed"] else EXIT_CHECK
