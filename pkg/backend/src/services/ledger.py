"""
Query ledger: oracle-query accounting per level and per amplitude-estimation round.
All counts are Python ints, so totals are exact.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

from src.services.amplitude_estimation_service import AEOutcome

logger = logging.getLogger(__name__)


@dataclass
class LevelQueries:
    """Cost of one level: V_j = D_{j-1} D_j W_j on top of one state preparation"""

    level: int
    state_prep: int
    discriminator_prev: int
    discriminator_curr: int
    svt: int
    ae_rounds: List[AEOutcome] = field(default_factory=list)

    @property
    def cost_per_call(self) -> int:
        return self.state_prep + self.discriminator_prev + self.discriminator_curr + self.svt

    @property
    def ae_calls(self) -> int:
        return sum(r.repeats * (2 * r.grover_calls + 1) for r in self.ae_rounds)

    @property
    def queries(self) -> int:
        return self.ae_calls * self.cost_per_call

    def to_dict(self) -> Dict[str, Any]:
        return {
            "level": self.level,
            "state_prep": self.state_prep,
            "discriminator_prev": self.discriminator_prev,
            "discriminator_curr": self.discriminator_curr,
            "svt": self.svt,
            "cost_per_call": self.cost_per_call,
            "ae_rounds": [r.to_dict() for r in self.ae_rounds],
            "ae_calls": self.ae_calls,
            "queries": self.queries,
        }


@dataclass
class QueryLedger:
    """Ordered per-level query records of one trial"""

    levels: List[LevelQueries] = field(default_factory=list)

    def record_level(
        self,
        level: int,
        state_prep: int,
        discriminator_prev: int,
        discriminator_curr: int,
        svt: int,
        rounds: Sequence[AEOutcome],
    ) -> LevelQueries:
        if self.levels and level <= self.levels[-1].level:
            raise ValueError(f"Levels must be recorded in increasing order, got {level} after {self.levels[-1].level}")
        entry = LevelQueries(level, state_prep, discriminator_prev, discriminator_curr, svt, list(rounds))
        self.levels.append(entry)
        return entry

    @property
    def total(self) -> int:
        return sum(entry.queries for entry in self.levels)

    def by_level(self) -> Dict[int, int]:
        return {entry.level: entry.queries for entry in self.levels}

    def merge(self, other: "QueryLedger") -> "QueryLedger":
        """Sum two ledgers level by level (used to aggregate trials)."""
        merged: Dict[int, LevelQueries] = {}
        for entry in self.levels + other.levels:
            if entry.level not in merged:
                merged[entry.level] = LevelQueries(
                    entry.level, entry.state_prep, entry.discriminator_prev,
                    entry.discriminator_curr, entry.svt, list(entry.ae_rounds),
                )
            else:
                merged[entry.level].ae_rounds.extend(entry.ae_rounds)
        return QueryLedger(levels=[merged[level] for level in sorted(merged)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "by_level": {str(level): queries for level, queries in self.by_level().items()},
            "levels": [entry.to_dict() for entry in self.levels],
        }
