from __future__ import annotations

import logging

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)


class Stats(BaseModel):
    """Deterministic work counters of one computation stage"""

    evaluations: int = Field(default=0, description="Chart, Hamiltonian or sampler evaluations")
    segments: int = Field(default=0, description="Loop segments processed")
    samples: int = Field(default=0, description="Monte Carlo samples or chain states")
    steps: int = Field(default=0, description="Integrator or sweep steps")

    def merge(self, other: Stats) -> Stats:
        """Merge another Stats object into this one"""
        self.evaluations += other.evaluations
        self.segments += other.segments
        self.samples += other.samples
        self.steps += other.steps
        return self


class StatsDict(dict):
    """Typed dictionary of per-stage counters"""

    def add(self, stage: str, stats: Stats) -> StatsDict:
        if stage in self:
            self[stage].merge(stats)
        else:
            self[stage] = stats
        return self

    def merge(self, other: StatsDict) -> StatsDict:
        """Merge another StatsDict object into this one"""
        for key, value in other.items():
            self.add(key, value.model_copy())
        return self

    def summary(self) -> Stats:
        """Totals over all stages"""
        result = Stats()
        for _key, value in self.items():
            result.merge(value)
        return result

    def to_report(self) -> dict[str, Stats]:
        """Stages in sorted order plus a total entry"""
        report = {key: self[key] for key in sorted(self)}
        report["total"] = self.summary()
        return report

    def log(self):
        """Log the counters in a readable format"""
        total = self.summary()
        logger.info(
            f"Work: {total.evaluations} evaluations, {total.segments} segments, "
            f"{total.samples} samples, {total.steps} steps"
        )
        for key, value in self.items():
            logger.debug(f"{key}: {value}")
