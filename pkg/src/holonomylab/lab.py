import json
import logging
import os
from typing import Any, Optional

import yaml

from .errors import ConfigurationError
from .reports import Report, write_report, write_table
from .runs import BaseRun, parse_run
from .stats import StatsDict
from .visitor import ExecutionVisitor

logger = logging.getLogger(__name__)


def load_config(config_file: str) -> dict[str, Any]:
    """Read a YAML or JSON run configuration into a plain mapping"""
    if not os.path.exists(config_file):
        raise FileNotFoundError(f"Configuration file {config_file} not found")

    with open(config_file) as f:
        if config_file.endswith((".yaml", ".yml")):
            data = yaml.safe_load(f)
        elif config_file.endswith(".json"):
            data = json.load(f)
        else:
            raise ConfigurationError(f"Unsupported config format: {config_file}. Use JSON or YAML.")

    if not isinstance(data, dict):
        raise ConfigurationError(f"Configuration file {config_file} must hold a mapping, not {type(data).__name__}")
    return data


class HolonomyLab:
    def __init__(self, config_file: str, command: Optional[str] = None, overrides: Optional[dict[str, Any]] = None):
        data = load_config(config_file)
        if command is not None:
            declared = data.setdefault("command", command)
            if declared != command:
                raise ConfigurationError(f"{config_file} configures '{declared}', not '{command}'")
        data.update({key: value for key, value in (overrides or {}).items() if value is not None})
        self.config_file = config_file
        self.run_config: BaseRun = parse_run(data)
        self.outcome = None

    @property
    def command(self) -> str:
        return self.run_config.command

    def config_echo(self) -> dict[str, Any]:
        """Effective configuration with every default filled in; output locations are left out"""
        return self.run_config.model_dump(mode="json", by_alias=True, exclude={"workers", "output", "tables"})

    def run(self) -> Report:
        logger.info(f"Running {self.command} from {self.config_file}")
        self.outcome = self.run_config.accept(ExecutionVisitor())
        timing = StatsDict(self.outcome.timing)
        timing.log()

        for name, ok in self.outcome.checks.items():
            if not ok:
                logger.warning(f"Check '{name}' failed")
        status = "ok" if self.outcome.passed else "fail"
        logger.info(f"{self.command} finished with status {status}")

        return Report(
            command=self.command,
            config=self.config_echo(),
            results={**self.outcome.results, "checks": self.outcome.checks},
            oracle=self.outcome.oracle,
            convergence=self.outcome.convergence,
            timing=timing.to_report(),
            status=status,
        )

    def save(self, report: Report, path: str) -> list[str]:
        """Write the report, plus CSV tables next to it when the run asks for them"""
        written = [write_report(report, path)]
        if self.run_config.tables and self.outcome is not None:
            directory = os.path.dirname(path) or "."
            stem = os.path.splitext(os.path.basename(path))[0]
            written += [write_table(table, directory, stem) for table in self.outcome.tables]
        return written
