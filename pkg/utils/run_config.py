import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

from config import Config, Tolerances
from services.errors import ConfigError, TargetError
from services.target_model import build_target, random_target
from utils.helpers import parse_random_reference

COMMANDS = (
    "spectra", "solidarity", "collapse-check", "two-component",
    "example", "verify-drift", "verify-minorization", "all-checks",
)
DEFAULT_FIXTURES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                "fixtures", "regression_targets.json")


@dataclass
class RunConfig:
    """Everything a run depends on; identical configs give identical reports"""
    command: str
    target_path: Optional[str] = None
    seed: int = Config.DEFAULT_SEED
    out_format: str = "json"
    tolerances: Tolerances = field(default_factory=Tolerances)
    report_path: Optional[str] = None
    table_path: Optional[str] = None
    pdf_path: Optional[str] = None
    options: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.out_format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.out_format!r}")

    def option(self, name, default=None):
        value = self.options.get(name)
        return default if value is None else value

    def to_dict(self):
        return {
            "command": self.command,
            "target": self.target_path,
            "seed": self.seed,
            "format": self.out_format,
            "tolerances": self.tolerances.to_dict(),
            "options": {k: v for k, v in sorted(self.options.items()) if v is not None},
        }


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as e:
        raise TargetError(f"cannot read target file {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise TargetError(f"malformed JSON in {path}: {e.msg} at line {e.lineno}")


def target_from_entry(entry, source="target"):
    """Build a target from a {"sizes": [...], "weights": [...]} mapping"""
    if not isinstance(entry, dict):
        raise TargetError(f"{source}: expected a JSON object with 'sizes' and 'weights'")
    for name in ("sizes", "weights"):
        if name not in entry:
            raise TargetError(f"{source}: missing field '{name}'")
        if not isinstance(entry[name], list):
            raise TargetError(f"{source}: field '{name}' must be a list")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in entry["sizes"]):
        raise TargetError(f"{source}: field 'sizes' must contain integers")
    if not all(isinstance(w, (int, float)) and not isinstance(w, bool) for w in entry["weights"]):
        raise TargetError(f"{source}: field 'weights' must contain numbers")
    return build_target(entry["sizes"], entry["weights"])


def fixture_target(entry):
    """Fixture entries are explicit (sizes, weights) or seeded random"""
    kind = entry.get("kind", "explicit")
    name = entry.get("name", "?")
    if kind == "random":
        return random_target(entry["sizes"], seed=entry["seed"])
    return target_from_entry(entry, source=f"fixture {name}")


def load_fixtures(path=DEFAULT_FIXTURES):
    """Ordered {name: JointTarget} from the regression fixture file"""
    data = _read_json(path)
    entries = data.get("targets") if isinstance(data, dict) else None
    if not isinstance(entries, list):
        raise TargetError(f"{path}: missing field 'targets'")
    fixtures = {}
    for entry in entries:
        fixtures[entry["name"]] = fixture_target(entry)
    logging.info(f"Loaded {len(fixtures)} fixture targets from {path}")
    return fixtures


def load_target(reference, fixtures_path=DEFAULT_FIXTURES):
    """Resolve 'random:K,[sizes],seed', 'fixture:NAME' or a JSON file path"""
    if reference is None:
        raise TargetError("a target is required for this command")
    reference = str(reference)
    if reference.startswith("random:"):
        sizes, seed = parse_random_reference(reference)
        return random_target(sizes, seed=seed)
    if reference.startswith("fixture:"):
        name = reference.split(":", 1)[1]
        fixtures = load_fixtures(fixtures_path)
        if name not in fixtures:
            raise TargetError(f"unknown fixture {name!r}")
        return fixtures[name]
    return target_from_entry(_read_json(reference), source=reference)


class TargetLoader:
    """Resolves target references; the fixture file is read at most once"""

    def __init__(self, fixtures_path=DEFAULT_FIXTURES):
        self.fixtures_path = fixtures_path
        self._fixtures = None

    def fixtures(self):
        if self._fixtures is None:
            self._fixtures = load_fixtures(self.fixtures_path)
        return self._fixtures

    def load(self, reference):
        if reference is not None and str(reference).startswith("fixture:"):
            name = str(reference).split(":", 1)[1]
            if name not in self.fixtures():
                raise TargetError(f"unknown fixture {name!r}")
            return self.fixtures()[name]
        return load_target(reference, self.fixtures_path)


@dataclass
class CommandResult:
    """Handler output: structured results, optional tables and named pass/fail checks"""
    results: Dict[str, object] = field(default_factory=dict)
    tables: Dict[str, object] = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add_check(self, name, passed, detail=""):
        self.checks.append({"name": name, "passed": bool(passed), "detail": detail})
        if not passed:
            logging.error(f"Check failed: {name} {detail}")
        return bool(passed)

    @property
    def failures(self):
        return [check for check in self.checks if not check["passed"]]

    @property
    def passed(self):
        return not self.failures

    def to_report(self, run_config: RunConfig):
        report = run_config.to_dict()
        report.update({
            "results": self.results,
            "checks": self.checks,
            "failures": self.failures,
            "passed": self.passed,
        })
        return report
