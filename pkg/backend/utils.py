"""
Utilities Module - Configuration, Reproducibility & Run-Config Loading
Environment settings, seeded generators and the JSON run-configuration schema
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np
from dotenv import load_dotenv
from jsonschema import Draft7Validator, ValidationError

from backend.errors import ConfigError

# Load .env file on module import
load_dotenv()

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_thread_count() -> int:
    """
    Cap on internal parallelism (scipy.fft workers, sweep pool)

    Returns:
        PLAD_THREADS as a positive integer, 1 when unset or invalid
    """
    raw = os.getenv("PLAD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        logger.warning("[WARNING] PLAD_THREADS=%r is not an integer; using 1", raw)
        return 1


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or os.getenv("PLAD_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.Philox(seed))


def config_hash(document: Dict) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# Run configuration files

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "run_config.schema.json")

# Reported first when a document breaks several rules at the same path
_RULE_ORDER = {"additionalProperties": 0, "required": 1, "type": 2, "enum": 3}

_TYPE_NAMES = {
    "number": "a number",
    "integer": "an integer",
    "object": "an object",
    "array": "a list",
    "string": "a string",
    "boolean": "a boolean",
    "null": "null",
}


@lru_cache(maxsize=1)
def run_config_validator() -> Draft7Validator:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as handle:
        schema = json.load(handle)
    Draft7Validator.check_schema(schema)
    return Draft7Validator(schema)


@dataclass
class OutputSpec:
    directory: str = "output"
    trajectory_csv: str = "trajectory.csv"
    summary_json: str = "summary.json"
    functionals_csv: str = "functionals.csv"
    snapshots: bool = True
    field_csv: bool = False
    png: bool = False


@dataclass
class RunConfigFile:
    """Parsed run configuration: solver setup, initial profile, outputs, seed."""

    solver: Any
    initial: Any
    outputs: OutputSpec
    seed: int
    document: Dict

    @property
    def digest(self) -> str:
        return config_hash(self.document)


def describe_schema_error(error: ValidationError) -> str:
    """Key-path message for one schema violation, e.g. 'solver: unknown key(s) stepsize'."""
    where = ".".join(str(part) for part in error.absolute_path) or "config"
    if error.validator == "additionalProperties":
        unknown = sorted(set(error.instance) - set(error.schema.get("properties", {})))
        return f"{where}: unknown key(s) {', '.join(unknown)}"
    if error.validator == "required":
        missing = [key for key in error.validator_value if key not in error.instance]
        return f"{where}.{missing[0]}: required"
    if error.validator == "type":
        expected = error.validator_value
        names = [expected] if isinstance(expected, str) else list(expected)
        return f"{where}: expected {' or '.join(_TYPE_NAMES.get(n, n) for n in names)}, got {error.instance!r}"
    if error.validator == "enum":
        choices = " or ".join(repr(c) for c in error.validator_value)
        return f"{where}: expected {choices}, got {error.instance!r}"
    return f"{where}: {error.message}"


def validate_run_document(document: Any) -> None:
    """
    Check a decoded run configuration against the JSON schema

    Raises:
        ConfigError: naming the key path of the first violation
    """
    errors = list(run_config_validator().iter_errors(document))
    if not errors:
        return
    first = min(errors, key=lambda e: (len(e.absolute_path), [str(p) for p in e.absolute_path],
                                       _RULE_ORDER.get(e.validator, len(_RULE_ORDER))))
    raise ConfigError(describe_schema_error(first))


def parse_run_config(document: Dict) -> RunConfigFile:
    """
    Validate a run-configuration document and build the solver setup

    Args:
        document: Decoded JSON object

    Returns:
        RunConfigFile

    Raises:
        ConfigError: unknown key, missing key or wrong type (message names the key path)
        RegimeError / FieldError / ProfileError: values out of range
    """
    from backend.fields import Grid, KernelSpec, profile_from_dict
    from backend.regime import validate, validate_pheat
    from backend.solver import SolverConfig

    validate_run_document(document)

    params_doc = document["params"]
    d, p, lam = int(params_doc["d"]), float(params_doc["p"]), float(params_doc["lambda"])
    params = validate_pheat(d, p) if lam == 0.0 else validate(d, p, float(params_doc["alpha"]), lam)

    grid_doc = document["grid"]
    grid = Grid(d=d, half_width=float(grid_doc["half_width"]), n=int(grid_doc["n"]))

    eps = document.get("kernel", {}).get("eps")
    kernel = KernelSpec.default_for(grid, params.alpha) if eps is None else KernelSpec(params.alpha, float(eps))

    solver_doc = dict(document["solver"])
    solver_doc["snapshot_times"] = tuple(float(t) for t in solver_doc.get("snapshot_times", ()))
    if "diag_every" in solver_doc:
        solver_doc["diag_every"] = int(solver_doc["diag_every"])
    solver = SolverConfig(params=params, grid=grid, kernel=kernel, **solver_doc)

    initial = profile_from_dict(document["initial"])
    outputs = OutputSpec(**document.get("outputs", {}))
    return RunConfigFile(solver=solver, initial=initial, outputs=outputs, seed=int(document.get("seed", 0)),
                         document=document)


def load_run_config(path: str) -> RunConfigFile:
    """Read and validate a JSON run configuration from disk."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from e
    return parse_run_config(document)


def validate_environment() -> Dict[str, bool]:
    """
    Validate that all required dependencies are importable

    Returns:
        Dictionary of validation checks
    """
    checks = {}
    modules = ("numpy", "scipy", "dotenv", "jsonschema", "flask", "flask_cors", "PIL", "pytest", "hypothesis")
    for module_name in modules:
        try:
            __import__(module_name)
            checks[module_name] = True
        except ImportError:
            checks[module_name] = False
    return checks


def get_setup_instructions() -> str:
    return """
SETUP
=====

1. Install the dependencies:

   pip install -r requirements.txt

2. Optionally create a .env file in the project root:

   PLAD_THREADS=4
   PLAD_LOG_LEVEL=INFO

3. Check the installation:

   python -m backend.cli check-env
"""
