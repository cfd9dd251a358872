"""Command-line front end: scenario configuration and report emission.

Five subcommands cover the package's analyses: `anomaly` (fuzzy-link
enumeration on a product state), `mass` (cell-mass accessibility),
`ggb` (the equal-expectation two-box comparison), `evolve` (collapse
statistics of an uncoupled ensemble), and `count` (the register-coupled
counting experiment).  Values come from flags first, then an optional
key=value config file (--config or the GRWM_CONFIG environment
variable), then documented defaults.  Reports embed the resolved config
and seed so any run can be replayed exactly; JSON output is canonical
(sorted keys, 17 significant digits), CSV is a flat key,value
projection of the same tree.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from collections.abc import Mapping
from dataclasses import dataclass
from enum import IntEnum
from typing import Any

from .counting import CouplingSpec, run_experiment
from .fuzzylink import FuzzyParams, critical_n, product_enumeration_report
from .grw import HitParams, run_ensemble
from .massdensity import (
    AccessibilityParams,
    box_mass_report,
    ggb_states,
    mass_report,
    product_box_stats,
    product_marble_cell_stats,
)

SCHEMA_VERSION = "1"
SCENARIOS = ("anomaly", "mass", "ggb", "evolve", "count")
STOCHASTIC_SCENARIOS = ("evolve", "count")


class ConfigError(ValueError):
    """Invalid or missing configuration; maps to exit code 2."""


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    n: int = 10
    a_sq: float = 0.99
    p: float = 0.1
    epsilon: float = 1e-3
    t: float = 0.0
    lambda_particle: float = 1e-16
    constituents: float = 1e21
    duration_s: float = 1e-4
    trials: int = 1000
    eta: float = 0.0
    delta: float | None = None
    seed: int | None = None
    threads: int | None = None
    output_format: str = "json"
    output_path: str | None = None


_FIELD_TYPES: dict[str, Any] = {
    field.name: field.type for field in dataclasses.fields(ScenarioConfig)
}

_RANGES = {
    "n": "n >= 1",
    "a_sq": "(0, 1]",
    "p": "(0, 0.5)",
    "epsilon": "(0, 1)",
    "t": "[0, 1)",
    "lambda_particle": ">= 0",
    "constituents": ">= 0",
    "duration_s": ">= 0",
    "trials": ">= 1",
    "eta": "[0, 1)",
    "delta": "[0, 1)",
    "seed": "an integer",
    "threads": ">= 1",
    "output_format": "one of json, csv",
}


def _range_error(field: str) -> ConfigError:
    return ConfigError(f"invalid value for {field}: legal range is {_RANGES[field]}")


def _validate(config: ScenarioConfig) -> ScenarioConfig:
    if config.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {config.scenario!r}")
    if config.n < 1:
        raise _range_error("n")
    if not 0.0 < config.a_sq <= 1.0:
        raise _range_error("a_sq")
    if not 0.0 < config.p < 0.5:
        raise _range_error("p")
    if not 0.0 < config.epsilon < 1.0:
        raise _range_error("epsilon")
    if not 0.0 <= config.t < 1.0:
        raise _range_error("t")
    if config.lambda_particle < 0.0:
        raise _range_error("lambda_particle")
    if config.constituents < 0.0:
        raise _range_error("constituents")
    if config.duration_s < 0.0:
        raise _range_error("duration_s")
    if config.trials < 1:
        raise _range_error("trials")
    if not 0.0 <= config.eta < 1.0:
        raise _range_error("eta")
    if config.delta is not None and not 0.0 <= config.delta < 1.0:
        raise _range_error("delta")
    if config.threads is not None and config.threads < 1:
        raise _range_error("threads")
    if config.output_format not in ("json", "csv"):
        raise _range_error("output_format")
    if config.scenario == "ggb" and (config.n < 2 or config.n % 2):
        raise ConfigError(
            "invalid value for n: the ggb scenario needs an even n >= 2"
        )
    if config.scenario in STOCHASTIC_SCENARIOS and config.seed is None:
        raise ConfigError(
            f"seed is required for the stochastic scenario {config.scenario!r}"
        )
    return config


def _coerce(field: str, raw: str) -> Any:
    kind = _FIELD_TYPES[field]
    try:
        if field in ("n", "trials", "seed", "threads"):
            return int(raw)
        if kind in ("float", "float | None"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {field}: {raw!r} (legal range is {_RANGES[field]})")
    return raw


def read_config_file(path: str) -> dict[str, Any]:
    """Parse a flat key=value file; # starts a comment, blank lines skipped."""
    values: dict[str, Any] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key == "scenario":
            raise ConfigError(
                f"{path}:{lineno}: scenario is chosen by the subcommand, not the file"
            )
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw.strip())
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grwm",
        description="Marble-counting simulator: anomaly, mass, ggb, evolve, count.",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--a-sq", dest="a_sq", type=float, default=None)
        p.add_argument("--p", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--t", type=float, default=None)
        p.add_argument(
            "--lambda-particle", dest="lambda_particle", type=float, default=None
        )
        p.add_argument("--constituents", type=float, default=None)
        p.add_argument("--duration-s", dest="duration_s", type=float, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument(
            "--output-format",
            dest="output_format",
            choices=("json", "csv"),
            default=None,
        )
        p.add_argument("--output-path", dest="output_path", default=None)
    return parser


def parse_config(argv: list[str]) -> ScenarioConfig:
    """Resolve flags > config file > defaults into a validated config."""
    namespace = _build_parser().parse_args(argv)
    values: dict[str, Any] = {"scenario": namespace.scenario}
    path = namespace.config or os.environ.get("GRWM_CONFIG")
    if path:
        values.update(read_config_file(path))
    for field in _FIELD_TYPES:
        if field == "scenario":
            continue
        flag_value = getattr(namespace, field)
        if flag_value is not None:
            values[field] = flag_value
    return _validate(ScenarioConfig(**values))


def config_from_mapping(mapping: Mapping[str, Any]) -> ScenarioConfig:
    """Rebuild a validated config from a report's embedded config block."""
    unknown = set(mapping) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    return _validate(ScenarioConfig(**dict(mapping)))


def format_float(value: float) -> str:
    """Canonical float rendering: 17 significant digits, Infinity literals."""
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    if math.isnan(value):
        return "NaN"
    return format(value, ".17g")


def _to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            field.name: _to_jsonable(getattr(obj, field.name))
            for field in dataclasses.fields(obj)
        }
    if isinstance(obj, IntEnum):
        return int(obj)
    if isinstance(obj, Mapping):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    return obj


def emit_json(obj: Any) -> str:
    """Serialize with sorted keys and canonical floats (plus trailing newline)."""

    def render(node: Any) -> str:
        if node is None:
            return "null"
        if isinstance(node, bool):
            return "true" if node else "false"
        if isinstance(node, int):
            return str(node)
        if isinstance(node, float):
            return format_float(node)
        if isinstance(node, str):
            escaped = (
                node.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            )
            return f'"{escaped}"'
        if isinstance(node, dict):
            items = ", ".join(
                f'"{key}": {render(value)}' for key, value in sorted(node.items())
            )
            return "{" + items + "}"
        if isinstance(node, list):
            return "[" + ", ".join(render(value) for value in node) + "]"
        raise TypeError(f"cannot serialize {type(node).__name__}")

    return render(_to_jsonable(obj)) + "\n"


def _flatten(node: Any, prefix: str, rows: list[tuple[str, str]]) -> None:
    node = _to_jsonable(node)
    if isinstance(node, dict):
        for key, value in sorted(node.items()):
            _flatten(value, f"{prefix}.{key}" if prefix else str(key), rows)
    elif isinstance(node, list):
        for index, value in enumerate(node):
            _flatten(value, f"{prefix}[{index}]", rows)
    elif isinstance(node, float):
        rows.append((prefix, format_float(node)))
    elif node is None:
        rows.append((prefix, ""))
    elif isinstance(node, bool):
        rows.append((prefix, "true" if node else "false"))
    else:
        rows.append((prefix, str(node)))


def emit_csv(obj: Any) -> str:
    """Flat key,value projection of the report tree."""
    rows: list[tuple[str, str]] = []
    _flatten(obj, "", rows)
    lines = ["key,value"]
    for key, value in rows:
        if "," in value or '"' in value:
            value = '"' + value.replace('"', '""') + '"'
        lines.append(f"{key},{value}")
    return "\n".join(lines) + "\n"


def _anomaly_payload(config: ScenarioConfig) -> dict[str, Any]:
    fuzzy = FuzzyParams(config.p)
    report = product_enumeration_report(config.a_sq, config.n, fuzzy)
    onset = critical_n(config.a_sq, fuzzy) if config.a_sq < 1.0 else None
    return {
        "per_marble_holds_all": all(report.per_marble_holds),
        "singleton_mass": config.a_sq,
        "conjunction_mass": report.conjunction_mass,
        "conjunction_holds": report.conjunction_holds,
        "anomaly": report.anomaly,
        "critical_n": onset,
    }


def _mass_payload(config: ScenarioConfig) -> dict[str, Any]:
    params = AccessibilityParams(config.epsilon)
    box = product_box_stats(config.a_sq, config.n, 1.0, params)
    marble = product_marble_cell_stats(config.a_sq, 1.0, params)
    deficit = box_mass_report(config.a_sq, config.n)
    return {
        "box": dataclasses.asdict(box),
        "marble_in_cell": dataclasses.asdict(marble),
        "in_box_expected": deficit.in_box_expected,
        "deficit": deficit.deficit,
        "epsilon": config.epsilon,
    }


def _ggb_payload(config: ScenarioConfig) -> dict[str, Any]:
    superposed, split, grid = ggb_states(config.n)
    params = AccessibilityParams(config.epsilon)
    return {
        "superposed": mass_report(superposed, grid, params),
        "split": mass_report(split, grid, params),
    }


def _effective_threads(config: ScenarioConfig) -> int:
    if config.threads is not None:
        return config.threads
    return os.cpu_count() or 1


def _evolve_payload(config: ScenarioConfig) -> dict[str, Any]:
    from .state import MarbleCoeffs

    report = run_ensemble(
        MarbleCoeffs.from_in_probability(config.a_sq),
        config.n,
        config.duration_s,
        HitParams(
            t=config.t,
            lambda_particle=config.lambda_particle,
            constituents_per_system=config.constituents,
        ),
        config.delta if config.delta is not None else config.p,
        config.trials,
        config.seed,
        threads=_effective_threads(config),
    )
    return {"ensemble": report}


def _count_payload(config: ScenarioConfig) -> dict[str, Any]:
    from .state import MarbleCoeffs

    spec = CouplingSpec() if config.eta == 0.0 else CouplingSpec.imperfect(config.eta)
    report = run_experiment(
        config.n,
        MarbleCoeffs.from_in_probability(config.a_sq),
        FuzzyParams(config.p),
        HitParams(
            t=config.t,
            lambda_particle=config.lambda_particle,
            constituents_per_system=config.constituents,
        ),
        spec,
        config.duration_s,
        config.trials,
        config.seed,
        delta=config.delta,
        threads=_effective_threads(config),
    )
    return {"experiment": report}


_PAYLOADS = {
    "anomaly": _anomaly_payload,
    "mass": _mass_payload,
    "ggb": _ggb_payload,
    "evolve": _evolve_payload,
    "count": _count_payload,
}


def render_report(config: ScenarioConfig) -> str:
    """Run the scenario and serialize its report in the configured format."""
    document = {
        "schema_version": SCHEMA_VERSION,
        "scenario": config.scenario,
        "config": dataclasses.asdict(config),
        "report": _PAYLOADS[config.scenario](config),
    }
    if config.output_format == "csv":
        return emit_csv(document)
    return emit_json(document)


def run(config: ScenarioConfig) -> int:
    """Execute one scenario; returns the process exit code."""
    try:
        text = render_report(config)
    except ConfigError:
        raise
    except Exception as exc:
        print(f"grwm: {config.scenario} failed: {exc}", file=sys.stderr)
        return 3
    if config.output_path is None:
        sys.stdout.write(text)
        return 0
    try:
        with open(config.output_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"grwm: cannot write {config.output_path}: {exc}", file=sys.stderr)
        return 3
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        config = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"grwm: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
