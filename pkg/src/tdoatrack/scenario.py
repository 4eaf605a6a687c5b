"""Scenario configuration: the experiment input record and its file format.

A scenario file is a flat text file of dotted ``key = value`` lines
(``#`` starts a comment). The key names mirror the ScenarioConfig fields;
unknown keys are an error, never a warning. The same ``key=value`` syntax
is used for command-line overrides.

The bundled ``table1.defaults`` scenario freezes the canonical benchmark
configuration: 6 anchors on a circle in a 10 m x 10 m region, speeds
uniform in [1, 5] m/s, measurement variance 1 m^2 per range difference,
process variance 3 m^2 per axis, 50 particles with resampling threshold
10, 200 rounds.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .filters import FILTER_KINDS, FilterConfig
from .measurement import AnchorSet
from .mobility import HEADING_MODES, MobilityConfig

__all__ = [
    "ScenarioError",
    "ScenarioConfig",
    "load_scenario",
    "parse_scenario",
    "apply_overrides",
    "dump_scenario",
    "config_hash",
    "bundled_scenarios",
]

SCENARIO_VERSION = 1

ANCHOR_LAYOUTS = ("circle", "grid", "manual")


class ScenarioError(ValueError):
    """Configuration problem: bad key, bad value, or violated invariant."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved experiment configuration.

    ``measurement_noise_var`` is the variance (m^2) of each generated TDOA
    range difference; the per-anchor TOA noise std used by the generator is
    ``sqrt(measurement_noise_var / 2)``. ``process_noise_var`` is the
    per-axis variance (m^2) of the per-step state noise. The filters assume
    these same variances unless ``assumed_measurement_var`` /
    ``assumed_process_var`` override them; zero-noise scenarios must set
    the assumed values explicitly because the estimators require positive
    noise models.
    """

    anchor_count: int = 6
    anchor_layout: str = "circle"
    anchor_region: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 10.0)
    anchor_reference: int = 0
    anchor_positions: tuple[tuple[float, float], ...] | None = None
    v_min: float = 1.0
    v_max: float = 5.0
    delta_t: float = 1.0
    steps: int = 50
    heading_mode: str = "resample"
    initial_position: tuple[float, float] | None = None
    measurement_noise_var: float = 1.0
    process_noise_var: float = 3.0
    filter_kind: str = "pf_tdoa"
    particles: int = 50
    resample_threshold: float = 10.0
    resampler: str = "residual"
    correlated_noise: bool = True
    assumed_measurement_var: float | None = None
    assumed_process_var: float | None = None
    rounds: int = 200
    seed: int = 61043

    def validate(self) -> None:
        """Raise ScenarioError naming the first violated invariant."""
        if self.anchor_layout not in ANCHOR_LAYOUTS:
            raise ScenarioError(
                f"anchors.layout must be one of {ANCHOR_LAYOUTS}, got {self.anchor_layout!r}"
            )
        if self.anchor_count < 3:
            raise ScenarioError(f"anchors.count must be at least 3, got {self.anchor_count}")
        xmin, ymin, xmax, ymax = self.anchor_region
        if not (xmax > xmin and ymax > ymin):
            raise ScenarioError(f"anchors.region has zero area: {self.anchor_region}")
        if self.anchor_layout == "manual":
            if self.anchor_positions is None:
                raise ScenarioError("anchors.layout=manual requires anchors.positions")
            if len(self.anchor_positions) != self.anchor_count:
                raise ScenarioError(
                    f"anchors.positions lists {len(self.anchor_positions)} points "
                    f"but anchors.count is {self.anchor_count}"
                )
        if not 0 <= self.anchor_reference < self.anchor_count:
            raise ScenarioError(
                f"anchors.reference {self.anchor_reference} out of range "
                f"for {self.anchor_count} anchors"
            )
        if self.v_min < 0:
            raise ScenarioError(f"mobility.v_min must be non-negative, got {self.v_min}")
        if self.v_min > self.v_max:
            raise ScenarioError(
                f"v_min exceeds v_max ({self.v_min} > {self.v_max})"
            )
        if self.delta_t <= 0:
            raise ScenarioError(f"mobility.delta_t must be positive, got {self.delta_t}")
        if self.steps < 1:
            raise ScenarioError(f"mobility.steps must be at least 1, got {self.steps}")
        if self.heading_mode not in HEADING_MODES:
            raise ScenarioError(
                f"mobility.heading_mode must be one of {HEADING_MODES}, got {self.heading_mode!r}"
            )
        if self.measurement_noise_var < 0:
            raise ScenarioError("measurement_noise_var must be non-negative")
        if self.process_noise_var < 0:
            raise ScenarioError("process_noise_var must be non-negative")
        if self.filter_kind not in FILTER_KINDS:
            raise ScenarioError(
                f"filter.kind must be one of {FILTER_KINDS}, got {self.filter_kind!r}"
            )
        if self.particles < 1:
            raise ScenarioError(f"filter.particles must be at least 1, got {self.particles}")
        if self.resample_threshold > self.particles:
            raise ScenarioError(
                f"filter.resample_threshold {self.resample_threshold} exceeds "
                f"filter.particles {self.particles}"
            )
        if self._assumed_measurement_var() <= 0:
            raise ScenarioError(
                "filter needs a positive measurement variance; set "
                "filter.assumed_measurement_var when measurement_noise_var is 0"
            )
        if self._assumed_process_var() <= 0:
            raise ScenarioError(
                "filter needs a positive process variance; set "
                "filter.assumed_process_var when process_noise_var is 0"
            )
        if self.rounds < 1:
            raise ScenarioError(f"rounds must be at least 1, got {self.rounds}")
        if self.seed < 0:
            raise ScenarioError(f"seed must be non-negative, got {self.seed}")

    def _assumed_measurement_var(self) -> float:
        if self.assumed_measurement_var is not None:
            return self.assumed_measurement_var
        return self.measurement_noise_var

    def _assumed_process_var(self) -> float:
        if self.assumed_process_var is not None:
            return self.assumed_process_var
        return self.process_noise_var

    @property
    def toa_noise_sigma(self) -> float:
        """Per-anchor TOA noise std that yields the configured TDOA variance."""
        return float(np.sqrt(self.measurement_noise_var / 2.0))

    def build_anchors(self) -> AnchorSet:
        from .harness import place_anchors  # deferred: harness imports this module

        return place_anchors(
            self.anchor_count,
            pattern=self.anchor_layout,
            region=self.anchor_region,
            reference_index=self.anchor_reference,
            positions=self.anchor_positions,
        )

    def build_mobility(self, anchors: AnchorSet) -> MobilityConfig:
        """Materialize the mobility model; ``auto`` start = anchor centroid."""
        initial = self.initial_position
        if initial is None:
            initial = tuple(anchors.centroid())
        return MobilityConfig(
            v_min=self.v_min,
            v_max=self.v_max,
            delta_t=self.delta_t,
            process_noise_std=float(np.sqrt(self.process_noise_var)),
            num_steps=self.steps,
            initial_position=initial,
            heading_mode=self.heading_mode,
        )

    def build_filter_config(self) -> FilterConfig:
        return FilterConfig(
            process_noise_var=self._assumed_process_var(),
            measurement_noise_var=self._assumed_measurement_var(),
            num_particles=self.particles,
            resample_threshold=self.resample_threshold,
            resampler=self.resampler,
            correlated_noise=self.correlated_noise,
            v_min=self.v_min,
            v_max=self.v_max,
        )


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ScenarioError(f"expected a boolean, got {text!r}")


def _parse_region(text: str) -> tuple[float, float, float, float]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 4:
        raise ScenarioError(f"region must be 'xmin,ymin,xmax,ymax', got {text!r}")
    return tuple(float(p) for p in parts)


def _parse_point(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise ScenarioError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _parse_points(text: str) -> tuple[tuple[float, float], ...]:
    return tuple(_parse_point(chunk) for chunk in text.split(";") if chunk.strip())


def _parse_optional_float(text: str):
    if text.strip().lower() == "auto":
        return None
    return float(text)


def _parse_optional_point(text: str):
    if text.strip().lower() == "auto":
        return None
    return _parse_point(text)


def _fmt_plain(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_region(value) -> str:
    return ",".join(repr(float(v)) for v in value)


def _fmt_optional(fmt):
    def inner(value):
        return "auto" if value is None else fmt(value)

    return inner


def _fmt_points(value) -> str:
    return "; ".join(f"{repr(float(x))},{repr(float(y))}" for x, y in value)


# key -> (dataclass field, parser, formatter); declaration order is the
# canonical dump/echo order.
_KEY_SPECS: dict[str, tuple[str, object, object]] = {
    "anchors.count": ("anchor_count", int, _fmt_plain),
    "anchors.layout": ("anchor_layout", str.strip, _fmt_plain),
    "anchors.region": ("anchor_region", _parse_region, _fmt_region),
    "anchors.reference": ("anchor_reference", int, _fmt_plain),
    "anchors.positions": (
        "anchor_positions",
        lambda t: None if t.strip().lower() == "auto" else _parse_points(t),
        _fmt_optional(_fmt_points),
    ),
    "mobility.v_min": ("v_min", float, _fmt_plain),
    "mobility.v_max": ("v_max", float, _fmt_plain),
    "mobility.delta_t": ("delta_t", float, _fmt_plain),
    "mobility.steps": ("steps", int, _fmt_plain),
    "mobility.heading_mode": ("heading_mode", str.strip, _fmt_plain),
    "mobility.initial_position": (
        "initial_position",
        _parse_optional_point,
        _fmt_optional(lambda p: f"{repr(float(p[0]))},{repr(float(p[1]))}"),
    ),
    "measurement_noise_var": ("measurement_noise_var", float, _fmt_plain),
    "process_noise_var": ("process_noise_var", float, _fmt_plain),
    "filter.kind": ("filter_kind", str.strip, _fmt_plain),
    "filter.particles": ("particles", int, _fmt_plain),
    "filter.resample_threshold": ("resample_threshold", float, _fmt_plain),
    "filter.resampler": ("resampler", str.strip, _fmt_plain),
    "filter.correlated_noise": ("correlated_noise", _parse_bool, _fmt_plain),
    "filter.assumed_measurement_var": (
        "assumed_measurement_var", _parse_optional_float, _fmt_optional(_fmt_plain),
    ),
    "filter.assumed_process_var": (
        "assumed_process_var", _parse_optional_float, _fmt_optional(_fmt_plain),
    ),
    "rounds": ("rounds", int, _fmt_plain),
    "seed": ("seed", int, _fmt_plain),
}

_FIELD_TO_KEY = {field: key for key, (field, _, _) in _KEY_SPECS.items()}


def _parse_assignments(lines, source: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key not in _KEY_SPECS:
            raise ScenarioError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    """Parse scenario text into a validated ScenarioConfig."""
    raw = _parse_assignments(text.splitlines(), source)
    fields = {}
    for key, value in raw.items():
        field_name, parser, _ = _KEY_SPECS[key]
        try:
            fields[field_name] = parser(value)
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{source}: bad value for {key!r}: {exc}") from exc
    config = ScenarioConfig(**fields)
    config.validate()
    return config


def bundled_scenarios() -> tuple[str, ...]:
    """Names of the scenario files shipped inside the package."""
    root = resources.files(__package__) / "scenarios"
    return tuple(sorted(entry.name for entry in root.iterdir() if entry.is_file()))


def load_scenario(path_or_name: str) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    import os

    if os.path.exists(path_or_name):
        with open(path_or_name, "r", encoding="utf-8") as f:
            return parse_scenario(f.read(), source=str(path_or_name))
    bundle = resources.files(__package__) / "scenarios" / path_or_name
    if bundle.is_file():
        return parse_scenario(bundle.read_text(encoding="utf-8"), source=path_or_name)
    raise ScenarioError(f"scenario file not found: {path_or_name}")


def apply_overrides(config: ScenarioConfig, assignments) -> ScenarioConfig:
    """Apply ``key=value`` override strings and re-validate."""
    raw = _parse_assignments(list(assignments), source="<override>")
    fields = {}
    for key, value in raw.items():
        field_name, parser, _ = _KEY_SPECS[key]
        try:
            fields[field_name] = parser(value)
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad value for {key!r}: {exc}") from exc
    updated = dataclasses.replace(config, **fields)
    updated.validate()
    return updated


def resolved_items(config: ScenarioConfig) -> list[tuple[str, str]]:
    """(key, formatted value) pairs in canonical order."""
    items = []
    for key, (field_name, _, formatter) in _KEY_SPECS.items():
        items.append((key, formatter(getattr(config, field_name))))
    return items


def dump_scenario(config: ScenarioConfig) -> str:
    """Serialize a config in the scenario file format (canonical order)."""
    lines = [f"# scenario-version: {SCENARIO_VERSION}"]
    lines.extend(f"{key} = {value}" for key, value in resolved_items(config))
    return "\n".join(lines) + "\n"


def config_hash(config: ScenarioConfig) -> str:
    """Short stable hash of the resolved configuration."""
    digest = hashlib.sha256(dump_scenario(config).encode("utf-8")).hexdigest()
    return digest[:12]
