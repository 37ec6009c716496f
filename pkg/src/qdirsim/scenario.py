"""Scenario files: strict TOML configuration and the objects built from it.

A scenario file has up to six tables, each optional::

    name = "default_protocol"

    [geometry]   # transmitter layout and feasibility margin
    [grid]       # momentum grid
    [state]      # source state, image and message alphabet
    [channel]    # detector kind plus an optical chain ([[channel.chain]])
    [noise]      # transmitter-side noise
    [run]        # event counts, seed, attack and sweep settings

Unknown tables or keys are rejected by name.  Bundled scenarios live in
``qdirsim/scenarios`` and can be referred to by bare name.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from .adversary import NoisePolicy, compute_marginal_bias, offset_policy
from .errors import ConfigError
from .geometry import DEFAULT_MARGIN, SystemGeometry, check_feasibility
from .measurement import ArrivalProcess, MeasurementChannel
from .optics import TransferFunction
from .state import (
    ImageSpec,
    TransverseGrid,
    make_difference_correlated_state,
    narrow_beam_state,
)

STATE_KINDS = ("difference_correlated", "difference_kernel", "narrow_beams")


@dataclass(frozen=True)
class GeometryConfig:
    transmitter_separation: float = 0.1
    range: float = 1.0
    opening_angle_narrow: float = 1e-3
    image_separation: float = 4.0
    pump_wavelength: float = 0.5
    margin: float = DEFAULT_MARGIN


@dataclass(frozen=True)
class GridConfig:
    n_points: int = 256
    q_max: float = 8 * math.pi


@dataclass(frozen=True)
class StateConfig:
    kind: str = "difference_correlated"
    sum_width: float = 6.0
    dot_width: float = 0.5
    dot_positions: tuple | None = None      # default: +-image_separation / 2
    encoding: str = "relative"
    beam_divergence: float = 0.01           # narrow_beams only, radians
    alphabet: tuple = (4.0, 8.0)            # dot separations of the message images


@dataclass(frozen=True)
class ChannelConfig:
    kind: str = "wide_acceptance_biphoton"
    arm: str = "both"
    cutoff: float | None = None
    chain: tuple = ()


@dataclass(frozen=True)
class NoiseConfig:
    background_rate: float = 0.0
    offset: str = "none"                    # "auto" or "none"


@dataclass(frozen=True)
class RunConfig:
    n_events: int = 10_000
    seed: int = 42
    output_dir: str = "qdirsim_out"
    arrival: str = "geometric"
    mean_interval: float = 4.0
    period: int = 3
    window: int = 50
    mask_width: float | None = None         # default: half the opening angle
    blocking_threshold: float = 0.1
    significance: float = 0.01
    bootstrap: int = 200
    cutoffs: tuple = (0.05, 0.1, 0.25, 0.5, 1.0, 2.0)


_BLOCKS = {
    "geometry": GeometryConfig,
    "grid": GridConfig,
    "state": StateConfig,
    "channel": ChannelConfig,
    "noise": NoiseConfig,
    "run": RunConfig,
}
_CHAIN_KEYS = {f.name for f in fields(TransferFunction)}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    description: str = ""
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    state: StateConfig = field(default_factory=StateConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def replace_run(self, **changes):
        """Copy with ``run`` fields overridden (``None`` values ignored)."""
        changes = {k: v for k, v in changes.items() if v is not None}
        run = RunConfig(**{**asdict(self.run), **changes})
        return ScenarioConfig(**{**self.__dict__, "run": run}).validated()

    def validated(self):
        validate(self)
        return self


def _coerce(block, key, value, default):
    where = f"{block}.{key}"
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{where}: booleans are not accepted")
    if isinstance(default, float) or (default is None and isinstance(value, (int, float))):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple) or isinstance(value, list):
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _parse_chain(items):
    chain = []
    for n, item in enumerate(items):
        if not isinstance(item, dict):
            raise ConfigError(f"channel.chain[{n}] must be a table")
        unknown = set(item) - _CHAIN_KEYS
        if unknown:
            raise ConfigError(f"unknown key channel.chain[{n}].{sorted(unknown)[0]}")
        try:
            chain.append(TransferFunction(**item))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"channel.chain[{n}]: {exc}") from exc
    return tuple(chain)


def _parse_block(name, table):
    cls = _BLOCKS[name]
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    defaults = {f.name: f.default for f in fields(cls)}
    values = {}
    for key, value in table.items():
        if key not in defaults:
            raise ConfigError(f"unknown key {name}.{key}")
        if name == "channel" and key == "chain":
            values[key] = _parse_chain(value)
        else:
            values[key] = _coerce(name, key, value, defaults[key])
    return cls(**values)


def from_dict(data):
    """Build a validated :class:`ScenarioConfig` from parsed TOML."""
    kwargs = {}
    for key, value in data.items():
        if key in ("name", "description"):
            if not isinstance(value, str):
                raise ConfigError(f"{key}: expected a string")
            kwargs[key] = value
        elif key in _BLOCKS:
            kwargs[key] = _parse_block(key, value)
        else:
            raise ConfigError(f"unknown key {key}")
    return ScenarioConfig(**kwargs).validated()


def loads(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    return from_dict(data)


def bundled_names():
    root = resources.files("qdirsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def read_config_text(source):
    """Text of a scenario given a path or the name of a bundled scenario."""
    path = Path(source)
    if path.is_file():
        return path.read_text()
    if source in bundled_names():
        return (resources.files("qdirsim") / "scenarios" / f"{source}.toml").read_text()
    raise ConfigError(f"config file not found: {source}")


def load(source):
    """Parse a scenario file (path or bundled name)."""
    return loads(read_config_text(source))


def to_dict(cfg):
    """Plain TOML-ready mapping; ``None`` entries are omitted."""
    out = {"name": cfg.name}
    if cfg.description:
        out["description"] = cfg.description
    for name in _BLOCKS:
        block = {}
        for f in fields(_BLOCKS[name]):
            value = getattr(getattr(cfg, name), f.name)
            if value is None:
                continue
            if f.name == "chain":
                value = [tf.to_dict() for tf in value]
            elif isinstance(value, tuple):
                value = list(value)
            block[f.name] = value
        out[name] = block
    return out


def dumps(cfg):
    return tomli_w.dumps(to_dict(cfg))


def config_hash(cfg):
    """SHA-256 of the canonical serialisation."""
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


def validate(cfg):
    """Check cross-field consistency by building the domain objects."""
    run = cfg.run
    if run.n_events < 1:
        raise ConfigError(f"run.n_events must be >= 1, got {run.n_events}")
    if not 0 <= run.seed < 2 ** 64:
        raise ConfigError("run.seed must be an unsigned 64-bit integer")
    if run.window < 1 or run.bootstrap < 2:
        raise ConfigError("run.window must be >= 1 and run.bootstrap >= 2")
    if cfg.state.kind not in STATE_KINDS:
        raise ConfigError(f"state.kind must be one of {STATE_KINDS}, got {cfg.state.kind!r}")
    if cfg.noise.offset not in ("auto", "none"):
        raise ConfigError("noise.offset must be 'auto' or 'none'")
    if cfg.noise.background_rate < 0:
        raise ConfigError("noise.background_rate must be >= 0")
    sc = Scenario(cfg)
    for attr in ("geometry", "grid", "image", "state", "channel", "arrival"):
        try:
            getattr(sc, attr)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{attr}: {exc}") from exc


class Scenario:
    """Domain objects built lazily from a :class:`ScenarioConfig`."""

    def __init__(self, config):
        self.config = config

    @property
    def name(self):
        return self.config.name

    @cached_property
    def geometry(self):
        g = self.config.geometry
        return SystemGeometry(g.transmitter_separation, g.range, g.opening_angle_narrow,
                              g.image_separation, g.pump_wavelength)

    @property
    def p_z(self):
        return self.geometry.axial_momentum

    def feasibility(self):
        return check_feasibility(self.geometry, self.config.geometry.margin)

    @cached_property
    def grid(self):
        return TransverseGrid(self.config.grid.n_points, self.config.grid.q_max)

    @cached_property
    def image(self):
        s = self.config.state
        dots = s.dot_positions
        if dots is None:
            half = self.config.geometry.image_separation / 2
            dots = (-half, half)
        return ImageSpec(dots, s.dot_width, s.encoding)

    @cached_property
    def alphabet(self):
        s = self.config.state
        return [ImageSpec.two_dots(sep, dot_width=s.dot_width, encoding=s.encoding)
                for sep in s.alphabet]

    def make_state(self, image=None):
        """Source state carrying ``image`` (the scenario image by default)."""
        s = self.config.state
        momenta = self.geometry.source_momenta
        if s.kind == "narrow_beams":
            return narrow_beam_state(self.grid, momenta, self.p_z * s.beam_divergence)
        sum_width = s.sum_width if s.kind == "difference_correlated" else None
        return make_difference_correlated_state(self.grid, sum_width, image or self.image,
                                                momenta)

    @cached_property
    def state(self):
        return self.make_state()

    @cached_property
    def channel(self):
        c = self.config.channel
        return MeasurementChannel(c.kind, c.chain, c.cutoff, c.arm)

    def single_photon_channel(self):
        """The adversary's view: single photons from both arms behind the same chain."""
        return MeasurementChannel("narrow_acceptance_single", self.channel.chain,
                                  self.channel.cutoff, "both")

    @cached_property
    def arrival(self):
        r = self.config.run
        return ArrivalProcess(r.arrival, r.mean_interval, r.period)

    @property
    def mask_width(self):
        w = self.config.run.mask_width
        return self.geometry.opening_angle_full / 2 if w is None else w

    def noise_policy(self):
        n = self.config.noise
        if n.offset == "none":
            return NoisePolicy(background_rate=n.background_rate)
        detected = self.single_photon_channel().prepare(self.state, self.p_z)
        bias = compute_marginal_bias(detected, self.p_z)
        return offset_policy(bias, self.grid, self.p_z, background_rate=n.background_rate)
