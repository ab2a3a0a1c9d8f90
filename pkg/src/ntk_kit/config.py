"""Config files for the experiment runners.

One human-editable ``key = value`` format with sections (INI dialect), plus
JSON with the same section structure as an alternative.  Parsing is strict:
any section or key outside the schema fails with the offending path, and type
errors name the key.  A single file may hold sections for several commands;
only ``[run]`` and the active command's section are consumed.

Mixture descriptors are embedded as JSON values (see ``mixture`` under
``[compare]``); box bounds are fractions of pi/2 unless ``"units": "radians"``
is given.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Optional

from .dual import PRESET_NAMES, preset
from .errors import ConfigError, SpecInvalid
from .sphere import HALF_PI, AngularBox, MixtureSpec

COMMANDS = ("taxonomy", "dynamics", "polefit", "fig2", "compare")


@dataclass(frozen=True)
class ActivationRef:
    """Preset name plus the dimension argument some presets require."""

    name: str
    d: Optional[int] = None

    def build(self):
        return preset(self.name, self.d)

    def label(self) -> str:
        return self.name if self.d is None else f"{self.name}:{self.d}"

    @staticmethod
    def parse(text: str) -> "ActivationRef":
        part = text.strip()
        if ":" in part:
            name, _, dtxt = part.partition(":")
            try:
                d = int(dtxt)
            except ValueError:
                raise ConfigError(f"bad activation dimension in {part!r}") from None
            return ActivationRef(name.strip(), d)
        return ActivationRef(part, None)


# ---------------------------------------------------------------------------
# per-command parameter blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TaxonomyParams:
    activations: tuple[ActivationRef, ...] = (
        ActivationRef("relu"),
        ActivationRef("hermite2"),
        ActivationRef("corollary_d", 1),
        ActivationRef("corollary_d", 2),
        ActivationRef("corollary_d", 4),
        ActivationRef("normalized_sine"),
        ActivationRef("normalized_erf"),
        ActivationRef("linear"),
    )
    tol: float = 1e-8


@dataclass(frozen=True)
class DynamicsParams:
    activation: ActivationRef = ActivationRef("corollary_d", 2)
    z_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    depths: tuple[int, ...] = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)


@dataclass(frozen=True)
class PolefitParams:
    activation: ActivationRef = ActivationRef("corollary_d", 2)
    base: float = 2.0
    eps_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    rtol: float = 1e-14
    max_depth: int = 100_000


@dataclass(frozen=True)
class Fig2Params:
    a: float = 0.5
    b: float = 1.5
    fit_base: Optional[float] = None  # None: reuse b
    z_count: int = 513
    z_max: float = 1.0 - 1e-9
    eps_grid: tuple[float, ...] = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    check_depth: int = 80

    @property
    def resolved_fit_base(self) -> float:
        return self.b if self.fit_base is None else self.fit_base


def _default_mixture() -> MixtureSpec:
    return MixtureSpec(
        dim=2,
        prior_pos=0.5,
        box_pos=AngularBox(lo=(0.0, 0.0), hi=(0.8 * HALF_PI, 0.8 * HALF_PI)),
        box_neg=AngularBox(lo=(0.25 * HALF_PI, 0.25 * HALF_PI), hi=(HALF_PI, HALF_PI)),
        seed=0,
    )


@dataclass(frozen=True)
class CompareParams:
    activation: ActivationRef = ActivationRef("corollary_d", 2)
    mixture: MixtureSpec = field(default_factory=_default_mixture)
    n_schedule: tuple[int, ...] = (100, 500, 2000)
    trials: int = 20
    n_queries: int = 5000
    predictors: tuple[str, ...] = ("machine", "hilbert", "one_nn", "majority", "bayes")
    hilbert_power: Optional[int] = None  # None: mixture dimension
    rtol: float = 1e-12
    max_depth: int = 100_000
    edge_margin: float = 1e-9
    mc_risk_samples: int = 200_000


_PARAM_TYPES = {
    "taxonomy": TaxonomyParams,
    "dynamics": DynamicsParams,
    "polefit": PolefitParams,
    "fig2": Fig2Params,
    "compare": CompareParams,
}

_KNOWN_PREDICTORS = ("machine", "hilbert", "one_nn", "majority", "bayes")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    seed: int = 0
    out_dir: Optional[str] = None
    threads: Optional[int] = None
    params: object = None

    def echo(self) -> dict:
        """Fully resolved config for the report; JSON-serializable."""
        return {
            "command": self.command,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "threads": self.threads,
            self.command: _params_to_dict(self.params),
        }


def _params_to_dict(params) -> dict:
    out = {}
    for f in dc_fields(params):
        v = getattr(params, f.name)
        if isinstance(v, ActivationRef):
            out[f.name] = v.label()
        elif isinstance(v, tuple) and v and isinstance(v[0], ActivationRef):
            out[f.name] = [a.label() for a in v]
        elif isinstance(v, MixtureSpec):
            out[f.name] = mixture_to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def mixture_to_dict(spec: MixtureSpec) -> dict:
    return {
        "dim": spec.dim,
        "prior_p": spec.prior_pos,
        "box_pos": {"lo": list(spec.box_pos.lo), "hi": list(spec.box_pos.hi)},
        "box_neg": {"lo": list(spec.box_neg.lo), "hi": list(spec.box_neg.hi)},
        "seed": spec.seed,
        "units": "radians",
    }


def mixture_from_dict(obj: dict, where: str) -> MixtureSpec:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: mixture must be a JSON object")
    allowed = {"dim", "prior_p", "box_pos", "box_neg", "seed", "units"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown mixture key {sorted(unknown)[0]!r}")
    for req in ("dim", "prior_p", "box_pos", "box_neg"):
        if req not in obj:
            raise ConfigError(f"{where}: mixture missing {req!r}")
    units = obj.get("units", "half_pi")
    if units not in ("half_pi", "radians"):
        raise ConfigError(f"{where}: mixture units must be half_pi or radians")
    scale = HALF_PI if units == "half_pi" else 1.0

    def box(key):
        b = obj[key]
        if not isinstance(b, dict) or set(b) != {"lo", "hi"}:
            raise ConfigError(f"{where}: mixture {key} needs exactly lo and hi lists")
        try:
            return AngularBox(
                lo=tuple(scale * float(v) for v in b["lo"]),
                hi=tuple(scale * float(v) for v in b["hi"]),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: mixture {key}: {exc}") from None
        except SpecInvalid as exc:
            raise ConfigError(f"{where}: mixture {key}: {exc}") from None

    try:
        return MixtureSpec(
            dim=int(obj["dim"]),
            prior_pos=float(obj["prior_p"]),
            box_pos=box("box_pos"),
            box_neg=box("box_neg"),
            seed=int(obj.get("seed", 0)),
        )
    except SpecInvalid as exc:
        raise ConfigError(f"{where}: {exc}") from None


# ---------------------------------------------------------------------------
# value coercion
# ---------------------------------------------------------------------------


def _as_int(v, where):
    try:
        if isinstance(v, str):
            return int(v.strip(), 0)
        if isinstance(v, bool):
            raise ValueError
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected integer, got {v!r}") from None


def _as_float(v, where):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected number, got {v!r}") from None


def _split_list(v, where):
    if isinstance(v, str):
        parts = [p for chunk in v.split(",") for p in chunk.split()]
        return [p for p in parts if p]
    if isinstance(v, (list, tuple)):
        return list(v)
    raise ConfigError(f"{where}: expected a list")


def _as_floats(v, where):
    return tuple(_as_float(p, where) for p in _split_list(v, where))


def _as_ints(v, where):
    return tuple(_as_int(p, where) for p in _split_list(v, where))


def _as_json(v, where):
    if isinstance(v, str):
        try:
            return json.loads(v)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{where}: bad JSON ({exc})") from None
    return v


def _as_activation(v, where):
    ref = ActivationRef.parse(str(v))
    if ref.name not in PRESET_NAMES:
        raise ConfigError(f"{where}: unknown activation {ref.name!r}")
    return ref


def _as_activations(v, where):
    return tuple(_as_activation(p, where) for p in _split_list(v, where))


def _as_strings(v, where):
    return tuple(str(p) for p in _split_list(v, where))


# per-section converters; every legal key appears here
_RUN_KEYS = {"command", "seed", "out", "threads"}

_SECTION_COERCERS = {
    "taxonomy": {"activations": _as_activations, "tol": _as_float},
    "dynamics": {
        "activation": _as_activation,
        "z_grid": _as_floats,
        "depths": _as_ints,
    },
    "polefit": {
        "activation": _as_activation,
        "base": _as_float,
        "eps_grid": _as_floats,
        "rtol": _as_float,
        "max_depth": _as_int,
    },
    "fig2": {
        "a": _as_float,
        "b": _as_float,
        "fit_base": _as_float,
        "z_count": _as_int,
        "z_max": _as_float,
        "eps_grid": _as_floats,
        "check_depth": _as_int,
    },
    "compare": {
        "activation": _as_activation,
        "mixture": _as_json,
        "n_schedule": _as_ints,
        "trials": _as_int,
        "n_queries": _as_int,
        "predictors": _as_strings,
        "hilbert_power": _as_int,
        "rtol": _as_float,
        "max_depth": _as_int,
        "edge_margin": _as_float,
        "mc_risk_samples": _as_int,
    },
}


def _load_sections(path) -> dict:
    """Raw section dict from either format, values untyped."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(obj, dict) or not all(
            isinstance(v, dict) for v in obj.values()
        ):
            raise ConfigError(f"{path}: JSON config must map sections to objects")
        return obj
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if parser.defaults():
        key = next(iter(parser.defaults()))
        raise ConfigError(f"{path}: key {key!r} outside any section")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def _validate_schedules(command: str, params) -> None:
    def increasing(name, seq):
        if not seq:
            raise ConfigError(f"[{command}] {name} must be non-empty")
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(f"[{command}] {name} must be strictly increasing")

    def decreasing_pos(name, seq):
        if not seq:
            raise ConfigError(f"[{command}] {name} must be non-empty")
        if any(v <= 0 for v in seq) or any(b >= a for a, b in zip(seq, seq[1:])):
            raise ConfigError(f"[{command}] {name} must be positive and strictly decreasing")

    if command == "dynamics":
        increasing("z_grid", params.z_grid)
        increasing("depths", params.depths)
        # z = 1 sits on the pole of the normalized kernels
        if params.z_grid[0] < 0.0 or params.z_grid[-1] >= 1.0:
            raise ConfigError("[dynamics] z_grid must lie in [0, 1)")
        if params.depths[0] < 1:
            raise ConfigError("[dynamics] depths must be >= 1")
    elif command == "polefit":
        decreasing_pos("eps_grid", params.eps_grid)
        if params.base <= 1.0:
            raise ConfigError("[polefit] base must exceed 1")
    elif command == "fig2":
        if not (0.0 < params.a < 1.0 < params.b):
            raise ConfigError("[fig2] need 0 < a < 1 < b")
        if params.z_count < 2 or not (0.0 < params.z_max < 1.0):
            raise ConfigError("[fig2] z grid invalid")
        decreasing_pos("eps_grid", params.eps_grid)
        if params.resolved_fit_base <= 1.0:
            raise ConfigError("[fig2] fit_base must exceed 1")
    elif command == "compare":
        increasing("n_schedule", params.n_schedule)
        if params.n_schedule[0] < 1:
            raise ConfigError("[compare] n_schedule must be >= 1")
        if params.trials < 2:
            raise ConfigError("[compare] trials must be >= 2 for error bars")
        if params.n_queries < 1:
            raise ConfigError("[compare] n_queries must be >= 1")
        for p in params.predictors:
            if p not in _KNOWN_PREDICTORS:
                raise ConfigError(f"[compare] unknown predictor {p!r}")
        if not params.predictors:
            raise ConfigError("[compare] predictors must be non-empty")
        if params.edge_margin < 0 or params.edge_margin > 0.1 * HALF_PI:
            raise ConfigError("[compare] edge_margin out of range")
    elif command == "taxonomy":
        if not params.activations:
            raise ConfigError("[taxonomy] activations must be non-empty")


def parse_config(path, command: Optional[str] = None) -> ExperimentConfig:
    """Parse and validate a config file for one command.

    ``command`` normally comes from the CLI subcommand; a ``command`` key in
    ``[run]`` may substitute, and a mismatch between the two is an error.
    """
    sections = _load_sections(path)

    known = set(COMMANDS) | {"run"}
    for sec in sections:
        if sec not in known:
            raise ConfigError(f"{path}: unknown section [{sec}]")
        legal = _RUN_KEYS if sec == "run" else set(_SECTION_COERCERS[sec])
        for key in sections[sec]:
            if key not in legal:
                raise ConfigError(f"{path}: unknown key [{sec}] {key}")

    run = sections.get("run", {})
    file_command = run.get("command")
    if file_command is not None:
        file_command = str(file_command).strip()
        if file_command not in COMMANDS:
            raise ConfigError(f"{path}: unknown command {file_command!r}")
    if command is None:
        command = file_command
        if command is None:
            raise ConfigError(f"{path}: no command given (CLI or [run] command)")
    elif file_command is not None and file_command != command:
        raise ConfigError(
            f"{path}: [run] command = {file_command} but {command} was requested"
        )

    seed = _as_int(run.get("seed", 0), f"{path}: [run] seed")
    if not (0 <= seed < 2**64):
        raise ConfigError(f"{path}: [run] seed must fit in 64 bits")
    out_dir = run.get("out")
    out_dir = None if out_dir is None else str(out_dir)
    threads = run.get("threads")
    threads = None if threads is None else _as_int(threads, f"{path}: [run] threads")
    if threads is not None and threads < 1:
        raise ConfigError(f"{path}: [run] threads must be >= 1")

    coercers = _SECTION_COERCERS[command]
    raw = sections.get(command, {})
    kwargs = {}
    for key, value in raw.items():
        where = f"{path}: [{command}] {key}"
        kwargs[key] = coercers[key](value, where)
    if command == "compare" and "mixture" in kwargs:
        kwargs["mixture"] = mixture_from_dict(
            kwargs["mixture"], f"{path}: [compare] mixture"
        )

    params_type = _PARAM_TYPES[command]
    try:
        params = params_type(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: [{command}] {exc}") from None
    _validate_schedules(command, params)

    if command == "compare":
        _check_compare_semantics(params)

    return ExperimentConfig(
        command=command, seed=seed, out_dir=out_dir, threads=threads, params=params
    )


def _check_compare_semantics(params: CompareParams) -> None:
    """Reject predictor/activation pairings that cannot run."""
    if "machine" in params.predictors:
        dual = params.activation.build()
        if dual.a0 > 1e-8:
            raise ConfigError(
                f"[compare] machine predictor needs a vanishing-mean activation; "
                f"{params.activation.label()} has a0 = {dual.a0:.3g}"
            )
        if params.activation.d is not None and params.activation.d != params.mixture.dim:
            raise ConfigError(
                "[compare] activation dimension must match the mixture dimension "
                f"({params.activation.d} vs {params.mixture.dim})"
            )


def default_config(command: str, seed: int = 0) -> ExperimentConfig:
    """Programmatic config with every default; used by tests and the CLI
    when no file is supplied."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    params = _PARAM_TYPES[command]()
    _validate_schedules(command, params)
    return ExperimentConfig(command=command, seed=seed, params=params)
