import logging
from dataclasses import dataclass
from math import inf
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy

from src.analytics.sweepExperiment import SweepExperimentConfig
from src.core.errors import ConfigError, ValidationError
from src.core.priors import PriorConfig
from src.forward.phantom import makeLetterPhantom
from src.forward.pulse import PulseSpec
from src.forward.simulate import SimConfig
from src.solvers.altmin import SolverOptions
from src.subspace.sweepSubspace import SubspaceOptions
from src.utils import PathLike

logger: logging.Logger = logging.getLogger(__name__)

ORIGIN: str = "core.config"

KINDS: Tuple[str, ...] = ("sim", "prior", "solver", "subspace", "sweep")

Converter = Callable[[str], Any]


def _toFloat(text: str) -> float:
    return float(text)


def _toSnr(text: str) -> float:
    if text.lower() in ("noiseless", "inf"):
        return inf
    return float(text)


def _toInt(text: str) -> int:
    return int(text)


def _toBool(text: str) -> bool:
    lowered: str = text.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _toText(text: str) -> str:
    return text


def _toSigma(text: str) -> Optional[float]:
    """Standard deviation in the file, variance in memory."""
    if text.lower() == "auto":
        return None
    return float(text) ** 2


def _rangeValues(text: str, convert: Converter) -> List[Any]:
    """``a..b`` or ``a..b:step`` (inclusive) or a comma list."""
    if ".." not in text:
        return [convert(part.strip()) for part in text.split(",") if part]

    bounds: str = text
    step: Any = convert("1")
    if ":" in text:
        bounds, stepText = text.split(":", 1)
        step = convert(stepText.strip())

    start, stop = (convert(part.strip()) for part in bounds.split("..", 1))
    if step <= 0:
        raise ValueError("range step must be > 0")

    count: int = int(numpy.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(max(count, 0))]


def _toIntTuple(text: str) -> Tuple[int, ...]:
    return tuple(_rangeValues(text, int))


def _toFloatTuple(text: str) -> Tuple[float, ...]:
    return tuple(_rangeValues(text, _toSnr))


# key -> (converter, default); None defaults are derived by the builder
FIELDS: Dict[str, Dict[str, Tuple[Converter, Any]]] = {
    "sim": {
        "t0": (_toFloat, 1e-12),
        "pulse_width": (_toFloat, None),
        "width": (_toInt, 64),
        "height": (_toInt, 64),
        "glyph": (_toText, "M"),
        "glyph_scale": (_toInt, None),
        "rho0": (_toFloat, 0.3),
        "rho1": (_toFloat, 0.1),
        "thickness": (_toFloat, 1e-4),
        "n_rho": (_toFloat, 2.0),
        "c": (_toFloat, 299792458.0),
        "pixel_pitch_x": (_toFloat, 1e-4),
        "pixel_pitch_y": (_toFloat, 1e-4),
        "tilt_alpha1": (_toFloat, 1e-6),
        "tilt_alpha2": (_toFloat, 1e-4),
        "z0": (_toFloat, 0.0),
        "frames": (_toInt, 10),
        "window_start": (_toFloat, None),
        "window_end": (_toFloat, None),
        "snr_db": (_toSnr, 10.0),
        "seed": (_toInt, 0),
        "n_reflections": (_toInt, 5),
        "noise_mode": (_toText, "stack"),
        "surface": (_toText, "tilt"),
        "bump_amplitude": (_toFloat, 2e-6),
        "bump_count": (_toInt, 4),
        "bump_width": (_toFloat, 0.15),
    },
    "prior": {
        "rho0": (_toFloat, 0.3),
        "rho1": (_toFloat, 0.1),
        "sigma0": (_toSigma, 1e-10),
        "sigma1": (_toSigma, 1e-10),
        "p0": (_toFloat, 0.5),
        "p1": (_toFloat, 0.5),
        "noise_sigma": (_toSigma, None),
    },
    "solver": {
        "max_iters": (_toInt, 50),
        "rel_tol": (_toFloat, 1e-6),
        "rho_floor": (_toFloat, 1e-8),
        "exact_truncation_constants": (_toBool, False),
    },
    "subspace": {
        "family": (_toText, "sym4"),
        "n_coefficients": (_toInt, 100),
        "levels": (_toInt, 0),
        "force_scaling": (_toBool, False),
    },
    "sweep": {
        "frame_counts": (_toIntTuple, tuple(range(3, 21))),
        "snr_values": (
            _toFloatTuple,
            tuple(float(v) for v in range(0, 21, 2)),
        ),
        "trials": (_toInt, 10),
        "subspace_mode": (_toText, "oracle"),
        "seed": (_toInt, 0),
        "pool_frames": (_toInt, 20),
        "fixed_frames": (_toInt, 10),
        "snr_db": (_toSnr, 10.0),
        "workers": (_toInt, 1),
    },
}

WINDOW_HALF_WIDTH: float = 0.4e-12


@dataclass(frozen=True)
class ConfigEntry:
    section: Optional[str]
    key: str
    value: str
    line: Optional[int]


def _declared(key: str) -> bool:
    return any(key in fields for fields in FIELDS.values())


def scanConfigText(text: str) -> List[ConfigEntry]:
    """
    Tokenize the key=value grammar: ``#`` comments, blank lines, optional
    ``[section]`` headers. Every non-blank line either yields an entry or a
    :class:`ConfigError` carrying its line number.
    """
    entries: List[ConfigEntry] = []
    section: Optional[str] = None
    seen: Dict[Tuple[Optional[str], str], int] = {}

    lineNumber: int
    raw: str
    for lineNumber, raw in enumerate(text.splitlines(), start=1):
        line: str = raw.split("#", 1)[0].strip()
        if not line:
            continue

        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in KINDS:
                raise ConfigError(
                    ORIGIN,
                    f"unknown section; expected one of {KINDS}",
                    key=section,
                    line=lineNumber,
                )
            continue

        if "=" not in line:
            raise ConfigError(
                ORIGIN, f"expected key=value, got {line!r}", line=lineNumber
            )

        key, value = (part.strip() for part in line.split("=", 1))
        known: bool = (
            key in FIELDS[section] if section is not None else _declared(key)
        )
        if not known:
            raise ConfigError(ORIGIN, "unknown key", key=key, line=lineNumber)
        if (section, key) in seen:
            raise ConfigError(
                ORIGIN,
                f"duplicate of line {seen[(section, key)]}",
                key=key,
                line=lineNumber,
            )

        seen[(section, key)] = lineNumber
        entries.append(ConfigEntry(section, key, value, lineNumber))

    return entries


def parseOverrides(overrides: Sequence[str]) -> List[ConfigEntry]:
    """
    Parse ``key=value`` / ``section.key=value`` command-line overrides.
    """
    entries: List[ConfigEntry] = []

    override: str
    for override in overrides:
        if "=" not in override:
            raise ConfigError(ORIGIN, f"expected key=value: {override!r}")

        target, value = (part.strip() for part in override.split("=", 1))
        section: Optional[str] = None
        key: str = target
        if "." in target:
            section, key = target.split(".", 1)
            if section not in KINDS:
                raise ConfigError(ORIGIN, "unknown section", key=target)
            if key not in FIELDS[section]:
                raise ConfigError(ORIGIN, "unknown key", key=target)
        elif not _declared(key):
            raise ConfigError(ORIGIN, "unknown key", key=key)

        entries.append(ConfigEntry(section, key, value, None))

    return entries


def _collect(
    entries: Sequence[ConfigEntry], kind: str
) -> Tuple[Dict[str, Any], Dict[str, Optional[int]]]:
    fields: Dict[str, Tuple[Converter, Any]] = FIELDS[kind]
    values: Dict[str, Any] = {
        key: default for key, (_, default) in fields.items()
    }
    lines: Dict[str, Optional[int]] = {}

    entry: ConfigEntry
    for entry in entries:
        if entry.key not in fields or entry.section not in (None, kind):
            continue

        lines[entry.key] = entry.line
        if entry.value == "":
            values[entry.key] = fields[entry.key][1]
            continue

        try:
            values[entry.key] = fields[entry.key][0](entry.value)
        except ValueError as error:
            raise ConfigError(
                ORIGIN,
                f"invalid value {entry.value!r} ({error})",
                key=entry.key,
                line=entry.line,
            )

    return values, lines


def _buildSim(values: Dict[str, Any]) -> SimConfig:
    t0: float = values["t0"]
    width: float = values["pulse_width"]
    if width is None:
        width = t0 / 4.0

    start: float = values["window_start"]
    end: float = values["window_end"]
    if start is None:
        start = t0 - WINDOW_HALF_WIDTH
    if end is None:
        end = t0 + WINDOW_HALF_WIDTH

    if values["frames"] < 1:
        raise ValidationError(ORIGIN, "must be >= 1", "frames")

    return SimConfig(
        pulse=PulseSpec(t0=t0, width=width),
        phantom=makeLetterPhantom(
            width=values["width"],
            height=values["height"],
            glyph=values["glyph"],
            rho0=values["rho0"],
            rho1=values["rho1"],
            scale=values["glyph_scale"],
            thickness=values["thickness"],
            nRho=values["n_rho"],
            c=values["c"],
            pixelPitchX=values["pixel_pitch_x"],
            pixelPitchY=values["pixel_pitch_y"],
        ),
        sampleTimes=numpy.linspace(start, end, values["frames"]),
        tiltAlpha1=values["tilt_alpha1"],
        tiltAlpha2=values["tilt_alpha2"],
        z0=values["z0"],
        snrDb=values["snr_db"],
        rngSeed=values["seed"],
        nReflections=values["n_reflections"],
        noiseMode=values["noise_mode"],
        surface=values["surface"],
        bumpAmplitude=values["bump_amplitude"],
        bumpCount=values["bump_count"],
        bumpWidth=values["bump_width"],
    )


def _buildPrior(values: Dict[str, Any]) -> PriorConfig:
    return PriorConfig(
        rho0=values["rho0"],
        rho1=values["rho1"],
        sigma0Sq=values["sigma0"],
        sigma1Sq=values["sigma1"],
        p0=values["p0"],
        p1=values["p1"],
        noiseSigmaSq=values["noise_sigma"],
    )


def _buildSolver(values: Dict[str, Any]) -> SolverOptions:
    return SolverOptions(
        maxIters=values["max_iters"],
        relTol=values["rel_tol"],
        rhoFloor=values["rho_floor"],
        exactTruncationConstants=values["exact_truncation_constants"],
    )


def _buildSubspace(values: Dict[str, Any]) -> SubspaceOptions:
    return SubspaceOptions(
        family=values["family"],
        nCoefficients=values["n_coefficients"],
        levels=values["levels"],
        forceScaling=values["force_scaling"],
    )


def _buildSweep(values: Dict[str, Any]) -> SweepExperimentConfig:
    return SweepExperimentConfig(
        frameCounts=values["frame_counts"],
        snrValues=values["snr_values"],
        trials=values["trials"],
        subspaceMode=values["subspace_mode"],
        seed=values["seed"],
        poolFrames=values["pool_frames"],
        fixedFrames=values["fixed_frames"],
        snrDb=values["snr_db"],
        workers=values["workers"],
    )


BUILDERS: Dict[str, Callable[[Dict[str, Any]], Any]] = {
    "sim": _buildSim,
    "prior": _buildPrior,
    "solver": _buildSolver,
    "subspace": _buildSubspace,
    "sweep": _buildSweep,
}

# invariant field names that differ from the config key they come from
FIELD_KEYS: Dict[str, str] = {
    "sample_times": "frames",
    "labels": "glyph",
    "reflectance": "rho0",
    "tau_rho": "thickness",
}


def parseConfigText(
    text: str, kind: str, overrides: Sequence[str] = ()
) -> Any:
    """
    Build a typed config of ``kind`` from key=value text.

    Keys of other kinds are ignored; keys no kind declares are rejected.
    Overrides win over file values; a bare override key applies to every
    kind declaring it, ``section.key`` to one kind only.

    :param text: Config file contents.
    :type text: str
    :param kind: One of ``sim``, ``prior``, ``solver``, ``subspace``,
        ``sweep``.
    :type kind: str
    :param overrides: ``key=value`` strings.
    :type overrides: Sequence[str]
    :return: ``SimConfig``, ``PriorConfig``, ``SolverOptions``,
        ``SubspaceOptions`` or ``SweepExperimentConfig``.
    :rtype: Any
    """
    if kind not in KINDS:
        raise ConfigError(ORIGIN, f"unknown config kind {kind!r}")

    entries: List[ConfigEntry] = scanConfigText(text) + parseOverrides(
        overrides
    )

    values: Dict[str, Any]
    lines: Dict[str, Optional[int]]
    values, lines = _collect(entries, kind)

    try:
        return BUILDERS[kind](values)
    except ValidationError as error:
        key: str = FIELD_KEYS.get(error.field, error.field)
        raise ConfigError(
            ORIGIN, error.message, key=key, line=lines.get(key)
        )


def parseConfig(
    path: Optional[PathLike], kind: str, overrides: Sequence[str] = ()
) -> Any:
    """
    :func:`parseConfigText` on a file; ``path=None`` means defaults plus
    overrides.
    """
    text: str = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as error:
            raise ConfigError(ORIGIN, f"cannot read {path}: {error}")

    logger.debug("parsing %s config from %s", kind, path or "defaults")
    return parseConfigText(text, kind, overrides)
