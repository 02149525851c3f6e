"""Vehicle command space: typed drive/aux commands, parsing, validation, clamping.

A command is a drive pair (steering angle in degrees, speed in km/h), an
auxiliary section (alarm/ramp/wiper/door switches plus a speaker message),
or both. A ``VehicleProfile`` declares what a given vehicle model accepts;
commands outside the profile are either reported as violations or projected
back onto the nearest admissible value.

The canonical wire form is a flat JSON object with a ``drive`` and/or an
``aux`` section::

    {"drive": {"steer_deg": 10.0, "speed_kmh": 25.0}, "aux": {"alarm": 1}}

``parse_command`` finds such blocks inside free-form model output (fenced or
inline); ``serialize_command`` renders the canonical form back out.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional

DRIVE_KEYS = ("steer_deg", "speed_kmh")
AUX_FLAG_KEYS = ("alarm", "ramp", "wiper", "door")
AUX_KEYS = AUX_FLAG_KEYS + ("speaker",)


class CommandParseError(Exception):
    """Base class for command extraction failures."""


class NoCommandFound(CommandParseError):
    """The text carries no structured command block."""


class MalformedCommand(CommandParseError):
    """A command block is present but its fields cannot be typed."""


class AmbiguousCommand(CommandParseError):
    """Strict parsing found more than one command block."""


@dataclass(frozen=True)
class SteeringAngle:
    """Steering angle in degrees; positive steers right."""

    degrees: float

    def __post_init__(self) -> None:
        value = float(self.degrees)
        if not math.isfinite(value):
            raise ValueError(f"steering angle must be finite, got {self.degrees!r}")
        object.__setattr__(self, "degrees", value)


@dataclass(frozen=True)
class Speed:
    """Forward speed in km/h; reverse is not part of the command space."""

    kmh: float

    def __post_init__(self) -> None:
        value = float(self.kmh)
        if not math.isfinite(value):
            raise ValueError(f"speed must be finite, got {self.kmh!r}")
        if value < 0:
            raise ValueError(f"speed must be non-negative, got {self.kmh!r}")
        object.__setattr__(self, "kmh", value)


def _as_flag(name: str, value) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    raise ValueError(f"aux flag {name!r} must be 0 or 1, got {value!r}")


@dataclass(frozen=True)
class AuxCommand:
    """Auxiliary switches and the speaker message; unset fields are None.

    An AuxCommand with every field unset is a well-formed no-op (it can be
    produced by clamping when a profile disables every requested field).
    """

    alarm: Optional[int] = None
    ramp: Optional[int] = None
    wiper: Optional[int] = None
    door: Optional[int] = None
    speaker: Optional[str] = None

    def __post_init__(self) -> None:
        for name in AUX_FLAG_KEYS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _as_flag(name, value))
        if self.speaker is not None and not isinstance(self.speaker, str):
            raise ValueError(f"speaker must be text, got {self.speaker!r}")

    def used_fields(self) -> tuple[tuple[str, object], ...]:
        """(name, value) pairs for every field that is set."""
        return tuple(
            (name, getattr(self, name))
            for name in AUX_KEYS
            if getattr(self, name) is not None
        )


@dataclass(frozen=True)
class CommandEnvelope:
    """One parsed command: a drive pair, an aux section, or both.

    ``source_span`` is the character range the command occupied in the
    originating text; it is ignored by equality so round-trips compare clean.
    """

    drive: Optional[tuple[SteeringAngle, Speed]] = None
    aux: Optional[AuxCommand] = None
    source_span: Optional[tuple[int, int]] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.drive is None and self.aux is None:
            raise ValueError("envelope needs a drive or aux section")
        if self.drive is not None:
            steer, speed = self.drive
            if not isinstance(steer, SteeringAngle) or not isinstance(speed, Speed):
                raise ValueError("drive must be a (SteeringAngle, Speed) pair")

    @property
    def steer_deg(self) -> Optional[float]:
        return self.drive[0].degrees if self.drive is not None else None

    @property
    def speed_kmh(self) -> Optional[float]:
        return self.drive[1].kmh if self.drive is not None else None


@dataclass(frozen=True)
class VehicleProfile:
    """Admissible command ranges for one vehicle model.

    Bounds are closed intervals and are treated as exact values; declare
    them at 0.1 resolution so clamped outputs stay on the 0.1 grid.
    """

    name: str = "default"
    steer_min_deg: float = -30.0
    steer_max_deg: float = 30.0
    speed_max_kmh: float = 40.0
    aux_enabled: frozenset = frozenset(AUX_KEYS)
    speaker_max_chars: int = 280

    def __post_init__(self) -> None:
        if not self.steer_min_deg < self.steer_max_deg:
            raise ValueError("steer_min_deg must be below steer_max_deg")
        if not self.speed_max_kmh > 0:
            raise ValueError("speed_max_kmh must be positive")
        object.__setattr__(self, "aux_enabled", frozenset(self.aux_enabled))
        unknown = self.aux_enabled - set(AUX_KEYS)
        if unknown:
            raise ValueError(f"unknown aux fields: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "VehicleProfile":
        kwargs = {}
        for key in ("name", "steer_min_deg", "steer_max_deg", "speed_max_kmh", "speaker_max_chars"):
            if key in data:
                kwargs[key] = data[key]
        if "aux_enabled" in data:
            enabled = data["aux_enabled"]
            if isinstance(enabled, dict):
                kwargs["aux_enabled"] = frozenset(k for k, v in enabled.items() if v)
            else:
                kwargs["aux_enabled"] = frozenset(enabled)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "VehicleProfile":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


DEFAULT_PROFILE = VehicleProfile()


@dataclass(frozen=True)
class Violation:
    """One field outside the profile: what was seen and what is permitted."""

    field: str
    observed: object
    permitted: str

    def describe(self) -> str:
        return f"{self.field}={self.observed!r} outside {self.permitted}"


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    violations: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class ClampAction:
    """One modification made while projecting a command into the profile."""

    field: str
    before: object
    after: object  # None when the field was dropped


@dataclass(frozen=True)
class ClampResult:
    envelope: CommandEnvelope
    changes: tuple[ClampAction, ...] = ()


def validate_command(env: CommandEnvelope, profile: VehicleProfile = DEFAULT_PROFILE) -> ValidationResult:
    """Check every field of ``env`` against ``profile``.

    All failing fields are reported, not just the first. Validation
    failures are data, never exceptions.
    """
    violations: list[Violation] = []
    if env.drive is not None:
        steer, speed = env.drive
        if not profile.steer_min_deg <= steer.degrees <= profile.steer_max_deg:
            violations.append(Violation(
                "steer_deg", steer.degrees,
                f"[{profile.steer_min_deg}, {profile.steer_max_deg}]",
            ))
        if not 0.0 <= speed.kmh <= profile.speed_max_kmh:
            violations.append(Violation(
                "speed_kmh", speed.kmh, f"[0, {profile.speed_max_kmh}]",
            ))
    if env.aux is not None:
        for name, value in env.aux.used_fields():
            if name not in profile.aux_enabled:
                violations.append(Violation(
                    name, value, f"disabled in profile {profile.name!r}",
                ))
            elif name == "speaker" and len(value) > profile.speaker_max_chars:
                violations.append(Violation(
                    "speaker", f"{len(value)} chars",
                    f"<= {profile.speaker_max_chars} chars",
                ))
    return ValidationResult(valid=not violations, violations=tuple(violations))


def clamp_to_safe(env: CommandEnvelope, profile: VehicleProfile = DEFAULT_PROFILE) -> ClampResult:
    """Project ``env`` onto the profile's admissible space.

    Drive scalars move to the nearest bound; aux fields the profile does
    not allow are dropped. The result always passes validate_command and
    re-clamping it is the identity.
    """
    changes: list[ClampAction] = []
    drive = env.drive
    if drive is not None:
        steer, speed = drive
        new_steer = min(max(steer.degrees, profile.steer_min_deg), profile.steer_max_deg)
        new_speed = min(speed.kmh, profile.speed_max_kmh)
        if new_steer != steer.degrees:
            changes.append(ClampAction("steer_deg", steer.degrees, new_steer))
            steer = SteeringAngle(new_steer)
        if new_speed != speed.kmh:
            changes.append(ClampAction("speed_kmh", speed.kmh, new_speed))
            speed = Speed(new_speed)
        drive = (steer, speed)

    aux = env.aux
    if aux is not None:
        kept = {}
        for name, value in aux.used_fields():
            if name not in profile.aux_enabled:
                changes.append(ClampAction(name, value, None))
            elif name == "speaker" and len(value) > profile.speaker_max_chars:
                changes.append(ClampAction("speaker", f"{len(value)} chars", None))
            else:
                kept[name] = value
        if kept != dict(aux.used_fields()):
            aux = AuxCommand(**kept) if (kept or drive is None) else None

    return ClampResult(envelope=CommandEnvelope(drive=drive, aux=aux), changes=tuple(changes))


# --- parsing -----------------------------------------------------------

_KV_NUM_RE = re.compile(r"\b(steer_deg|speed_kmh)\s*[:=]\s*(-?\d+(?:\.\d+)?)")
_KV_FLAG_RE = re.compile(r"\b(alarm|ramp|wiper|door)\s*[:=]\s*(0|1|true|false)\b", re.IGNORECASE)
_KV_SPEAKER_RE = re.compile(r"\bspeaker\s*[:=]\s*\"([^\"\n]*)\"")

_decoder = json.JSONDecoder()


def _scan_blocks(text: str) -> list[tuple[dict, int, int]]:
    """All top-level JSON objects in ``text`` carrying a drive or aux key."""
    blocks: list[tuple[dict, int, int]] = []
    i = 0
    while True:
        start = text.find("{", i)
        if start < 0:
            break
        try:
            obj, end = _decoder.raw_decode(text, start)
        except ValueError:
            i = start + 1
            continue
        if isinstance(obj, dict) and ("drive" in obj or "aux" in obj):
            blocks.append((obj, start, end))
            i = end
        else:
            i = start + 1
    return blocks


def _number(section: str, key: str, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedCommand(f"{section}.{key} must be a number, got {value!r}")
    return float(value)


def _envelope_from_obj(obj: dict, span: tuple[int, int]) -> CommandEnvelope:
    unknown = set(obj) - {"drive", "aux"}
    if unknown:
        raise MalformedCommand(f"unknown command sections: {sorted(unknown)}")

    drive = None
    if "drive" in obj:
        section = obj["drive"]
        if not isinstance(section, dict):
            raise MalformedCommand("drive section must be an object")
        extra = set(section) - set(DRIVE_KEYS)
        if extra:
            raise MalformedCommand(f"unknown drive fields: {sorted(extra)}")
        missing = set(DRIVE_KEYS) - set(section)
        if missing:
            raise MalformedCommand(f"drive section missing {sorted(missing)}")
        try:
            drive = (
                SteeringAngle(_number("drive", "steer_deg", section["steer_deg"])),
                Speed(_number("drive", "speed_kmh", section["speed_kmh"])),
            )
        except ValueError as exc:
            raise MalformedCommand(str(exc)) from exc

    aux = None
    if "aux" in obj:
        section = obj["aux"]
        if not isinstance(section, dict):
            raise MalformedCommand("aux section must be an object")
        extra = set(section) - set(AUX_KEYS)
        if extra:
            raise MalformedCommand(f"unknown aux fields: {sorted(extra)}")
        try:
            aux = AuxCommand(**section)
        except ValueError as exc:
            raise MalformedCommand(str(exc)) from exc

    if drive is None and aux is None:
        raise MalformedCommand("command block has no usable section")
    return CommandEnvelope(drive=drive, aux=aux, source_span=span)


def _envelope_from_keyvalues(text: str) -> Optional[CommandEnvelope]:
    numbers = list(_KV_NUM_RE.finditer(text))
    flags = list(_KV_FLAG_RE.finditer(text))
    speakers = list(_KV_SPEAKER_RE.finditer(text))
    if not numbers and not flags and not speakers:
        return None

    spans = [m.span() for m in numbers + flags + speakers]
    span = (min(s for s, _ in spans), max(e for _, e in spans))

    drive_fields: dict[str, float] = {}
    for m in numbers:
        drive_fields[m.group(1)] = float(m.group(2))
    drive = None
    if drive_fields:
        missing = set(DRIVE_KEYS) - set(drive_fields)
        if missing:
            raise MalformedCommand(f"drive pair incomplete, missing {sorted(missing)}")
        try:
            drive = (SteeringAngle(drive_fields["steer_deg"]), Speed(drive_fields["speed_kmh"]))
        except ValueError as exc:
            raise MalformedCommand(str(exc)) from exc

    aux_fields: dict[str, object] = {}
    for m in flags:
        aux_fields[m.group(1).lower()] = 1 if m.group(2).lower() in ("1", "true") else 0
    if speakers:
        aux_fields["speaker"] = speakers[-1].group(1)
    aux = AuxCommand(**aux_fields) if aux_fields else None

    return CommandEnvelope(drive=drive, aux=aux, source_span=span)


def parse_command(text: str, mode: str = "strict") -> CommandEnvelope:
    """Extract one command from model output.

    Strict mode accepts exactly one canonical block (inline or fenced —
    the scanner sees through fences since it hunts JSON objects). Lenient
    mode takes the first block, falling back to loose ``key: value`` pairs
    using the canonical field names.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    if not text:
        raise NoCommandFound("empty text")

    blocks = _scan_blocks(text)
    if mode == "strict":
        if not blocks:
            raise NoCommandFound("no command block in text")
        if len(blocks) > 1:
            raise AmbiguousCommand(f"{len(blocks)} command blocks in strict mode")
        obj, start, end = blocks[0]
        return _envelope_from_obj(obj, (start, end))

    if blocks:
        obj, start, end = blocks[0]
        return _envelope_from_obj(obj, (start, end))
    env = _envelope_from_keyvalues(text)
    if env is None:
        raise NoCommandFound("no command block or key-value pairs in text")
    return env


def extract_commands(text: str) -> list[CommandEnvelope]:
    """Every command in ``text`` (all blocks; key-value fallback when none).

    Returns an empty list for command-free chat. Malformed blocks raise,
    as in parse_command.
    """
    blocks = _scan_blocks(text)
    if blocks:
        return [_envelope_from_obj(obj, (s, e)) for obj, s, e in blocks]
    try:
        env = _envelope_from_keyvalues(text)
    except MalformedCommand:
        raise
    return [env] if env is not None else []


def serialize_command(env: CommandEnvelope) -> str:
    """Render the canonical JSON block; deterministic and re-parseable."""
    obj: dict = {}
    if env.drive is not None:
        steer, speed = env.drive
        obj["drive"] = {"steer_deg": steer.degrees, "speed_kmh": speed.kmh}
    if env.aux is not None:
        obj["aux"] = {name: value for name, value in env.aux.used_fields()}
    return json.dumps(obj)
