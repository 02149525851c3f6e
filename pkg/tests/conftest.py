"""Shared fixtures: envelope generators, trigger phrases, scripted backends."""

import random

import pytest

from roadguard.commands import AuxCommand, CommandEnvelope, Speed, SteeringAngle, VehicleProfile
from roadguard.sensitive import SensitiveCategory

# One trigger phrase catalog per category. Every phrase matches rules of
# exactly its own category under the shipped rule set (asserted by a test),
# which keeps exposure arithmetic in fixtures exact.
TRIGGERS = {
    SensitiveCategory.SC: [
        "current speed is 42 km/h",
        "the speedometer reads high",
        "traveling at 38 mph",
    ],
    SensitiveCategory.PL: [
        "we are at lat 48.2, lon 16.3",
        "share the precise location",
        "gps position acquired",
    ],
    SensitiveCategory.WP: [
        "the next waypoint is near",
        "follow the planned route",
        "update the itinerary",
    ],
    SensitiveCategory.TF: [
        "heavy traffic conditions today",
        "a traffic jam formed",
        "expect congestion downtown",
    ],
    SensitiveCategory.OD: [
        "an obstacle was flagged",
        "pedestrian detected at the crossing",
        "collision warning sounded",
    ],
    SensitiveCategory.WT: [
        "the weather is turning",
        "rain began at noon",
        "fog reduced visibility",
    ],
    SensitiveCategory.EC: [
        "battery level at half",
        "state of charge nominal",
        "fuel level dropping",
    ],
    SensitiveCategory.VH: [
        "tire pressure is low",
        "engine temperature rising",
        "a fault code appeared",
    ],
    SensitiveCategory.SI: [
        "a stop sign stands here",
        "the road sign is bent",
        "fresh signage installed",
    ],
    SensitiveCategory.ES: [
        "notify emergency services",
        "an ambulance passed",
        "the police arrived",
    ],
}

# Filler sentences that match no shipped rule (asserted by a test).
FILLER = [
    "please continue with the task",
    "the cabin remains quiet",
    "all systems nominal",
    "proceed when ready",
    "nothing further to report",
]


def make_text(rng: random.Random, categories) -> str:
    """Compose a text containing exactly the given categories' triggers."""
    parts = [rng.choice(FILLER)]
    for category in categories:
        parts.append(rng.choice(TRIGGERS[category]))
        if rng.random() < 0.5:
            parts.append(rng.choice(FILLER))
    rng.shuffle(parts)
    return ". ".join(parts) + "."


def random_envelope(rng: random.Random) -> CommandEnvelope:
    """A random well-formed envelope (drive, aux, or both)."""
    shape = rng.choice(("drive", "aux", "both"))
    drive = None
    aux = None
    if shape in ("drive", "both"):
        drive = (
            SteeringAngle(round(rng.uniform(-90.0, 90.0), 1)),
            Speed(round(rng.uniform(0.0, 120.0), 1)),
        )
    if shape in ("aux", "both"):
        fields = {}
        for name in ("alarm", "ramp", "wiper", "door"):
            if rng.random() < 0.5:
                fields[name] = rng.choice((0, 1))
        if rng.random() < 0.4:
            fields["speaker"] = "".join(
                rng.choice("abcdefgh ") for _ in range(rng.randrange(0, 30))
            )
        aux = AuxCommand(**fields)
    if drive is None and aux is None:
        aux = AuxCommand(alarm=1)
    return CommandEnvelope(drive=drive, aux=aux)


def random_profile(rng: random.Random) -> VehicleProfile:
    lo = round(rng.uniform(-60.0, -5.0), 1)
    hi = round(rng.uniform(5.0, 60.0), 1)
    enabled = frozenset(
        name for name in ("alarm", "ramp", "wiper", "door", "speaker")
        if rng.random() < 0.7
    )
    return VehicleProfile(
        name="generated",
        steer_min_deg=lo,
        steer_max_deg=hi,
        speed_max_kmh=round(rng.uniform(10.0, 100.0), 1),
        aux_enabled=enabled,
        speaker_max_chars=rng.choice((10, 40, 280)),
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)
