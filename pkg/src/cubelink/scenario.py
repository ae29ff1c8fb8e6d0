"""Scenario files: everything a simulated pass needs, as one JSON document.

A scenario pins the seed, durations, channel SNR, per-axis sensor profiles,
control parameters, camera quality and the scheduled events (uplink
commands and GPS region crossings), so a run is a pure function of it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .bus import SENSOR_CHANNELS, FaultConfig, SensorProfile
from .camera import CameraQuality
from .dtmf import OPCODES, DtmfError, command_encode

SENSOR_NAMES = tuple(name for name, _ in SENSOR_CHANNELS)


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class UplinkEvent:
    t_s: float
    opcode: str
    args: str = ""


@dataclass(frozen=True)
class GpsEvent:
    t_s: float
    region: str
    enter: bool = True


@dataclass
class DetumbleParams:
    k: float = 1.0          # dipole gain per (uT/s)
    m_max: float = 1.0      # dipole magnitude mapping to 100% duty
    coupling: float = 0.0   # gyro decay rate per unit mean duty, 1/s


@dataclass
class Scenario:
    seed: int = 0
    duration_s: float = 120.0
    tick_ms: int = 10
    snr_db: float | None = 30.0          # None = clean channel
    sensor_poll_s: float = 1.0
    housekeeping_period_s: float = 30.0
    omega_high_dps: float = 10.0
    omega_low_dps: float = 1.0
    detumble: DetumbleParams = field(default_factory=DetumbleParams)
    camera: CameraQuality = field(default_factory=CameraQuality)
    faults: FaultConfig = field(default_factory=FaultConfig)
    sensors: dict = field(default_factory=dict)     # name -> SensorProfile
    uplinks: list = field(default_factory=list)     # [UplinkEvent]
    gps_events: list = field(default_factory=list)  # [GpsEvent]

    def __post_init__(self):
        defaults = {"battery": SensorProfile(bias=3700.0),
                    "temp": SensorProfile(bias=18.0)}
        for name in SENSOR_NAMES:
            self.sensors.setdefault(name, defaults.get(name, SensorProfile()))
        self.validate()

    def validate(self):
        if self.duration_s <= 0:
            raise ScenarioError("duration_s must be positive")
        if self.tick_ms <= 0:
            raise ScenarioError("tick_ms must be positive")
        if self.sensor_poll_s < self.tick_ms / 1000.0:
            raise ScenarioError("sensor_poll_s cannot be shorter than one tick")
        if self.omega_low_dps >= self.omega_high_dps:
            raise ScenarioError("omega_low_dps must be below omega_high_dps")
        for name in self.sensors:
            if name not in SENSOR_NAMES:
                raise ScenarioError(f"unknown sensor channel {name!r}")
        for ev in self.uplinks:
            if ev.t_s < 0 or ev.t_s > self.duration_s:
                raise ScenarioError(f"uplink at t={ev.t_s}s outside the pass")
            try:
                command_encode(ev.opcode, ev.args)
            except DtmfError as exc:
                raise ScenarioError(f"invalid uplink at t={ev.t_s}s: {exc}") from exc
        for ev in self.gps_events:
            if ev.t_s < 0 or ev.t_s > self.duration_s:
                raise ScenarioError(f"gps event at t={ev.t_s}s outside the pass")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "tick_ms": self.tick_ms,
            "snr_db": self.snr_db,
            "sensor_poll_s": self.sensor_poll_s,
            "housekeeping_period_s": self.housekeeping_period_s,
            "omega_high_dps": self.omega_high_dps,
            "omega_low_dps": self.omega_low_dps,
            "detumble": asdict(self.detumble),
            "camera": asdict(self.camera),
            "faults": asdict(self.faults),
            "sensors": {k: asdict(v) for k, v in sorted(self.sensors.items())},
            "events": (
                [{"t_s": e.t_s, "uplink": {"opcode": e.opcode, "args": e.args}}
                 for e in self.uplinks]
              + [{"t_s": e.t_s, "gps": {"region": e.region, "enter": e.enter}}
                 for e in self.gps_events]),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario document must be a JSON object")
        known = {"seed", "duration_s", "tick_ms", "snr_db", "sensor_poll_s",
                 "housekeeping_period_s", "omega_high_dps", "omega_low_dps",
                 "detumble", "camera", "faults", "sensors", "events"}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = {k: data[k] for k in
                  ("seed", "duration_s", "tick_ms", "snr_db", "sensor_poll_s",
                   "housekeeping_period_s", "omega_high_dps", "omega_low_dps")
                  if k in data}
        try:
            if "detumble" in data:
                kwargs["detumble"] = DetumbleParams(**data["detumble"])
            if "camera" in data:
                kwargs["camera"] = CameraQuality(**data["camera"])
            if "faults" in data:
                kwargs["faults"] = FaultConfig(**data["faults"])
            kwargs["sensors"] = {name: SensorProfile(**profile)
                                 for name, profile in data.get("sensors", {}).items()}
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad scenario structure: {exc}") from exc
        uplinks, gps = [], []
        for ev in data.get("events", []):
            if "uplink" in ev:
                uplinks.append(UplinkEvent(t_s=float(ev["t_s"]),
                                           opcode=str(ev["uplink"]["opcode"]),
                                           args=str(ev["uplink"].get("args", ""))))
            elif "gps" in ev:
                gps.append(GpsEvent(t_s=float(ev["t_s"]),
                                    region=str(ev["gps"]["region"]),
                                    enter=bool(ev["gps"].get("enter", True))))
            else:
                raise ScenarioError(f"event {ev} is neither uplink nor gps")
        kwargs["uplinks"] = sorted(uplinks, key=lambda e: e.t_s)
        kwargs["gps_events"] = sorted(gps, key=lambda e: e.t_s)
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")


def reference_scenario() -> Scenario:
    """The canonical 120 s pass: CAPTURE at 20 s, DOWNLINK_IMAGE at 40 s."""
    return Scenario(
        seed=42,
        duration_s=120.0,
        snr_db=30.0,
        sensors={
            "gyro_x": SensorProfile(bias=0.4, amplitude=0.3, freq_hz=0.05),
            "gyro_y": SensorProfile(bias=-0.2, amplitude=0.2, freq_hz=0.08, phase=1.0),
            "mag_x": SensorProfile(bias=20.0, amplitude=15.0, freq_hz=0.02),
            "mag_y": SensorProfile(bias=-10.0, amplitude=12.0, freq_hz=0.03, phase=0.7),
            "mag_z": SensorProfile(bias=35.0, amplitude=5.0, freq_hz=0.01, phase=2.1),
            "accel_z": SensorProfile(bias=0.01),
            "temp": SensorProfile(bias=21.5, amplitude=1.5, freq_hz=0.005),
            "battery": SensorProfile(bias=3700.0, amplitude=40.0, freq_hz=0.004),
        },
        uplinks=[UplinkEvent(t_s=20.0, opcode="02"),
                 UplinkEvent(t_s=40.0, opcode="03")],
    )
