"""Central configuration: station roster, mesh topology, RF chain defaults.

Everything here can be overridden from a JSON config document; the
defaults embed the nine-station roster and a 30-edge partial mesh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

EARTH_RADIUS_KM = 6371.0
SPEED_OF_LIGHT = 299_792_458.0  # m/s
BOLTZMANN = 1.380649e-23  # J/K

ISS_NODE_ID = "ISS"
BROADCAST_ID = "*"


@dataclass(frozen=True)
class GroundStation:
    id: str
    name: str
    lat: float  # degrees
    lon: float  # degrees
    alt: float  # km


# Roster order matters: it fixes synthetic-schedule stagger slots and
# emulation port assignment.
DEFAULT_STATIONS = [
    GroundStation("toronto", "Toronto", 43.6532, -79.3832, 0.076),
    GroundStation("london", "London", 51.5074, -0.1278, 0.011),
    GroundStation("tokyo", "Tokyo", 35.6762, 139.6503, 0.040),
    GroundStation("sydney", "Sydney", -33.8688, 151.2093, 0.058),
    GroundStation("washington_dc", "Washington DC", 38.9072, -77.0369, 0.125),
    GroundStation("singapore", "Singapore", 1.3521, 103.8198, 0.015),
    GroundStation("bengaluru", "Bengaluru", 12.9716, 77.5946, 0.920),
    GroundStation("sao_paulo", "Sao Paulo", -23.5505, -46.6333, 0.760),
    GroundStation("moscow", "Moscow", 55.7558, 37.6173, 0.156),
]

# Partial mesh: complete graph over the roster minus six ocean-spanning
# pairs with no direct trunk.  Dense enough that the contact station is
# almost always one ground hop away, which is what keeps the mean hop
# count near 2.
_MISSING_TRUNKS = {
    frozenset({"toronto", "singapore"}),
    frozenset({"toronto", "bengaluru"}),
    frozenset({"washington_dc", "singapore"}),
    frozenset({"sao_paulo", "tokyo"}),
    frozenset({"sao_paulo", "singapore"}),
    frozenset({"sao_paulo", "sydney"}),
}


def default_mesh_edges() -> set[frozenset[str]]:
    ids = [s.id for s in DEFAULT_STATIONS]
    edges = set()
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            pair = frozenset({a, b})
            if pair not in _MISSING_TRUNKS:
                edges.add(pair)
    return edges


@dataclass
class RFConfig:
    """RF chain parameters; all power/gain/loss terms in dB(m)."""

    tx_power_dbm: float = 33.0
    tx_gain_dbi: float = 10.0
    rx_gain_dbi: float = 6.0
    cable_loss_db: float = 1.0
    misc_loss_db: float = 1.0
    noise_temp_k: float = 290.0
    bandwidth_hz: float = 100_000.0
    carrier_freq_mhz: float = 437.8
    zenith_atm_loss_db: float = 0.5
    efficiency: float = 0.75
    min_snr_db_viable: float = 0.0

    def validate(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.noise_temp_k <= 0:
            raise ValueError("noise_temp_k must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.zenith_atm_loss_db < 0:
            raise ValueError("zenith_atm_loss_db must be >= 0")


@dataclass
class KeySettings:
    """Shared-secret material for the security blocks."""

    shared_secret: str = "iss-dtn-shared-secret"
    salt: str = "iss-dtn-kdf-salt"
    kdf_iterations: int = 100_000


@dataclass
class SystemConfig:
    stations: list[GroundStation] = field(default_factory=lambda: list(DEFAULT_STATIONS))
    mesh_edges: set[frozenset[str]] = field(default_factory=default_mesh_edges)
    rf: RFConfig = field(default_factory=RFConfig)
    keys: KeySettings = field(default_factory=KeySettings)
    visibility_threshold_deg: float = 0.0
    mtu_bytes: int = 4096
    header_reserve_bytes: int = 1024
    ack_timeout_s: float = 30.0
    max_retries: int = 5
    default_ttl_s: float = 86_400.0
    tle_path: str | None = None
    store_path: str | None = None

    def station_ids(self) -> list[str]:
        return [s.id for s in self.stations]

    def tle_text(self) -> str:
        if self.tle_path:
            return Path(self.tle_path).read_text(encoding="utf-8")
        ref = resources.files("issdtn").joinpath("data/iss.tle")
        return ref.read_text(encoding="utf-8")

    def station(self, station_id: str) -> GroundStation:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(f"unknown station: {station_id}")


def load_config(path: str | Path | None = None) -> SystemConfig:
    """Build a SystemConfig, optionally overlaying a JSON document.

    The document may carry any of: stations (list of objects), edges
    (list of [a, b] pairs), rf (field overrides), keys, and the scalar
    settings by name.
    """
    cfg = SystemConfig()
    if path is None:
        return cfg
    doc = json.loads(Path(path).read_text())
    if "stations" in doc:
        cfg.stations = [GroundStation(**s) for s in doc["stations"]]
    if "edges" in doc:
        ids = set(cfg.station_ids())
        edges = set()
        for a, b in doc["edges"]:
            if a not in ids or b not in ids:
                raise ValueError(f"edge references unknown station: {a}-{b}")
            edges.add(frozenset({a, b}))
        cfg.mesh_edges = edges
    for name, value in doc.get("rf", {}).items():
        setattr(cfg.rf, name, value)
    for name, value in doc.get("keys", {}).items():
        setattr(cfg.keys, name, value)
    for name in (
        "visibility_threshold_deg", "mtu_bytes", "header_reserve_bytes",
        "ack_timeout_s", "max_retries", "default_ttl_s", "tle_path", "store_path",
    ):
        if name in doc:
            setattr(cfg, name, doc[name])
    cfg.rf.validate()
    return cfg


def dump_config(cfg: SystemConfig) -> dict:
    doc = {
        "stations": [asdict(s) for s in cfg.stations],
        "edges": sorted(sorted(pair) for pair in cfg.mesh_edges),
        "rf": asdict(cfg.rf),
        "visibility_threshold_deg": cfg.visibility_threshold_deg,
        "mtu_bytes": cfg.mtu_bytes,
        "header_reserve_bytes": cfg.header_reserve_bytes,
        "ack_timeout_s": cfg.ack_timeout_s,
        "max_retries": cfg.max_retries,
        "default_ttl_s": cfg.default_ttl_s,
    }
    return doc
