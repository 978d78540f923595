"""RF chain arithmetic: path loss, atmosphere, noise, SNR, Doppler, capacity.

All functions are pure; power quantities are dBm, gains and losses dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import BOLTZMANN, SPEED_OF_LIGHT, RFConfig
from .orbital import LookAngles

# slant-path air mass is capped so grazing elevations stay finite
ATM_SECANT_CAP = 10.0


class RFDomainError(ValueError):
    pass


def fspl(range_km: float, freq_mhz: float) -> float:
    """Free-space path loss in dB for a slant range and carrier."""
    if range_km <= 0 or freq_mhz <= 0:
        raise RFDomainError("range and frequency must be positive")
    d_m = range_km * 1000.0
    f_hz = freq_mhz * 1.0e6
    return 20.0 * math.log10(4.0 * math.pi * d_m * f_hz / SPEED_OF_LIGHT)


def atmospheric_loss(elevation_deg: float, zenith_loss_db: float) -> float:
    """Zenith loss scaled by air mass, capped at 10x; elevation <= 0 saturates."""
    if zenith_loss_db < 0:
        raise RFDomainError("zenith_loss_db must be >= 0")
    if elevation_deg <= 0:
        return zenith_loss_db * ATM_SECANT_CAP
    air_mass = 1.0 / math.sin(math.radians(elevation_deg))
    return zenith_loss_db * min(air_mass, ATM_SECANT_CAP)


def noise_floor(temp_k: float, bandwidth_hz: float) -> float:
    """Thermal noise power in dBm: 10*log10(k*T*B*1000)."""
    if temp_k <= 0 or bandwidth_hz <= 0:
        raise RFDomainError("temperature and bandwidth must be positive")
    return 10.0 * math.log10(BOLTZMANN * temp_k * bandwidth_hz * 1000.0)


def snr(cfg: RFConfig, fspl_db: float, atm_db: float) -> float:
    return (cfg.tx_power_dbm + cfg.tx_gain_dbi + cfg.rx_gain_dbi
            - fspl_db - atm_db - cfg.cable_loss_db - cfg.misc_loss_db
            - noise_floor(cfg.noise_temp_k, cfg.bandwidth_hz))


def doppler(carrier_mhz: float, radial_velocity_kms: float) -> float:
    """Shift in Hz; positive radial velocity (receding) gives a positive value."""
    if carrier_mhz <= 0:
        raise RFDomainError("carrier must be positive")
    return carrier_mhz * 1.0e6 * (radial_velocity_kms * 1000.0) / SPEED_OF_LIGHT


def capacity(bandwidth_hz: float, snr_db: float) -> float:
    """Shannon limit B*log2(1 + SNR_linear) in bit/s."""
    if bandwidth_hz <= 0:
        raise RFDomainError("bandwidth must be positive")
    return bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class LinkState:
    fspl_db: float
    atm_loss_db: float
    noise_floor_dbm: float
    snr_db: float
    doppler_hz: float
    capacity_bps: float
    effective_rate_bps: float
    visible: bool

    def as_dict(self) -> dict:
        return {
            "fspl_db": self.fspl_db,
            "atm_loss_db": self.atm_loss_db,
            "noise_floor_dbm": self.noise_floor_dbm,
            "snr_db": self.snr_db,
            "doppler_hz": self.doppler_hz,
            "capacity_bps": self.capacity_bps,
            "effective_rate_bps": self.effective_rate_bps,
            "visible": self.visible,
        }


def evaluate_link(cfg: RFConfig, angles: LookAngles, visible: bool) -> LinkState:
    """Full chain for one station-spacecraft geometry sample.

    The effective rate is the Shannon capacity scaled by the configured
    efficiency, gated to zero when the pair is not visible or the SNR
    sits at or below the viability floor.
    """
    loss = fspl(angles.range_km, cfg.carrier_freq_mhz)
    atm = atmospheric_loss(angles.elevation_deg, cfg.zenith_atm_loss_db)
    floor = noise_floor(cfg.noise_temp_k, cfg.bandwidth_hz)
    ratio = snr(cfg, loss, atm)
    shift = doppler(cfg.carrier_freq_mhz, angles.range_rate_kms)
    cap = capacity(cfg.bandwidth_hz, ratio)
    usable = visible and ratio > cfg.min_snr_db_viable
    return LinkState(fspl_db=loss, atm_loss_db=atm, noise_floor_dbm=floor,
                     snr_db=ratio, doppler_hz=shift, capacity_bps=cap,
                     effective_rate_bps=cfg.efficiency * cap if usable else 0.0,
                     visible=visible)
