"""Orbit propagation, look angles, and contact-window prediction.

Two propagators are provided: a synthetic circular orbit whose geometry
is exact (used by the scheduled experiments) and a compact near-Earth
SGP4 for real TLE input.  Look angles use a spherical Earth of radius
6371.0 km so the geometry has closed-form oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .config import EARTH_RADIUS_KM, GroundStation

TWOPI = 2.0 * math.pi
SIDEREAL_DAY_S = 86164.0905

# WGS-72 constants, canonical units (Earth radii, minutes).
_XKE = 0.0743669161
_XKMPER = 6378.135
_CK2 = 5.413080e-4
_CK4 = 0.62098875e-6
_XJ3 = -0.253881e-5
_QOMS2T = 1.88027916e-9
_S0 = 1.01222928


class TLEError(ValueError):
    pass


class PropagationError(RuntimeError):
    pass


def tle_checksum(line: str) -> int:
    """Modulo-10 checksum over the first 68 columns; '-' counts as 1."""
    total = 0
    for ch in line[:68]:
        if ch.isdigit():
            total += int(ch)
        elif ch == "-":
            total += 1
    return total % 10


@dataclass(frozen=True)
class TLESet:
    name: str
    line1: str
    line2: str
    epoch: float  # unix seconds UTC


def _tle_epoch_to_unix(yy: int, day_of_year: float) -> float:
    year = 1900 + yy if yy >= 57 else 2000 + yy
    start = datetime(year, 1, 1, tzinfo=timezone.utc)
    moment = start + timedelta(days=day_of_year - 1.0)
    return moment.timestamp()


def parse_tle(text: str) -> TLESet:
    """Parse a 2- or 3-line element set, validating both checksums."""
    lines = [ln.rstrip("\n") for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) == 3:
        name, line1, line2 = lines[0].strip(), lines[1], lines[2]
    elif len(lines) == 2:
        name, (line1, line2) = "UNKNOWN", lines
    else:
        raise TLEError(f"expected 2 or 3 lines, got {len(lines)}")
    for ln, tag in ((line1, "1"), (line2, "2")):
        if len(ln) < 69 or not ln.startswith(tag + " "):
            raise TLEError(f"malformed line {tag}")
        if int(ln[68]) != tle_checksum(ln):
            raise TLEError(f"checksum mismatch on line {tag}")
    yy = int(line1[18:20])
    doy = float(line1[20:32])
    return TLESet(name=name, line1=line1, line2=line2,
                  epoch=_tle_epoch_to_unix(yy, doy))


@dataclass(frozen=True)
class GeodeticPosition:
    lat: float  # degrees
    lon: float  # degrees, [-180, 180)
    alt_km: float
    velocity_kms: float
    timestamp: float  # unix seconds


@dataclass(frozen=True)
class LookAngles:
    elevation_deg: float
    azimuth_deg: float  # [0, 360)
    range_km: float
    range_rate_kms: float  # positive = receding


@dataclass(frozen=True)
class ContactWindow:
    station_id: str
    aos: float
    los: float
    max_elevation_deg: float

    @property
    def duration_s(self) -> float:
        return self.los - self.aos


def _wrap_deg(lon: float) -> float:
    return ((lon + 180.0) % 360.0) - 180.0


def _gmst_rad(t: float) -> float:
    # IAU 1982 GMST from unix time via the Julian date.
    jd = t / 86400.0 + 2440587.5
    d = jd - 2451545.0
    tc = d / 36525.0
    deg = (280.46061837 + 360.98564736629 * d
           + 0.000387933 * tc * tc - tc * tc * tc / 38710000.0)
    return math.radians(deg % 360.0)


class SyntheticOrbit:
    """Circular orbit with configurable period, inclination, altitude.

    The ascending node is pinned at the prime meridian at the epoch and
    Earth rotation is applied at the sidereal rate, so the ground track
    repeats with a westward drift of 360 * period / 86164.0905 degrees
    per revolution.
    """

    def __init__(self, period_s: float = 5520.0, inclination_deg: float = 51.6,
                 altitude_km: float = 420.0, epoch_s: float = 0.0,
                 phase_rad: float = 0.0):
        if period_s <= 0:
            raise ValueError("period_s must be positive")
        if altitude_km <= 0:
            raise ValueError("altitude_km must be positive")
        self.period_s = period_s
        self.inclination_rad = math.radians(inclination_deg)
        self.altitude_km = altitude_km
        self.radius_km = EARTH_RADIUS_KM + altitude_km
        self.epoch_s = epoch_s
        self.phase_rad = phase_rad

    @property
    def speed_kms(self) -> float:
        return TWOPI * self.radius_km / self.period_s

    def eci_position(self, t: float) -> tuple[float, float, float]:
        u = TWOPI * (t - self.epoch_s) / self.period_s + self.phase_rad
        cu, su = math.cos(u), math.sin(u)
        ci, si = math.cos(self.inclination_rad), math.sin(self.inclination_rad)
        return (self.radius_km * cu, self.radius_km * su * ci,
                self.radius_km * su * si)

    def geodetic(self, t: float) -> GeodeticPosition:
        x, y, z = self.eci_position(t)
        gmst = TWOPI * (t - self.epoch_s) / SIDEREAL_DAY_S
        lat = math.degrees(math.asin(max(-1.0, min(1.0, z / self.radius_km))))
        lon = _wrap_deg(math.degrees(math.atan2(y, x) - gmst))
        return GeodeticPosition(lat=lat, lon=lon, alt_km=self.altitude_km,
                                velocity_kms=self.speed_kms, timestamp=t)


class SGP4Orbit:
    """Near-Earth SGP4 propagator initialized from a TLE.

    Implements the standard analytic model (secular gravity + drag,
    long- and short-period periodics) in its near-Earth form, which is
    all an ISS-class orbit needs.  Positions come back in TEME and are
    rotated to Earth-fixed via GMST.
    """

    def __init__(self, tle: TLESet):
        self.tle = tle
        l1, l2 = tle.line1, tle.line2
        self.bstar = self._decode_exp(l1[53:61])
        self.inclo = math.radians(float(l2[8:16]))
        self.nodeo = math.radians(float(l2[17:25]))
        self.ecco = float("0." + l2[26:33].strip())
        self.argpo = math.radians(float(l2[34:42]))
        self.mo = math.radians(float(l2[43:51]))
        self.no_revs_per_day = float(l2[52:63])
        self._init_elements()

    @staticmethod
    def _decode_exp(field: str) -> float:
        # "+30277-3" style implied-decimal exponent field
        field = field.strip()
        if not field or field in {"0", "00000-0", "00000+0"}:
            return 0.0
        sign = -1.0 if field[0] == "-" else 1.0
        if field[0] in "+-":
            field = field[1:]
        mant, exp = field[:-2], field[-2:]
        return sign * float("0." + mant) * 10.0 ** int(exp)

    def _init_elements(self) -> None:
        xno = self.no_revs_per_day * TWOPI / 1440.0
        eo = self.ecco
        cosio = math.cos(self.inclo)
        theta2 = cosio * cosio
        x3thm1 = 3.0 * theta2 - 1.0
        eosq = eo * eo
        betao2 = 1.0 - eosq
        betao = math.sqrt(betao2)
        a1 = (_XKE / xno) ** (2.0 / 3.0)
        del1 = 1.5 * _CK2 * x3thm1 / (a1 * a1 * betao * betao2)
        ao = a1 * (1.0 - del1 * (1.0 / 3.0 + del1 * (1.0 + 134.0 / 81.0 * del1)))
        delo = 1.5 * _CK2 * x3thm1 / (ao * ao * betao * betao2)
        self.xnodp = xno / (1.0 + delo)
        self.aodp = ao / (1.0 - delo)

        self.isimp = (self.aodp * (1.0 - eo) / 1.0) < (220.0 / _XKMPER + 1.0)
        s4 = _S0
        qoms24 = _QOMS2T
        perige = (self.aodp * (1.0 - eo) - 1.0) * _XKMPER
        if perige < 156.0:
            s4 = perige - 78.0 if perige > 98.0 else 20.0
            qoms24 = ((120.0 - s4) / _XKMPER) ** 4
            s4 = s4 / _XKMPER + 1.0
        pinvsq = 1.0 / (self.aodp * self.aodp * betao2 * betao2)
        tsi = 1.0 / (self.aodp - s4)
        self.eta = self.aodp * eo * tsi
        etasq = self.eta * self.eta
        eeta = eo * self.eta
        psisq = abs(1.0 - etasq)
        coef = qoms24 * tsi ** 4
        coef1 = coef / psisq ** 3.5
        c2 = coef1 * self.xnodp * (
            self.aodp * (1.0 + 1.5 * etasq + eeta * (4.0 + etasq))
            + 0.75 * _CK2 * tsi / psisq * x3thm1
            * (8.0 + 3.0 * etasq * (8.0 + etasq)))
        self.c1 = self.bstar * c2
        sinio = math.sin(self.inclo)
        a3ovk2 = -_XJ3 / _CK2
        c3 = coef * tsi * a3ovk2 * self.xnodp * sinio / eo if eo > 1.0e-4 else 0.0
        self.x1mth2 = 1.0 - theta2
        self.c4 = 2.0 * self.xnodp * coef1 * self.aodp * betao2 * (
            self.eta * (2.0 + 0.5 * etasq) + eo * (0.5 + 2.0 * etasq)
            - 2.0 * _CK2 * tsi / (self.aodp * psisq)
            * (-3.0 * x3thm1 * (1.0 - 2.0 * eeta + etasq * (1.5 - 0.5 * eeta))
               + 0.75 * self.x1mth2 * (2.0 * etasq - eeta * (1.0 + etasq))
               * math.cos(2.0 * self.argpo)))
        self.c5 = 2.0 * coef1 * self.aodp * betao2 * (
            1.0 + 2.75 * (etasq + eeta) + eeta * etasq)
        theta4 = theta2 * theta2
        temp1 = 3.0 * _CK2 * pinvsq * self.xnodp
        temp2 = temp1 * _CK2 * pinvsq
        temp3 = 1.25 * _CK4 * pinvsq * pinvsq * self.xnodp
        self.xmdot = (self.xnodp + 0.5 * temp1 * betao * x3thm1
                      + 0.0625 * temp2 * betao
                      * (13.0 - 78.0 * theta2 + 137.0 * theta4))
        x1m5th = 1.0 - 5.0 * theta2
        self.omgdot = (-0.5 * temp1 * x1m5th
                       + 0.0625 * temp2 * (7.0 - 114.0 * theta2 + 395.0 * theta4)
                       + temp3 * (3.0 - 36.0 * theta2 + 49.0 * theta4))
        xhdot1 = -temp1 * cosio
        self.xnodot = xhdot1 + (0.5 * temp2 * (4.0 - 19.0 * theta2)
                                + 2.0 * temp3 * (3.0 - 7.0 * theta2)) * cosio
        self.omgcof = self.bstar * c3 * math.cos(self.argpo)
        self.xmcof = -(2.0 / 3.0) * coef * self.bstar / eeta if eo > 1.0e-4 else 0.0
        self.xnodcf = 3.5 * betao2 * xhdot1 * self.c1
        self.t2cof = 1.5 * self.c1
        self.xlcof = (0.125 * a3ovk2 * sinio
                      * (3.0 + 5.0 * cosio) / (1.0 + cosio))
        self.aycof = 0.25 * a3ovk2 * sinio
        self.delmo = (1.0 + self.eta * math.cos(self.mo)) ** 3
        self.sinmo = math.sin(self.mo)
        self.x7thm1 = 7.0 * theta2 - 1.0
        self.cosio = cosio
        self.sinio = sinio
        self.x3thm1 = x3thm1
        self.eo = eo
        if not self.isimp:
            c1sq = self.c1 * self.c1
            self.d2 = 4.0 * self.aodp * tsi * c1sq
            temp = self.d2 * tsi * self.c1 / 3.0
            self.d3 = (17.0 * self.aodp + s4) * temp
            self.d4 = (0.5 * temp * self.aodp * tsi
                       * (221.0 * self.aodp + 31.0 * s4) * self.c1)
            self.t3cof = self.d2 + 2.0 * c1sq
            self.t4cof = 0.25 * (3.0 * self.d3
                                 + self.c1 * (12.0 * self.d2 + 10.0 * c1sq))
            self.t5cof = 0.2 * (3.0 * self.d4 + 12.0 * self.c1 * self.d3
                                + 6.0 * self.d2 * self.d2
                                + 15.0 * c1sq * (2.0 * self.d2 + c1sq))

    def _propagate_teme(self, tsince_min: float):
        """Position (km) and velocity (km/s) in TEME at epoch + tsince."""
        t = tsince_min
        xmdf = self.mo + self.xmdot * t
        omgadf = self.argpo + self.omgdot * t
        xnoddf = self.nodeo + self.xnodot * t
        omega = omgadf
        xmp = xmdf
        tsq = t * t
        xnode = xnoddf + self.xnodcf * tsq
        tempa = 1.0 - self.c1 * t
        tempe = self.bstar * self.c4 * t
        templ = self.t2cof * tsq
        if not self.isimp:
            delomg = self.omgcof * t
            delm = self.xmcof * ((1.0 + self.eta * math.cos(xmdf)) ** 3
                                 - self.delmo)
            temp = delomg + delm
            xmp = xmdf + temp
            omega = omgadf - temp
            tcube = tsq * t
            tfour = t * tcube
            tempa = tempa - self.d2 * tsq - self.d3 * tcube - self.d4 * tfour
            tempe = tempe + self.bstar * self.c5 * (math.sin(xmp) - self.sinmo)
            templ = (templ + self.t3cof * tcube
                     + tfour * (self.t4cof + t * self.t5cof))
        a = self.aodp * tempa * tempa
        if a < 1.0:
            raise PropagationError("orbit decayed below Earth surface")
        e = self.eo - tempe
        if not 0.0 <= e < 1.0:
            raise PropagationError("eccentricity out of range during propagation")
        xl = xmp + omega + xnode + self.xnodp * templ
        xn = _XKE / a ** 1.5

        # long-period periodics
        axn = e * math.cos(omega)
        temp = 1.0 / (a * (1.0 - e * e))
        xll = temp * self.xlcof * axn
        aynl = temp * self.aycof
        xlt = xl + xll
        ayn = e * math.sin(omega) + aynl

        capu = math.fmod(xlt - xnode, TWOPI)
        epw = capu
        for _ in range(10):
            sinepw = math.sin(epw)
            cosepw = math.cos(epw)
            temp3 = axn * sinepw
            temp4 = ayn * cosepw
            temp5 = axn * cosepw
            temp6 = ayn * sinepw
            new_epw = (capu - temp4 + temp3 - epw) / (1.0 - temp5 - temp6) + epw
            if abs(new_epw - epw) <= 1.0e-12:
                epw = new_epw
                break
            epw = new_epw
        sinepw = math.sin(epw)
        cosepw = math.cos(epw)
        temp3 = axn * sinepw
        temp4 = ayn * cosepw
        temp5 = axn * cosepw
        temp6 = ayn * sinepw

        ecose = temp5 + temp6
        esine = temp3 - temp4
        elsq = axn * axn + ayn * ayn
        temp = 1.0 - elsq
        pl = a * temp
        r = a * (1.0 - ecose)
        temp1 = 1.0 / r
        rdot = _XKE * math.sqrt(a) * esine * temp1
        rfdot = _XKE * math.sqrt(pl) * temp1
        temp2 = a * temp1
        betal = math.sqrt(temp)
        temp3 = 1.0 / (1.0 + betal)
        cosu = temp2 * (cosepw - axn + ayn * esine * temp3)
        sinu = temp2 * (sinepw - ayn - axn * esine * temp3)
        u = math.atan2(sinu, cosu)
        sin2u = 2.0 * sinu * cosu
        cos2u = 2.0 * cosu * cosu - 1.0
        temp = 1.0 / pl
        temp1 = _CK2 * temp
        temp2 = temp1 * temp

        rk = (r * (1.0 - 1.5 * temp2 * betal * self.x3thm1)
              + 0.5 * temp1 * self.x1mth2 * cos2u)
        uk = u - 0.25 * temp2 * self.x7thm1 * sin2u
        xnodek = xnode + 1.5 * temp2 * self.cosio * sin2u
        xinck = self.inclo + 1.5 * temp2 * self.cosio * self.sinio * cos2u
        rdotk = rdot - xn * temp1 * self.x1mth2 * sin2u
        rfdotk = rfdot + xn * temp1 * (self.x1mth2 * cos2u
                                       + 1.5 * self.x3thm1)

        sinuk = math.sin(uk)
        cosuk = math.cos(uk)
        sinik = math.sin(xinck)
        cosik = math.cos(xinck)
        sinnok = math.sin(xnodek)
        cosnok = math.cos(xnodek)
        xmx = -sinnok * cosik
        xmy = cosnok * cosik
        ux = xmx * sinuk + cosnok * cosuk
        uy = xmy * sinuk + sinnok * cosuk
        uz = sinik * sinuk
        vx = xmx * cosuk - cosnok * sinuk
        vy = xmy * cosuk - sinnok * sinuk
        vz = sinik * cosuk

        pos = (rk * ux * _XKMPER, rk * uy * _XKMPER, rk * uz * _XKMPER)
        vel = ((rdotk * ux + rfdotk * vx) * _XKMPER / 60.0,
               (rdotk * uy + rfdotk * vy) * _XKMPER / 60.0,
               (rdotk * uz + rfdotk * vz) * _XKMPER / 60.0)
        return pos, vel

    def geodetic(self, t: float) -> GeodeticPosition:
        tsince = (t - self.tle.epoch) / 60.0
        (x, y, z), (vx, vy, vz) = self._propagate_teme(tsince)
        r = math.sqrt(x * x + y * y + z * z)
        gmst = _gmst_rad(t)
        lat = math.degrees(math.asin(max(-1.0, min(1.0, z / r))))
        lon = _wrap_deg(math.degrees(math.atan2(y, x) - gmst))
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        return GeodeticPosition(lat=lat, lon=lon, alt_km=r - EARTH_RADIUS_KM,
                                velocity_kms=speed, timestamp=t)


def _ecef_unit(lat_deg: float, lon_deg: float) -> tuple[float, float, float]:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    return (math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon),
            math.sin(lat))


def _ecef(lat_deg: float, lon_deg: float, alt_km: float):
    ux, uy, uz = _ecef_unit(lat_deg, lon_deg)
    r = EARTH_RADIUS_KM + alt_km
    return (r * ux, r * uy, r * uz)


def look_angles(station: GroundStation, iss: GeodeticPosition,
                prev: GeodeticPosition | None = None) -> LookAngles:
    """Elevation, azimuth, slant range from a station to the spacecraft.

    Spherical-Earth geometry.  Range rate comes from a finite difference
    when a previous position is supplied, else 0.
    """
    sx, sy, sz = _ecef(station.lat, station.lon, station.alt)
    px, py, pz = _ecef(iss.lat, iss.lon, iss.alt_km)
    rx, ry, rz = px - sx, py - sy, pz - sz
    rng = math.sqrt(rx * rx + ry * ry + rz * rz)

    lat = math.radians(station.lat)
    lon = math.radians(station.lon)
    east = (-math.sin(lon), math.cos(lon), 0.0)
    north = (-math.sin(lat) * math.cos(lon), -math.sin(lat) * math.sin(lon),
             math.cos(lat))
    up = (math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon),
          math.sin(lat))
    re = rx * east[0] + ry * east[1] + rz * east[2]
    rn = rx * north[0] + ry * north[1] + rz * north[2]
    ru = rx * up[0] + ry * up[1] + rz * up[2]
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, ru / rng))))
    azimuth = math.degrees(math.atan2(re, rn)) % 360.0

    rate = 0.0
    if prev is not None and prev.timestamp != iss.timestamp:
        prev_rng = look_angles(station, prev).range_km
        rate = (rng - prev_rng) / (iss.timestamp - prev.timestamp)
    return LookAngles(elevation_deg=elevation, azimuth_deg=azimuth,
                      range_km=rng, range_rate_kms=rate)


def look_angles_at(station: GroundStation, orbit, t: float,
                   rate_dt: float = 1.0) -> LookAngles:
    """Look angles with a central-difference range rate."""
    now = orbit.geodetic(t)
    before = orbit.geodetic(t - rate_dt / 2.0)
    after = orbit.geodetic(t + rate_dt / 2.0)
    base = look_angles(station, now)
    r0 = look_angles(station, before).range_km
    r1 = look_angles(station, after).range_km
    return LookAngles(elevation_deg=base.elevation_deg,
                      azimuth_deg=base.azimuth_deg, range_km=base.range_km,
                      range_rate_kms=(r1 - r0) / rate_dt)


def is_visible(station: GroundStation, iss: GeodeticPosition,
               threshold_deg: float = 0.0) -> bool:
    """True iff elevation >= threshold (the horizon itself counts)."""
    return look_angles(station, iss).elevation_deg >= threshold_deg


def _elevation(orbit, station: GroundStation, t: float) -> float:
    return look_angles(station, orbit.geodetic(t)).elevation_deg


def _bisect_crossing(orbit, station, threshold, lo, hi, rising, tol):
    # invariant: visibility state differs between lo and hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        above = _elevation(orbit, station, mid) >= threshold
        if above == rising:
            hi = mid
        else:
            lo = mid
    return hi if rising else lo


def predict_passes(orbit, station: GroundStation, t0: float, horizon_s: float,
                   threshold_deg: float = 0.0, step_s: float = 60.0,
                   refine_tol_s: float = 1.0) -> list[ContactWindow]:
    """Scan [t0, t0+horizon] at step_s, refining AOS/LOS by bisection.

    A pass already in progress at t0 opens at t0; one still in progress
    at the horizon closes there.
    """
    if horizon_s <= 0:
        raise ValueError("horizon_s must be positive")
    t_end = t0 + horizon_s
    windows: list[ContactWindow] = []
    prev_t = t0
    prev_vis = _elevation(orbit, station, t0) >= threshold_deg
    aos = t0 if prev_vis else None
    t = t0 + step_s
    while prev_t < t_end:
        t = min(t, t_end)
        vis = _elevation(orbit, station, t) >= threshold_deg
        if vis and not prev_vis:
            aos = _bisect_crossing(orbit, station, threshold_deg,
                                   prev_t, t, True, refine_tol_s)
        elif prev_vis and not vis and aos is not None:
            los = _bisect_crossing(orbit, station, threshold_deg,
                                   prev_t, t, False, refine_tol_s)
            if los > aos:  # drop degenerate grazing contacts
                windows.append(_finish_window(orbit, station, aos, los))
            aos = None
        if t >= t_end:
            break
        prev_t, prev_vis = t, vis
        t += step_s
    if aos is not None and _elevation(orbit, station, t_end) >= threshold_deg:
        windows.append(_finish_window(orbit, station, aos, t_end))
    return windows


def _finish_window(orbit, station, aos, los) -> ContactWindow:
    # elevation is unimodal within a pass; coarse scan then ternary refine
    best_t = aos
    best_el = _elevation(orbit, station, aos)
    n = max(2, int((los - aos) / 10.0))
    for i in range(n + 1):
        ti = aos + (los - aos) * i / n
        el = _elevation(orbit, station, ti)
        if el > best_el:
            best_el, best_t = el, ti
    lo = max(aos, best_t - (los - aos) / n)
    hi = min(los, best_t + (los - aos) / n)
    while hi - lo > 0.1:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if _elevation(orbit, station, m1) < _elevation(orbit, station, m2):
            lo = m1
        else:
            hi = m2
    peak = 0.5 * (lo + hi)
    return ContactWindow(station_id=station.id, aos=aos, los=los,
                         max_elevation_deg=_elevation(orbit, station, peak))
