"""Reference orbits and scenario settings used by the CLI and the acceptance runs."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import MU_EARTH, MU_MOON, DynamicsModel

# Earth-Moon system characteristic quantities for displaying CR3BP results.
EARTH_MOON_LENGTH_KM = 384400.0
EARTH_MOON_TIME_S = math.sqrt(EARTH_MOON_LENGTH_KM**3 / (MU_EARTH + MU_MOON))

ISS_ELEMENTS = (6738.0, 0.000514, 51.6434, 0.0, 0.0, 0.0)
NRHO_X0 = (1.022022, 0.0, -0.182097, 0.0, -0.103256, 0.0)
NRHO_PERIOD = 1.511111


def elements_to_state(a, e, inc_deg, raan_deg, argp_deg, mean_anom_deg, mu=MU_EARTH) -> np.ndarray:
    """Classical orbital elements (angles in degrees) to an inertial Cartesian state."""
    inc, raan, argp, mean = (math.radians(v) for v in (inc_deg, raan_deg, argp_deg, mean_anom_deg))
    ecc_anom = mean
    for _ in range(50):
        step = (ecc_anom - e * math.sin(ecc_anom) - mean) / (1.0 - e * math.cos(ecc_anom))
        ecc_anom -= step
        if abs(step) < 1e-15:
            break
    nu = 2.0 * math.atan2(math.sqrt(1 + e) * math.sin(ecc_anom / 2), math.sqrt(1 - e) * math.cos(ecc_anom / 2))
    p = a * (1.0 - e * e)
    r_pf = p / (1.0 + e * math.cos(nu)) * np.array([math.cos(nu), math.sin(nu), 0.0])
    v_pf = math.sqrt(mu / p) * np.array([-math.sin(nu), e + math.cos(nu), 0.0])

    def rot3(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def rot1(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])

    q = rot3(raan) @ rot1(inc) @ rot3(argp)
    return np.concatenate([q @ r_pf, q @ v_pf])


def two_body_period(a: float, mu: float = MU_EARTH) -> float:
    return 2.0 * math.pi * math.sqrt(a**3 / mu)


@dataclass
class Scenario:
    """A reference orbit plus sweep, scale-grid and oracle settings.

    ``length_unit_km`` and ``speed_unit_ms`` convert model units to the
    display units (km for positions, m/s for velocities).
    """

    name: str
    model: DynamicsModel
    x0: np.ndarray
    period: float
    t0: float = 0.0
    length_unit_km: float = 1.0
    speed_unit_ms: float = 1000.0
    stt_order: int = 2
    tf_fraction: float = 0.1
    sweep_points: int = 100
    scale_min: float = 0.0
    scale_max: float = 200.0
    scale_n: int = 10
    scale_spacing: str = "lin"
    n_samples: int = 5000
    seed: int = 0
    enable_opt: bool = True
    rtol: float = 1e-12
    atol: float = 1e-12
    extra: dict = field(default_factory=dict)

    @property
    def tf(self) -> float:
        return self.t0 + self.tf_fraction * self.period

    def sweep_times(self) -> np.ndarray:
        """Evenly spaced final times over one period, excluding t0 itself."""
        return self.t0 + self.period * np.arange(1, self.sweep_points + 1) / self.sweep_points

    def position_scale(self, km: float) -> float:
        """A length in km converted to model units."""
        return km / self.length_unit_km

    def velocity_scale(self, ms: float) -> float:
        """A speed in m/s converted to model units."""
        return ms / self.speed_unit_ms

    def scale_grid(self) -> np.ndarray:
        if self.scale_spacing == "log":
            lo = self.scale_min if self.scale_min > 0 else self.scale_max * 1e-3
            return np.geomspace(lo, self.scale_max, self.scale_n)
        return np.linspace(self.scale_min, self.scale_max, self.scale_n)

    def stt_key(self, tf: float | None = None, order: int | None = None) -> str:
        """Content hash of everything that determines an STT propagation."""
        payload = "|".join([
            self.model.describe(),
            " ".join(repr(float(v)) for v in self.x0),
            repr(float(self.t0)), repr(float(self.tf if tf is None else tf)),
            str(self.stt_order if order is None else order),
            repr(self.rtol), repr(self.atol),
        ])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def digest(self) -> str:
        d = asdict(self)
        d["model"] = self.model.describe()
        d["x0"] = [repr(float(v)) for v in self.x0]
        text = repr(sorted((k, repr(v)) for k, v in d.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def iss(**kw) -> Scenario:
    x0 = elements_to_state(*ISS_ELEMENTS)
    return Scenario("iss", DynamicsModel.two_body(), x0, two_body_period(ISS_ELEMENTS[0]), **kw)


def nrho(**kw) -> Scenario:
    kw.setdefault("length_unit_km", EARTH_MOON_LENGTH_KM)
    kw.setdefault("speed_unit_ms", 1000.0 * EARTH_MOON_LENGTH_KM / EARTH_MOON_TIME_S)
    return Scenario("nrho", DynamicsModel.cr3bp(), np.array(NRHO_X0), NRHO_PERIOD, **kw)


def circular(**kw) -> Scenario:
    """Unit circular orbit with unit gravitational parameter."""
    kw.setdefault("speed_unit_ms", 1.0)
    return Scenario("circular", DynamicsModel.two_body_nondim(), np.array([1.0, 0, 0, 0, 1.0, 0]),
                    2.0 * math.pi, **kw)


SCENARIOS = {"iss": iss, "nrho": nrho, "circular": circular}


def get(name: str, **kw) -> Scenario:
    try:
        return SCENARIOS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}") from None
