"""Discrete (finite-volume) model of the PCM storage tank.

The tank holds ``n_pcm`` identical PCM cylinders bathed in an intermediate
fluid.  Each cylinder is split into ``n_lay`` radial layers of equal
thickness; index 0 is the core and index ``n_lay - 1`` the edge.  Two pipe
bundles (refrigerant and secondary fluid) exchange heat with the intermediate
fluid only, which is treated as an isothermal source on the fast time scale.

Sign convention
---------------
Every signed power is seen from the fluid named in its subscript:

* ``Q_TES``     heat gained by the tank from the refrigerant bundle;
  negative while charging (the tank gives heat away).
* ``Q_TES_sec`` heat gained by the secondary fluid; negative while
  discharging (the secondary fluid is cooled).

The intermediate fluid therefore receives ``Q_TES - Q_TES_sec`` from the two
bundles.  ``TesOutputs`` exposes absolute-value accessors for reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .heat_exchange import isothermal_single_phase, two_zone_evaporation
from .thermo import BRINE, INTERMEDIATE, FluidModel, LiquidModel


class StabilityError(RuntimeError):
    """The requested explicit step violates the diffusion stability bound."""


@dataclass(frozen=True)
class PcmCurve:
    """Piecewise-linear temperature/enthalpy curve of the PCM.

    Temperature is constant (``T_lat``) on ``[h_lat_minus, h_lat_plus]`` and
    grows with slope ``1/c_solid`` below and ``1/c_liquid`` above.
    """

    T_lat: float = 244.15
    h_lat: float = 2.0e5
    h_lat_minus: float = 0.0
    c_solid: float = 2.0e3
    c_liquid: float = 2.0e3

    def __post_init__(self):
        if not (self.h_lat > 0 and self.c_solid > 0 and self.c_liquid > 0):
            raise ValueError("h_lat, c_solid and c_liquid must be positive")

    @property
    def h_lat_plus(self) -> float:
        return self.h_lat_minus + self.h_lat

    def temperature(self, h):
        return pcm_temperature(h, self)

    def enthalpy(self, T, phase: str = "solid"):
        """Sensible-branch enthalpy at ``T``; at ``T_lat`` the named plateau edge."""
        T = np.asarray(T, dtype=float)
        lo = self.h_lat_minus + self.c_solid * (T - self.T_lat)
        hi = self.h_lat_plus + self.c_liquid * (T - self.T_lat)
        if phase == "solid":
            h = np.where(T <= self.T_lat, lo, hi)
        elif phase == "liquid":
            h = np.where(T >= self.T_lat, hi, lo)
        else:
            raise ValueError("phase must be 'solid' or 'liquid'")
        return float(h) if h.ndim == 0 else h

    def liquid_fraction(self, h):
        return np.clip((np.asarray(h, dtype=float) - self.h_lat_minus) / self.h_lat, 0.0, 1.0)


def pcm_temperature(h, curve: PcmCurve):
    """PCM temperature [K] from specific enthalpy [J/kg]."""
    h = np.asarray(h, dtype=float)
    T = np.where(h < curve.h_lat_minus,
                 curve.T_lat + (h - curve.h_lat_minus) / curve.c_solid,
                 curve.T_lat)
    T = np.where(h > curve.h_lat_plus, curve.T_lat + (h - curve.h_lat_plus) / curve.c_liquid, T)
    return float(T) if T.ndim == 0 else T


@dataclass(frozen=True)
class TesGeometry:
    """Tank geometry, material data and heat-transfer coefficients.

    ``k_solid`` / ``k_liquid`` give the PCM conductivity in each phase; a
    partially molten layer uses the liquid-fraction-weighted value.
    ``h_surface`` is the film coefficient on the cylinder outer surface.
    """

    n_pcm: int = 160
    n_lay: int = 10
    radius: float = 0.0125
    length: float = 0.625
    rho_pcm: float = 1100.0
    k_solid: float = 3.0
    k_liquid: float = 0.6
    h_surface: float = 55.0
    m_int: float = 50.0
    intermediate: LiquidModel = INTERMEDIATE
    secondary: LiquidModel = BRINE
    UA_ref: float = 150.0
    UA_sec: float = 300.0
    UA_amb: float = 0.5
    dp_ref: float = 0.0

    def __post_init__(self):
        if self.n_lay < 1 or self.n_pcm < 1:
            raise ValueError("n_lay and n_pcm must be at least 1")
        for name in ("radius", "length", "rho_pcm", "k_solid", "k_liquid", "h_surface",
                     "m_int", "UA_ref", "UA_sec"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.UA_amb < 0 or self.dp_ref < 0:
            raise ValueError("UA_amb and dp_ref must be non-negative")

    # geometry-only derived arrays, recomputed on demand (cheap)
    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.radius, self.n_lay + 1)

    @property
    def layer_mass(self) -> np.ndarray:
        """PCM mass of each layer of one cylinder [kg]."""
        r = self.edges
        return self.rho_pcm * math.pi * self.length * (r[1:] ** 2 - r[:-1] ** 2)

    @property
    def cylinder_mass(self) -> float:
        return self.rho_pcm * math.pi * self.radius ** 2 * self.length

    @property
    def C_int(self) -> float:
        """Heat capacity of the intermediate fluid [J/K]."""
        return self.m_int * self.intermediate.cp

    @property
    def film_resistance(self) -> float:
        """Surface film resistance of one cylinder [K/W]."""
        return 1.0 / (self.h_surface * 2.0 * math.pi * self.radius * self.length)

    def _shape_factors(self):
        """Conduction shape factors (resistance times k) of each layer half.

        Returns ``(inner, outer)``: ``inner[j]`` spans node j to its inner
        interface, ``outer[j]`` node j to its outer interface.
        """
        r = self.edges
        two_pi_L = 2.0 * math.pi * self.length
        nodes = 0.5 * (r[1:] + r[:-1])
        inner = np.zeros(self.n_lay)
        inner[1:] = np.log(nodes[1:] / r[1:-1]) / two_pi_L
        outer = np.log(r[1:] / nodes) / two_pi_L
        # core: mean temperature of a solid rod to its rim
        outer[0] = 1.0 / (4.0 * math.pi * self.length)
        return inner, outer


@dataclass(frozen=True, eq=False)
class TesState:
    """Tank state: intermediate-fluid temperature plus per-layer PCM enthalpy."""

    T_int: float
    layer_h: np.ndarray

    def __post_init__(self):
        h = np.array(self.layer_h, dtype=float)
        if h.ndim != 1 or h.size < 1 or not np.all(np.isfinite(h)):
            raise ValueError("layer_h must be a non-empty finite 1-D array")
        h.setflags(write=False)
        object.__setattr__(self, "layer_h", h)

    @classmethod
    def uniform(cls, T_int: float, h: float, geom: TesGeometry) -> "TesState":
        return cls(T_int, np.full(geom.n_lay, float(h)))

    @classmethod
    def from_charge(cls, gamma: float, T_int: float, curve: PcmCurve, geom: TesGeometry) -> "TesState":
        """Uniform latent profile with the requested charge ratio."""
        h = curve.h_lat_plus - gamma * curve.h_lat
        return cls.uniform(T_int, h, geom)

    def U_pcm(self, geom: TesGeometry) -> float:
        return float(np.dot(geom.layer_mass, self.layer_h))

    def U_TES(self, geom: TesGeometry) -> float:
        return geom.n_pcm * self.U_pcm(geom)

    def layer_temperatures(self, curve: PcmCurve) -> np.ndarray:
        return np.asarray(pcm_temperature(self.layer_h, curve))

    def to_row(self, t: float, curve: PcmCurve, geom: TesGeometry) -> list:
        """CSV snapshot row: t, T_int, gamma, then per-layer h (core first)."""
        return [t, self.T_int, charge_ratio(self, curve, geom)] + list(self.layer_h)


@dataclass(frozen=True)
class ChargeRatio:
    """Charge ratio plus the raw (unclamped) value and the latent-zone flag."""

    value: float
    raw: float
    in_latent_zone: bool

    def __float__(self):
        return self.value


def charge_ratio_detail(state: TesState, curve: PcmCurve, geom: TesGeometry) -> ChargeRatio:
    m = geom.layer_mass
    U = geom.n_pcm * float(np.dot(m, state.layer_h))
    M = geom.n_pcm * float(m.sum())
    U_min = M * curve.h_lat_minus
    U_max = M * curve.h_lat_plus
    raw = (U_max - U) / (U_max - U_min)
    h = state.layer_h
    latent = bool(np.all((h >= curve.h_lat_minus) & (h <= curve.h_lat_plus)))
    return ChargeRatio(min(1.0, max(0.0, raw)), raw, latent)


def charge_ratio(state: TesState, curve: PcmCurve, geom: TesGeometry) -> float:
    """Charge ratio in [0, 1]; see :func:`charge_ratio_detail` for the raw value."""
    return charge_ratio_detail(state, curve, geom).value


# -- fast-scale exchanges ----------------------------------------------------

@dataclass(frozen=True)
class RefrigerantSideResult:
    Q_TES: float
    h_out: float
    P_out: float
    no_driving_force: bool = False


def refrigerant_side(fluid: FluidModel, P_in: float, h_in: float, m_TES: float, T_int: float,
                     geom: TesGeometry) -> RefrigerantSideResult:
    """Static refrigerant-bundle exchange against the isothermal intermediate fluid.

    ``Q_TES`` follows the module sign convention: it is minus the refrigerant
    duty, so it is negative while the refrigerant evaporates in the bundle.
    """
    if m_TES < 0:
        raise ValueError("m_TES must be non-negative")
    P_out = P_in - geom.dp_ref
    no_drive = T_int <= fluid.sat_temperature(P_in)
    if m_TES == 0 or no_drive:
        return RefrigerantSideResult(0.0, float(h_in), P_out, bool(no_drive))
    h_out = two_zone_evaporation(fluid, m_TES, P_in, h_in, T_int, geom.UA_ref)
    return RefrigerantSideResult(-m_TES * (h_out - h_in), h_out, P_out, False)


@dataclass(frozen=True)
class SecondarySideResult:
    Q_TES_sec: float
    T_sec_out: float


def secondary_side(T_sec_in: float, m_sec: float, T_int: float, geom: TesGeometry) -> SecondarySideResult:
    """Secondary-bundle exchange; ``Q_TES_sec < 0`` when the secondary fluid is cooled."""
    if m_sec < 0:
        raise ValueError("m_sec must be non-negative")
    cp = geom.secondary.cp
    T_out = isothermal_single_phase(T_sec_in, m_sec, cp, T_int, geom.UA_sec)
    return SecondarySideResult(m_sec * cp * (T_out - T_sec_in), T_out)


@dataclass(frozen=True)
class TesInputs:
    m_TES: float = 0.0
    P_TES_in: float = 1.0e5
    h_TES_in: float = 258.0e3
    m_TES_sec: float = 0.0
    T_TES_sec_in: float = 253.15
    T_surr: float = 293.15

    def __post_init__(self):
        if self.m_TES < 0 or self.m_TES_sec < 0:
            raise ValueError("flows must be non-negative")


@dataclass(frozen=True)
class TesOutputs:
    P_TES_out: float
    h_TES_out: float
    T_TES_sec_out: float
    Q_TES: float
    Q_TES_sec: float

    @property
    def abs_Q_TES(self) -> float:
        return abs(self.Q_TES)

    @property
    def abs_Q_TES_sec(self) -> float:
        return abs(self.Q_TES_sec)


def exchange(fluid: FluidModel, state: TesState, inputs: TesInputs, geom: TesGeometry) -> TesOutputs:
    """Both bundle exchanges at the current intermediate-fluid temperature."""
    ref = refrigerant_side(fluid, inputs.P_TES_in, inputs.h_TES_in, inputs.m_TES, state.T_int, geom)
    sec = secondary_side(inputs.T_TES_sec_in, inputs.m_TES_sec, state.T_int, geom)
    return TesOutputs(ref.P_out, ref.h_out, sec.T_sec_out, ref.Q_TES, sec.Q_TES_sec)


# -- slow-scale update -------------------------------------------------------

@dataclass(frozen=True)
class SlowStepInfo:
    """Energy book-keeping of one slow step (all in J, tank-wide)."""

    n_substeps: int
    E_exchange: float       # received from both bundles
    E_ambient: float        # received from the surroundings
    dU_pcm: float
    dU_int: float

    @property
    def residual(self) -> float:
        return self.dU_pcm + self.dU_int - self.E_exchange - self.E_ambient


def max_stable_substep(curve: PcmCurve, geom: TesGeometry) -> float:
    """Largest explicit substep that keeps every node update monotone [s].

    Uses the worst case (highest conductivity, lowest specific heat).
    """
    inner, outer = geom._shape_factors()
    k = max(geom.k_solid, geom.k_liquid)
    c = min(curve.c_solid, curve.c_liquid)
    g_link = k / (outer[:-1] + inner[1:]) if geom.n_lay > 1 else np.zeros(0)
    g_surf = 1.0 / (outer[-1] / k + geom.film_resistance)
    g_sum = np.zeros(geom.n_lay)
    g_sum[:-1] += g_link
    g_sum[1:] += g_link
    g_sum[-1] += g_surf
    tau = geom.layer_mass * c / g_sum
    tau_int = geom.C_int / (geom.n_pcm * g_surf + geom.UA_amb)
    return float(min(tau.min(), tau_int))


def step_slow_detailed(state: TesState, inputs: TesInputs, Q_TES: float, Q_TES_sec: float,
                       dt_slow: float, curve: PcmCurve, geom: TesGeometry, *,
                       substep: bool = True, safety: float = 0.9,
                       max_substep: float = 5.0) -> tuple[TesState, SlowStepInfo]:
    """Advance the tank over ``dt_slow`` with the bundle powers held constant.

    Explicit update of the layer enthalpies and of the intermediate-fluid
    temperature, sub-stepped to respect the diffusion stability bound and the
    ``max_substep`` accuracy cap.  With ``substep=False`` a step longer than
    the stable limit raises :class:`StabilityError`.
    """
    if not dt_slow > 0:
        raise ValueError("dt_slow must be positive")
    if state.layer_h.size != geom.n_lay:
        raise ValueError("state layer count does not match geometry")
    dt_lim = safety * max_stable_substep(curve, geom)
    if not substep:
        if dt_slow > dt_lim:
            raise StabilityError(
                f"dt_slow={dt_slow:g} s exceeds the stable explicit step {dt_lim:.3g} s; "
                "enable sub-stepping")
        n_sub = 1
    else:
        n_sub = max(1, math.ceil(dt_slow / min(dt_lim, max_substep)))
    dt = dt_slow / n_sub

    inner, outer = geom._shape_factors()
    m = geom.layer_mass
    n_pcm = geom.n_pcm
    film = geom.film_resistance
    C_int = geom.C_int
    ks, dk = geom.k_solid, geom.k_liquid - geom.k_solid
    hm, hp, hl = curve.h_lat_minus, curve.h_lat_plus, curve.h_lat
    T_lat, cs, cl = curve.T_lat, curve.c_solid, curve.c_liquid
    q_ex = Q_TES - Q_TES_sec
    T_surr, UA_amb = inputs.T_surr, geom.UA_amb

    h = state.layer_h.copy()
    T_int = state.T_int
    E_amb = 0.0
    for _ in range(n_sub):
        T = np.where(h < hm, T_lat + (h - hm) / cs, T_lat)
        T = np.where(h > hp, T_lat + (h - hp) / cl, T)
        k = ks + dk * np.clip((h - hm) / hl, 0.0, 1.0)
        q = np.zeros_like(h)
        if h.size > 1:
            g = 1.0 / (outer[:-1] / k[:-1] + inner[1:] / k[1:])
            flow = g * (T[1:] - T[:-1])      # into layer j from j+1
            q[:-1] += flow
            q[1:] -= flow
        q_surf = (T_int - T[-1]) / (outer[-1] / k[-1] + film)
        q[-1] += q_surf
        q_amb = UA_amb * (T_surr - T_int)
        h = h + q * dt / m
        T_int = T_int + (q_ex + q_amb - n_pcm * q_surf) * dt / C_int
        E_amb += q_amb * dt

    new = TesState(T_int, h)
    info = SlowStepInfo(
        n_substeps=n_sub,
        E_exchange=q_ex * dt_slow,
        E_ambient=E_amb,
        dU_pcm=n_pcm * float(np.dot(m, h - state.layer_h)),
        dU_int=C_int * (T_int - state.T_int),
    )
    return new, info


def step_slow(state: TesState, inputs: TesInputs, Q_TES: float, Q_TES_sec: float, dt_slow: float,
              curve: PcmCurve, geom: TesGeometry, **kwargs) -> TesState:
    """Pure slow-scale step; see :func:`step_slow_detailed`."""
    return step_slow_detailed(state, inputs, Q_TES, Q_TES_sec, dt_slow, curve, geom, **kwargs)[0]


# -- frozen-profile analysis (used by the envelope sweep) --------------------

BOUNDARY_LOCATIONS = ("edge", "halfway", "centre")


def boundary_shell_layers(location: str, n_lay: int) -> int:
    """Number of outer layers in the sensible shell for a boundary location."""
    if location == "edge":
        return 0
    if location == "halfway":
        return n_lay // 2
    if location == "centre":
        return n_lay - 1
    raise ValueError(f"unknown boundary location {location!r}")


def shell_conductance(location: str, process: str, geom: TesGeometry) -> float:
    """Tank-wide conductance [W/K] from the intermediate fluid to the phase front.

    ``process='charge'`` means a solid shell grows from the edge, ``'discharge'``
    a liquid one.  The front sits on the inner rim of the sensible shell.
    """
    if process not in ("charge", "discharge"):
        raise ValueError("process must be 'charge' or 'discharge'")
    k = geom.k_solid if process == "charge" else geom.k_liquid
    n_shell = boundary_shell_layers(location, geom.n_lay)
    r = geom.edges
    r_front = r[geom.n_lay - n_shell]
    R = math.log(geom.radius / r_front) / (2.0 * math.pi * k * geom.length) + geom.film_resistance
    return geom.n_pcm / R


def profile_for_location(location: str, process: str, curve: PcmCurve, geom: TesGeometry,
                         T_int: float) -> TesState:
    """Layer profile with the phase front at the requested location.

    Shell layers sit at the sensible bound reached by the process
    (``h_lat_minus`` after charging, ``h_lat_plus`` after discharging); the
    rest of the cylinder is at mid-plateau.
    """
    n_shell = boundary_shell_layers(location, geom.n_lay)
    h = np.full(geom.n_lay, curve.h_lat_minus + 0.5 * curve.h_lat)
    if n_shell:
        h[geom.n_lay - n_shell:] = curve.h_lat_minus if process == "charge" else curve.h_lat_plus
    return TesState(T_int, h)


__all__ = [
    "BOUNDARY_LOCATIONS", "ChargeRatio", "PcmCurve", "RefrigerantSideResult", "SecondarySideResult",
    "SlowStepInfo", "StabilityError", "TesGeometry", "TesInputs", "TesOutputs", "TesState",
    "boundary_shell_layers", "charge_ratio", "charge_ratio_detail", "exchange",
    "max_stable_substep", "pcm_temperature", "profile_for_location", "refrigerant_side",
    "secondary_side", "shell_conductance", "step_slow", "step_slow_detailed",
]
