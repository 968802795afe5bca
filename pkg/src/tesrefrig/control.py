"""Cooling-power control: RGA, static decoupling, PI loops, superheat supervision, modes.

Loop structure (outer to inner):

* power loops, every control period: ``C11`` and ``C22`` act on the two
  refrigerant-side powers through the decoupling matrix and produce the
  virtual references ``m_e_ref`` / ``m_TES_ref``; ``C33`` drives the
  secondary flow through the tank directly;
* valve cascade, every fast period: feedforward inverse-valve opening plus a
  PI correction on the measured refrigerant flow;
* superheat supervisor, every fast period: a PI on the superheat error that
  moves the compressor speed off its minimum only when needed.

All powers handled here are magnitudes (absolute values).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .cycle_statics import A_RANGE, M_REF_RANGE, M_SEC_RANGE, N_RANGE, valve_opening


class SynthesisError(ValueError):
    """Decoupler or RGA synthesis failed (singular or degenerate gains)."""


# -- linear model --------------------------------------------------------------

@dataclass(frozen=True)
class LinearPlantModel:
    """First-order MIMO model of the three cooling powers.

    Diagonal refrigerant channels carry a lead zero: ``K(tau_z s + 1)/(tau_dp s + 1)``;
    the refrigerant cross terms are pure lags; the secondary channel is static.
    """

    K: np.ndarray
    tau_dp: float
    tau_z: float

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.shape != (3, 3):
            raise ValueError("K must be 3x3")
        if np.any(K[[0, 1, 2, 2], [2, 2, 0, 1]] != 0):
            raise ValueError("couplings between the refrigerant and secondary channels must be zero")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def K_hat(self) -> np.ndarray:
        return np.array(self.K[:2, :2])

    def step_response(self, t, i: int, j: int):
        """Response of output i to a unit step on input j at t = 0."""
        t = np.asarray(t, dtype=float)
        K = self.K[i, j]
        if i == 2 or j == 2:
            return np.full_like(t, K)
        decay = np.exp(-t / self.tau_dp)
        if i == j:
            return K * (1.0 + (self.tau_z / self.tau_dp - 1.0) * decay)
        return K * (1.0 - decay)


REFERENCE_MODEL = LinearPlantModel(K=[[4.5e4, -2.0e4, 0.0], [-2.0e4, 5.0e4, 0.0], [0.0, 0.0, 0.3e4]],
                               tau_dp=42.0, tau_z=68.0)


def rga(K_hat) -> np.ndarray:
    """Relative gain array ``K * (K^-1)^T`` (elementwise)."""
    K = np.asarray(K_hat, dtype=float)
    if K.shape[0] != K.shape[1]:
        raise SynthesisError("RGA needs a square gain matrix")
    if abs(np.linalg.det(K)) <= 1e-12 * np.linalg.norm(K) ** K.shape[0]:
        raise SynthesisError("singular gain matrix")
    return K * np.linalg.inv(K).T


@dataclass(frozen=True)
class DecouplerConfig:
    K_hat: np.ndarray
    D_hat: np.ndarray
    K_diag: np.ndarray

    @classmethod
    def identity(cls, K_hat) -> "DecouplerConfig":
        K = np.asarray(K_hat, dtype=float)
        return cls(K, np.eye(2), np.diag(np.diag(K)))


def synthesize_decoupler(K_hat) -> DecouplerConfig:
    """Unit-diagonal decoupler from the adjugate of ``K_hat``.

    ``D = [[1, adj12/adj22], [adj21/adj11, 1]]`` and
    ``K_diag = diag(det/adj11, det/adj22)`` so that ``K_hat @ D = K_diag``.
    """
    K = np.asarray(K_hat, dtype=float)
    if K.shape != (2, 2):
        raise SynthesisError("decoupler synthesis expects a 2x2 matrix")
    det = float(np.linalg.det(K))
    scale = float(np.linalg.norm(K))
    if abs(det) <= 1e-12 * scale ** 2:
        raise SynthesisError("singular gain matrix")
    adj = np.array([[K[1, 1], -K[0, 1]], [-K[1, 0], K[0, 0]]])
    if adj[0, 0] == 0 or adj[1, 1] == 0:
        raise SynthesisError("zero diagonal adjugate entry")
    D = np.array([[1.0, adj[0, 1] / adj[1, 1]], [adj[1, 0] / adj[0, 0], 1.0]])
    K_diag = np.diag([det / adj[0, 0], det / adj[1, 1]])
    off = K @ D
    if abs(off[0, 1]) > 1e-9 * scale or abs(off[1, 0]) > 1e-9 * scale:
        raise SynthesisError("decoupling check failed")
    return DecouplerConfig(K, D, K_diag)


# -- PI controller ----------------------------------------------------------------

@dataclass
class PiController:
    """Discrete PI with saturation, back-calculation and conditional integration.

    ``u_k = Kp*e_k + I_k``; the integral is advanced after the output is
    formed, so a constant error gives the jump ``Kp*e`` followed by the slope
    ``Kp*e/Ti``.  On saturation the integrator is pulled back with gain
    ``min(1, dt/Tt)`` and stops integrating further into the limit; the
    integral itself never leaves ``[u_min, u_max]``.
    """

    Kp: float
    Ti: float
    u_min: float = -math.inf
    u_max: float = math.inf
    Tt: float | None = None
    integral: float = 0.0
    saturated: bool = False
    last_error: float = 0.0

    def reset(self, u0: float = 0.0, error: float = 0.0):
        """Bumpless re-initialisation so that the next output equals ``u0``."""
        self.integral = u0 - self.Kp * error
        self.saturated = False

    def step(self, ref: float, meas: float, dt: float) -> float:
        if not dt > 0:
            raise ValueError("dt must be positive")
        e = ref - meas
        v = self.Kp * e + self.integral
        u = min(self.u_max, max(self.u_min, v))
        self.saturated = u != v
        into_limit = (u >= self.u_max and e > 0) or (u <= self.u_min and e < 0)
        if self.saturated:
            Tt = self.Ti if self.Tt is None else self.Tt
            self.integral += (u - v) * min(1.0, dt / Tt)
        if not (self.saturated and into_limit):
            self.integral += self.Kp * e * dt / self.Ti
        # clamp as well: back-calculation alone lets a large Kp*e chatter on the limit
        self.integral = min(self.u_max, max(self.u_min, self.integral))
        self.last_error = e
        return u


def pi_step(ctl: PiController, ref: float, meas: float, dt: float) -> float:
    return ctl.step(ref, meas, dt)


# -- gains -----------------------------------------------------------------------------

@dataclass(frozen=True)
class PiGains:
    Kp: float
    Ti: float


# Tuning designed against the reference diagonal gains (3.7e4, 4.1e4) and 0.3e4 W/(kg/s).
TABLE_GAINS = {
    "C11": PiGains(1e-4 / 23, 1.5),
    "C22": PiGains(1e-4 / 23, 1.5),
    "C33": PiGains(1e-4, 2.0),
    "C_me": PiGains(1e3, 1.0),
    "C_mTES": PiGains(1e3, 1.0),
    "C_TSH": PiGains(1.33, 1.05),
}
# power-domain trim on top of the secondary inverse [W/W, s]
SECONDARY_TRIM = PiGains(0.3, 5.0)
# Superheat loop as used in simulation: near the TES-branch dry-out threshold
# dT_SH/dN reaches ~2.4 K/Hz and the tabulated C_TSH limit-cycles there.
SUPERHEAT_GAINS = PiGains(0.5, 1.0)
DESIGN_K_DIAG = (3.7e4, 4.1e4)
DESIGN_K33 = 0.3e4


def normalized_gains(K_diag, K33, base=TABLE_GAINS) -> dict:
    """Scale the power-loop ``Kp`` so that ``K*Kp`` matches the reference design."""
    g = dict(base)
    for name, k_ref, k in (("C11", DESIGN_K_DIAG[0], K_diag[0]), ("C22", DESIGN_K_DIAG[1], K_diag[1]),
                           ("C33", DESIGN_K33, K33)):
        g[name] = PiGains(base[name].Kp * k_ref / k, base[name].Ti)
    return g


# -- modes ---------------------------------------------------------------------------------

class Mode(IntEnum):
    CHAMBER_CHARGE = 1
    CHAMBER = 2
    CHAMBER_DISCHARGE = 3
    DISCHARGE = 4
    CHARGE = 5
    CHARGE_DISCHARGE = 6
    ALL = 7
    OFF = 8


_MODE_TABLE = {
    (True, True, False): Mode.CHAMBER_CHARGE,
    (True, False, False): Mode.CHAMBER,
    (True, False, True): Mode.CHAMBER_DISCHARGE,
    (False, False, True): Mode.DISCHARGE,
    (False, True, False): Mode.CHARGE,
    (False, True, True): Mode.CHARGE_DISCHARGE,
    (True, True, True): Mode.ALL,
    (False, False, False): Mode.OFF,
}

ACTIVE_THRESHOLD = 1.0  # W


@dataclass(frozen=True)
class PowerReferences:
    """Reference magnitudes [W] for (Q_e_sec, Q_TES, Q_TES_sec)."""

    Q_e_sec: float = 0.0
    Q_TES: float = 0.0
    Q_TES_sec: float = 0.0

    def active(self, threshold: float = ACTIVE_THRESHOLD) -> tuple[bool, bool, bool]:
        return (abs(self.Q_e_sec) > threshold, abs(self.Q_TES) > threshold,
                abs(self.Q_TES_sec) > threshold)


@dataclass(frozen=True)
class CoolingPowers:
    """Measured power magnitudes [W]."""

    Q_e_sec: float = 0.0
    Q_TES: float = 0.0
    Q_TES_sec: float = 0.0

    @classmethod
    def from_signed(cls, Q_e_sec, Q_TES, Q_TES_sec) -> "CoolingPowers":
        return cls(abs(Q_e_sec), abs(Q_TES), abs(Q_TES_sec))


def mode_logic(refs: PowerReferences, threshold: float = ACTIVE_THRESHOLD) -> Mode:
    return _MODE_TABLE[refs.active(threshold)]


def compressor_running(mode: Mode) -> bool:
    return mode not in (Mode.DISCHARGE, Mode.OFF)


# -- controller bank --------------------------------------------------------------------------

@dataclass
class SupervisorState:
    mode: Mode = Mode.OFF
    T_SH_ref: float = 4.0
    overrides: dict = field(default_factory=lambda: {"e": True, "TES": True, "sec": True})


@dataclass(frozen=True)
class ControlConfig:
    decoupler: DecouplerConfig
    gains: dict
    tau_z: float = 0.0                # lag on the decoupler cross terms; 0 = static
    use_decoupler: bool = True
    use_feedforward: bool = True
    T_SH_min: float = 2.0
    T_SH_margin: float = 1.0          # floor of T_SH_ref above T_SH_min
    T_SH_ceiling: float = 5.0         # T_SH_ref when the speed sits on its minimum
    T_SH_ref_rate: float = 0.02       # K/s, outer integrator on T_SH_ref
    dt_control: float = 5.0
    dt_fast: float = 1.0


class ControllerBank:
    """Mutable controller state advanced by a single owner."""

    def __init__(self, cfg: ControlConfig):
        self.cfg = cfg
        g = cfg.gains
        D = cfg.decoupler.D_hat if cfg.use_decoupler else np.eye(2)
        self.D = np.array(D, dtype=float)
        hi = M_REF_RANGE[1] * 1.25
        self.C11 = PiController(g["C11"].Kp, g["C11"].Ti, 0.0, hi)
        self.C22 = PiController(g["C22"].Kp, g["C22"].Ti, 0.0, hi)
        self.C33 = PiController(g["C33"].Kp, g["C33"].Ti, *M_SEC_RANGE)
        self.C_sec = PiController(SECONDARY_TRIM.Kp, SECONDARY_TRIM.Ti, -1e4, 1e4)
        self.C_me = PiController(g["C_me"].Kp, g["C_me"].Ti, -A_RANGE[1], A_RANGE[1])
        self.C_mt = PiController(g["C_mTES"].Kp, g["C_mTES"].Ti, -A_RANGE[1], A_RANGE[1])
        self.C_TSH = PiController(g["C_TSH"].Kp, g["C_TSH"].Ti, *N_RANGE)
        self.C_TSH.reset(N_RANGE[0])
        self.sup = SupervisorState(T_SH_ref=cfg.T_SH_ceiling)
        self._cross = np.zeros(2)          # lag-filtered v for the cross terms
        self.m_refs = (0.0, 0.0)
        self.m_sec = 0.0
        self.N = 0.0
        self.v = np.zeros(2)

    # -- mode handling ------------------------------------------------------
    def update_mode(self, refs: PowerReferences) -> Mode:
        new = mode_logic(refs)
        old = self.sup.mode
        if new == old:
            return new
        e_on, t_on, s_on = refs.active()
        Kd = np.diag(self.cfg.decoupler.K_diag)
        e_was, t_was, s_was = (old in (1, 2, 3, 7), old in (1, 5, 6, 7), old in (3, 4, 6, 7))
        # (re)started loops get a static-inverse initial output; stopped loops are reset
        if e_on and not e_was:
            self.C11.reset(abs(refs.Q_e_sec) / Kd[0])
            self._cross[0] = 0.0
        if t_on and not t_was:
            self.C22.reset(abs(refs.Q_TES) / Kd[1])
            self._cross[1] = 0.0
        if s_on and not s_was:
            self.C33.reset(M_SEC_RANGE[0])
            self.C_sec.reset(0.0)
        if not e_on:
            self.C11.reset(0.0)
            self.C_me.reset(0.0)
            self._cross[0] = 0.0
        if not t_on:
            self.C22.reset(0.0)
            self.C_mt.reset(0.0)
            self._cross[1] = 0.0
        if not s_on:
            self.C33.reset(M_SEC_RANGE[0])
            self.C_sec.reset(0.0)
        if not compressor_running(new):
            self.C_TSH.reset(N_RANGE[0])
            self.sup.T_SH_ref = self.cfg.T_SH_ceiling
        self.sup.overrides = {"e": e_on, "TES": t_on, "sec": s_on}
        self.sup.mode = new
        return new

    # -- power loops (control period) --------------------------------------
    def power_control_step(self, refs: PowerReferences, meas: CoolingPowers, dt: float,
                           sec: SecondaryInverse | None = None):
        """Advance the power loops.  With ``sec`` the secondary loop is gain-scheduled."""
        mode = self.update_mode(refs)
        e_on, t_on, s_on = refs.active()
        v1 = self.C11.step(abs(refs.Q_e_sec), meas.Q_e_sec, dt) if e_on else 0.0
        v2 = self.C22.step(abs(refs.Q_TES), meas.Q_TES, dt) if t_on else 0.0
        self.v = np.array([v1, v2])
        if self.cfg.tau_z > 0:
            a = 1.0 - math.exp(-dt / self.cfg.tau_z)
            self._cross += a * (self.v - self._cross)
            cross = self._cross
        else:
            cross = self.v
        m_e = v1 + self.D[0, 1] * cross[1] if e_on else 0.0
        m_t = self.D[1, 0] * cross[0] + v2 if t_on else 0.0
        lo, hi = M_REF_RANGE
        m_e = min(hi, max(lo, m_e)) if e_on else 0.0
        m_t = min(hi, max(lo, m_t)) if t_on else 0.0
        self.m_refs = (m_e, m_t)
        if not s_on:
            self.m_sec = 0.0
        elif sec is None:
            self.m_sec = self.C33.step(abs(refs.Q_TES_sec), meas.Q_TES_sec, dt)
        else:
            # trim acts in the power domain; limits keep the inverse inside the flow range
            ref = abs(refs.Q_TES_sec)
            self.C_sec.u_min = sec.power(M_SEC_RANGE[0]) - ref
            self.C_sec.u_max = sec.power(M_SEC_RANGE[1]) - ref
            self.m_sec = sec.flow(ref + self.C_sec.step(ref, meas.Q_TES_sec, dt))
        return m_e, m_t, self.m_sec, mode

    # -- inner loops (fast period) -----------------------------------------
    def valve_cascade_step(self, m_ref: float, m_meas: float, P_up: float, P_down: float,
                           rho_up: float, ctl: PiController, c_v: float, dt: float) -> float:
        return valve_cascade_step(m_ref, m_meas, P_up, P_down, rho_up, ctl, c_v, dt,
                                  feedforward=self.cfg.use_feedforward)

    def tsh_supervisor_step(self, T_SH_meas: float, dt: float) -> tuple[float, float]:
        cfg = self.cfg
        if not compressor_running(self.sup.mode):
            self.N = 0.0
            return self.sup.T_SH_ref, 0.0
        floor = cfg.T_SH_min + cfg.T_SH_margin
        ref = self.sup.T_SH_ref
        if self.N > N_RANGE[0] + 1e-6:
            ref -= cfg.T_SH_ref_rate * dt
        elif math.isfinite(T_SH_meas):
            # at minimum speed the reference may only creep up to the measurement
            ref = min(ref + cfg.T_SH_ref_rate * dt, T_SH_meas)
        self.sup.T_SH_ref = min(cfg.T_SH_ceiling, max(floor, ref))
        # speed rises when superheat falls below its reference (error sign flipped)
        if math.isfinite(T_SH_meas):
            self.N = self.C_TSH.step(self.sup.T_SH_ref, T_SH_meas, dt)
        else:
            # no measurement yet (compressor just started): hold the integrator output
            self.N = min(N_RANGE[1], max(N_RANGE[0], self.C_TSH.integral))
        return self.sup.T_SH_ref, self.N


@dataclass(frozen=True)
class SecondaryInverse:
    """Static map between secondary flow and discharge power at a frozen ``T_int``.

    The secondary bundle behaves as ``Q = m cp (1 - exp(-UA / (m cp))) dT``,
    whose slope in ``m`` changes by more than an order of magnitude across the
    flow range.  Inverting it lets the power loop see a unit-gain plant.
    """
    UA: float
    cp: float
    dT: float

    def power(self, m: float) -> float:
        if m <= 0 or self.dT <= 0:
            return 0.0
        C = m * self.cp
        return C * (1.0 - math.exp(-self.UA / C)) * self.dT

    def flow(self, Q: float) -> float:
        lo, hi = M_SEC_RANGE
        if Q <= self.power(lo):
            return lo
        if Q >= self.power(hi):
            return hi
        for _ in range(60):                 # bisection; power() is increasing in m
            mid = 0.5 * (lo + hi)
            if self.power(mid) < Q:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def valve_cascade_step(m_ref: float, m_meas: float, P_up: float, P_down: float, rho_up: float,
                       ctl: PiController, c_v: float, dt: float, feedforward: bool = True) -> float:
    """Valve opening [%]: inverse-valve feedforward plus PI correction on the flow error."""
    if m_ref <= 0:
        ctl.reset(0.0)
        return 0.0
    ff = valve_opening(m_ref, rho_up, P_up, P_down, c_v) if feedforward else 0.0
    if not math.isfinite(ff):
        ff = A_RANGE[1]
    # PI limits follow the feedforward so that the sum stays inside the valve range
    ctl.u_min, ctl.u_max = A_RANGE[0] - ff, A_RANGE[1] - ff
    corr = ctl.step(m_ref, m_meas, dt)
    return min(A_RANGE[1], max(A_RANGE[0], ff + corr))


__all__ = [
    "ACTIVE_THRESHOLD", "ControlConfig", "ControllerBank", "CoolingPowers", "DecouplerConfig",
    "DESIGN_K33", "DESIGN_K_DIAG", "LinearPlantModel", "Mode", "REFERENCE_MODEL", "PiController",
    "PiGains", "PowerReferences", "SECONDARY_TRIM", "SUPERHEAT_GAINS", "SecondaryInverse", "SupervisorState", "SynthesisError", "TABLE_GAINS",
    "compressor_running", "mode_logic", "normalized_gains", "pi_step", "rga",
    "synthesize_decoupler", "valve_cascade_step",
]
