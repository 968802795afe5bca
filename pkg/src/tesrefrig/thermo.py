"""Tabulated thermodynamic properties for the refrigerant and two incompressible fluids.

The refrigerant model is built from a saturation table (one row per pressure
knot) and linear interpolation in pressure.  Single-phase states use the
tabulated effective specific heats, so that at fixed pressure

* superheated vapour:  h = h_vap(P) + cp_vap(P) * (T - T_sat(P))
* subcooled liquid:    h = h_liq(P) - cp_liq(P) * (T_sat(P) - T)

and entropy follows the same isobaric constant-c_p path
(``s = s_vap + cp_vap * ln(T / T_sat)``).  Every function accepts scalars or
numpy arrays and returns the same shape; scalar inputs give Python floats.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

TABLE_FORMAT = "tesrefrig-fluid-table"
TABLE_VERSION = 1
TABLE_COLUMNS = ("P", "T_sat", "h_liq", "h_vap", "s_liq", "s_vap",
                 "rho_liq", "rho_vap", "cp_liq", "cp_vap")


class PropertyRangeError(ValueError):
    """A property was requested outside the validity range of the fluid model."""


class PhaseError(ValueError):
    """A two-phase-only quantity was requested for a single-phase state."""


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True, eq=False)
class FluidModel:
    """Refrigerant property model backed by a saturation table.

    Parameters
    ----------
    name : str
        Fluid label, informational only.
    table : dict of str -> ndarray
        Columns listed in ``TABLE_COLUMNS``, sorted by strictly increasing P.
    T_min, T_max : float
        Temperature floor and ceiling [K] for single-phase extrapolation.
    """

    name: str
    table: dict
    T_min: float = 200.0
    T_max: float = 430.0

    def __post_init__(self):
        P = self.table["P"]
        if np.any(np.diff(P) <= 0):
            raise ValueError("pressure knots must be strictly increasing")
        if np.any(np.diff(self.table["T_sat"]) <= 0):
            raise ValueError("T_sat must be strictly increasing in P")
        if np.any(self.table["h_vap"] <= self.table["h_liq"]):
            raise ValueError("h_vap must exceed h_liq at every knot")
        for col in self.table.values():
            col.setflags(write=False)

    # -- loading ---------------------------------------------------------
    @classmethod
    def from_csv(cls, path, **kwargs) -> "FluidModel":
        path = Path(path)
        meta = {}
        with open(path) as fh:
            first = fh.readline().strip()
            if not first.startswith("# " + TABLE_FORMAT):
                raise ValueError(f"{path}: not a fluid table (header {first!r})")
            version = int(first.rsplit("v", 1)[-1])
            if version != TABLE_VERSION:
                raise ValueError(f"{path}: unsupported table version {version}")
            lines = [first]
            for line in fh:
                if line.startswith("#"):
                    key, _, val = line[1:].partition(":")
                    meta[key.strip()] = val.strip()
                else:
                    lines.append(line)
        reader = csv.reader(lines[1:])
        header = next(reader)
        if tuple(header) != TABLE_COLUMNS:
            raise ValueError(f"{path}: columns {header} != {list(TABLE_COLUMNS)}")
        data = np.array([[float(v) for v in row] for row in reader if row])
        table = {name: np.ascontiguousarray(data[:, i]) for i, name in enumerate(TABLE_COLUMNS)}
        return cls(name=meta.get("fluid", path.stem), table=table, **kwargs)

    # -- range helpers -----------------------------------------------------
    @property
    def P_min(self) -> float:
        return float(self.table["P"][0])

    @property
    def P_max(self) -> float:
        return float(self.table["P"][-1])

    def _check_P(self, P):
        P = np.asarray(P, dtype=float)
        if np.any(~(P >= self.P_min)) or np.any(~(P <= self.P_max)):
            raise PropertyRangeError(
                f"pressure outside [{self.P_min:.4g}, {self.P_max:.4g}] Pa: "
                f"{np.min(P):.6g}..{np.max(P):.6g}")
        return P

    def _col(self, name, P):
        return np.interp(P, self.table["P"], self.table[name])

    # -- saturation curve --------------------------------------------------
    def sat_temperature(self, P):
        """Saturation temperature T_sat(P) [K]."""
        P = self._check_P(P)
        return _out(self._col("T_sat", P))

    def sat_pressure(self, T):
        """Inverse of :meth:`sat_temperature`."""
        T = np.asarray(T, dtype=float)
        Ts = self.table["T_sat"]
        if np.any(~(T >= Ts[0])) or np.any(~(T <= Ts[-1])):
            raise PropertyRangeError(f"saturation temperature outside [{Ts[0]:.2f}, {Ts[-1]:.2f}] K")
        return _out(np.interp(T, Ts, self.table["P"]))

    def h_liq(self, P):
        return _out(self._col("h_liq", self._check_P(P)))

    def h_vap(self, P):
        return _out(self._col("h_vap", self._check_P(P)))

    def cp_vap(self, P):
        return _out(self._col("cp_vap", self._check_P(P)))

    def cp_liq(self, P):
        return _out(self._col("cp_liq", self._check_P(P)))

    def _sat(self, P):
        return (self._col("T_sat", P), self._col("h_liq", P), self._col("h_vap", P))

    def _h_bounds(self, P, T_sat, h_l, h_v):
        lo = h_l - self._col("cp_liq", P) * (T_sat - self.T_min)
        hi = h_v + self._col("cp_vap", P) * (self.T_max - T_sat)
        return lo, hi

    # -- (P, h) functions ------------------------------------------------------
    def temperature_ph(self, P, h):
        """Temperature [K] from pressure and specific enthalpy."""
        P = self._check_P(P)
        h = np.asarray(h, dtype=float)
        T_sat, h_l, h_v = self._sat(P)
        lo, hi = self._h_bounds(P, T_sat, h_l, h_v)
        if np.any(h < lo) or np.any(h > hi):
            raise PropertyRangeError("enthalpy outside the model floor/ceiling")
        T = np.where(h > h_v, T_sat + (h - h_v) / self._col("cp_vap", P), T_sat)
        T = np.where(h < h_l, T_sat - (h_l - h) / self._col("cp_liq", P), T)
        return _out(T)

    def quality_ph(self, P, h):
        """Vapour quality; raises :class:`PhaseError` outside the dome."""
        P = self._check_P(P)
        h = np.asarray(h, dtype=float)
        _, h_l, h_v = self._sat(P)
        if np.any(h < h_l) or np.any(h > h_v):
            raise PhaseError("quality requested for a single-phase state")
        return _out((h - h_l) / (h_v - h_l))

    def enthalpy_pq(self, P, q):
        P = self._check_P(P)
        q = np.asarray(q, dtype=float)
        if np.any(q < 0) or np.any(q > 1):
            raise PhaseError("quality must lie in [0, 1]")
        _, h_l, h_v = self._sat(P)
        return _out(h_l + q * (h_v - h_l))

    def enthalpy_pt(self, P, T):
        """Specific enthalpy of a single-phase state (saturated vapour at T = T_sat)."""
        P = self._check_P(P)
        T = np.asarray(T, dtype=float)
        if np.any(T < self.T_min) or np.any(T > self.T_max):
            raise PropertyRangeError(f"temperature outside [{self.T_min}, {self.T_max}] K")
        T_sat, h_l, h_v = self._sat(P)
        h = np.where(T >= T_sat, h_v + self._col("cp_vap", P) * (T - T_sat),
                     h_l - self._col("cp_liq", P) * (T_sat - T))
        return _out(h)

    def density_ph(self, P, h):
        """Density [kg/m3]; ideal-gas-like T scaling in the superheated region."""
        P = self._check_P(P)
        h = np.asarray(h, dtype=float)
        T_sat, h_l, h_v = self._sat(P)
        rho_l = self._col("rho_liq", P)
        rho_v = self._col("rho_vap", P)
        q = np.clip((h - h_l) / (h_v - h_l), 0.0, 1.0)
        rho_2ph = 1.0 / ((1.0 - q) / rho_l + q / rho_v)
        T = self.temperature_ph(P, h)
        rho = np.where(h > h_v, rho_v * T_sat / T, rho_2ph)
        return _out(rho)

    def entropy_ph(self, P, h):
        P = self._check_P(P)
        h = np.asarray(h, dtype=float)
        T_sat, h_l, h_v = self._sat(P)
        s_l = self._col("s_liq", P)
        s_v = self._col("s_vap", P)
        T = np.asarray(self.temperature_ph(P, h))
        q = np.clip((h - h_l) / (h_v - h_l), 0.0, 1.0)
        s = s_l + q * (s_v - s_l)
        s = np.where(h > h_v, s_v + self._col("cp_vap", P) * np.log(T / T_sat), s)
        s = np.where(h < h_l, s_l - self._col("cp_liq", P) * np.log(T_sat / T), s)
        return _out(s)

    def isentropic_enthalpy(self, P_target, P, h):
        """Enthalpy at ``P_target`` on the constant-entropy path from state (P, h)."""
        s = np.asarray(self.entropy_ph(P, h))
        Pt = self._check_P(P_target)
        T_sat, h_l, h_v = self._sat(Pt)
        s_l = self._col("s_liq", Pt)
        s_v = self._col("s_vap", Pt)
        cp_v = self._col("cp_vap", Pt)
        cp_l = self._col("cp_liq", Pt)
        T_sup = T_sat * np.exp(np.maximum(s - s_v, 0.0) / cp_v)
        T_sub = T_sat * np.exp(np.minimum(s - s_l, 0.0) / cp_l)
        q = (s - s_l) / (s_v - s_l)
        h_t = np.where(s > s_v, h_v + cp_v * (T_sup - T_sat), h_l + q * (h_v - h_l))
        h_t = np.where(s < s_l, h_l - cp_l * (T_sat - T_sub), h_t)
        # the identity path must be exact, not interpolation-close
        h_t = np.where(np.asarray(Pt) == np.asarray(P), h, h_t)
        return _out(h_t)


@dataclass(frozen=True)
class ThermoState:
    """Refrigerant state described by its {P, h} pair, with derived T and q.

    ``q`` is ``None`` outside the two-phase dome.
    """

    P: float
    h: float
    T: float
    q: float | None

    @classmethod
    def from_ph(cls, fluid: FluidModel, P: float, h: float) -> "ThermoState":
        T = fluid.temperature_ph(P, h)
        try:
            q = fluid.quality_ph(P, h)
        except PhaseError:
            q = None
        return cls(float(P), float(h), T, q)


@dataclass(frozen=True)
class LiquidModel:
    """Incompressible liquid with constant heat capacity and density."""

    name: str
    cp: float
    rho: float


def load_fluid(name: str = "r404a") -> FluidModel:
    """Load a bundled refrigerant table by name (``r404a``)."""
    ref = resources.files("tesrefrig") / "data" / f"{name.lower()}.csv"
    with resources.as_file(ref) as path:
        return FluidModel.from_csv(path)


# Secondary fluid: glycol/water brine around -20 C.
BRINE = LiquidModel("brine", cp=3.0e3, rho=1.08e3)
# Intermediate fluid bathing the PCM cylinders (low heat capacity).
INTERMEDIATE = LiquidModel("intermediate", cp=1.6e3, rho=0.95e3)
