"""Physical constants of the deputy spacecraft and the inspection task.

All values are SI unless noted.  Temperatures are carried in degrees Celsius
at the state level and converted to kelvin only inside radiative terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Task geometry / limits shared across modules.
CHIEF_RADIUS = 10.0        # collision radius of the chief [m]
DEPUTY_RADIUS = 5.0        # collision radius of each deputy [m]
COLLISION_RADIUS = CHIEF_RADIUS + DEPUTY_RADIUS
R_MAX = 800.0              # maximum allowed distance from the chief [m]
V_MAX = 5.0                # per-axis translational speed bound [m/s]
OMEGA_MAX = 2.0 * np.pi / 180.0   # per-axis angular rate bound, 2 deg/s [rad/s]
V0_SPEED = 0.2             # distance-dependent speed limit offset [m/s]
V1_COEF = 7.5              # slope coefficient; limit is V0 + V1_COEF*n*r
SENSOR_FOV = 20.0 * np.pi / 180.0  # full sensor field of view [rad]
EZ_HALF_ANGLE = SENSOR_FOV / 2.0 + 10.0 * np.pi / 180.0  # fov/2 + buffer [rad]
T_MAX_NODE = 10.0          # node temperature bound [degC]
DELTA_SUN = 0.05           # sun-incidence shaping weight in the thermal bound
DELTA_EARTH = 0.01         # earth-incidence shaping weight in the thermal bound
E_MIN = 1000.0             # minimum battery energy [J]
DELTA_BATT = 0.05          # sun-incidence shaping weight in the battery bound
PSM_HORIZON = 500          # free-drift collision check horizon [s]
ORBIT_PERIOD_CHECK = 6118  # one-orbit free-drift horizon for crash checks [s]
TIME_LIMIT = 12236.0       # episode limit, two orbits [s]
N_INSPECT_POINTS = 100
SUCCESS_WEIGHT = 0.95

# Body-frame unit vectors of the mounted hardware.
BORESIGHT_BODY = np.array([1.0, 0.0, 0.0])
NODE_NORMAL_BODY = np.array([0.0, -1.0, 0.0])
PANEL_NORMAL_BODY = np.array([-1.0, 0.0, 0.0])
EARTH_DIR_HILL = np.array([-1.0, 0.0, 0.0])

KELVIN_OFFSET = 273.15


@dataclass(frozen=True)
class PhysicalConstants:
    """Deputy bus, thermal-node, and solar-panel parameters."""

    m: float = 12.0                      # deputy mass [kg]
    n: float = 0.001027                  # chief orbit mean motion [rad/s]
    f_max: float = 1.0                   # per-axis thrust bound [N]
    j1: float = 0.0573                   # principal inertias [kg m^2]
    j2: float = 0.0573
    j3: float = 0.0573
    tau_max: float = 0.001               # per-axis torque bound [N m]
    solar_flux: float = 1367.0           # solar constant [W/m^2]
    albedo_factor: float = 0.27
    stefan_boltzmann: float = 5.67051e-8  # [W m^-2 K^-4]
    t_earth: float = 255.0               # mean Earth temperature [K]
    node_mass: float = 2.0               # thermal node mass [kg]
    node_area: float = 0.03              # thermal node area [m^2]
    node_heat_capacity: float = 900.0    # aluminum c_p [J/(kg K)]
    absorptivity: float = 0.13
    emissivity: float = 0.06
    panel_ideal: float = 983.3           # ideal panel performance [W/m^2]
    panel_degradation: float = 0.77
    panel_area: float = 0.06             # [m^2]
    p_out: float = 15.0                  # housekeeping power draw [W]

    @property
    def inertia(self) -> np.ndarray:
        return np.array([self.j1, self.j2, self.j3])

    @property
    def a_max(self) -> float:
        """Acceleration available from the thrust bound, F_max / m."""
        return self.f_max / self.m

    @property
    def orbit_period(self) -> float:
        return 2.0 * np.pi / self.n

    def pack(self) -> np.ndarray:
        """Flatten into the float64 layout consumed by the numba kernels."""
        return np.array(
            [
                self.m,
                self.n,
                self.f_max,
                self.j1,
                self.j2,
                self.j3,
                self.tau_max,
                self.solar_flux,
                self.albedo_factor,
                self.stefan_boltzmann,
                self.t_earth,
                self.node_mass,
                self.node_area,
                self.node_heat_capacity,
                self.absorptivity,
                self.emissivity,
                self.panel_ideal,
                self.panel_degradation,
                self.panel_area,
                self.p_out,
            ]
        )


DEFAULT_CONSTANTS = PhysicalConstants()
