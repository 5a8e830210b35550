"""Physical parameters of the reduced-order models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ModelParams:
    """Masses, inertias, and geometry shared by all reduced-order models.

    The defaults describe a ~35 kg humanoid with its COM at 0.62 m. Only the
    total mass is a hard number; the rest are plausible placeholders and every
    field can be overridden from the config file.
    """

    m_com: float = 35.0           # total mass [kg]
    g: float = 9.81               # gravitational acceleration [m/s^2]
    p_z_des: float = 0.62         # nominal COM height over the stance foot [m]
    i_com: tuple[float, float, float] = (1.5, 1.2, 0.6)  # diagonal body inertia [kg m^2]
    m_la: float = 2.5             # left arm point mass [kg]
    m_ra: float = 2.5             # right arm point mass [kg]
    r_la: tuple[float, float, float] = (0.0, 0.25, 0.25)   # left arm offset from COM [m]
    r_ra: tuple[float, float, float] = (0.0, -0.25, 0.25)  # right arm offset from COM [m]
    i_lb_z: float = 0.3           # lower-body yaw inertia [kg m^2]
    i_tr_z: float = 0.3           # torso yaw inertia [kg m^2]

    def __post_init__(self) -> None:
        if self.m_com <= 0.0 or self.m_la <= 0.0 or self.m_ra <= 0.0:
            raise ValueError("masses must be strictly positive")
        if self.g <= 0.0 or self.p_z_des <= 0.0:
            raise ValueError("g and p_z_des must be strictly positive")
        if any(i <= 0.0 for i in self.i_com) or self.i_lb_z <= 0.0 or self.i_tr_z <= 0.0:
            raise ValueError("inertias must be strictly positive")
        if not (self.r_la[1] > 0.0 and abs(self.r_la[1] + self.r_ra[1]) < 1e-12):
            raise ValueError("arm offsets must mirror in y with r_la_y > 0")

    @property
    def lam(self) -> float:
        """Pendulum constant sqrt(g / p_z_des) [1/s]."""
        return float(np.sqrt(self.g / self.p_z_des))

    @property
    def i_com_mat(self) -> np.ndarray:
        return np.diag(np.asarray(self.i_com, dtype=float))
