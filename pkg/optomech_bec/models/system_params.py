import dataclasses
import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigError

_logger = logging.getLogger(__name__)


class DConvention(str, enum.Enum):
    """Sign convention for the squeezed-vacuum optical diffusion block."""

    STANDARD = 'standard'
    SAME_SIGN = 'same-sign'

    @classmethod
    def _missing_(cls, value):
        # config files written against the published parameter table use this name
        if value == 'paper-literal':
            return cls.SAME_SIGN
        return None


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by the services."""

    bisection_rtol: float = 1e-14
    root_dedup_rel: float = 1e-9
    root_residual_rel: float = 1e-8
    routh_zero_rel: float = 1e-12
    lyapunov_residual_rel: float = 1e-8
    symmetry_rel: float = 1e-10
    symplectic_slack: float = 1e-9
    radicand_clamp: float = 1e-10
    cm_convergence_rel: float = 1e-10
    stability_guard: float = 2.5
    bose_exponent_cap: float = 700.0


TOLERANCES = Tolerances()

# Rates that scale with kappa when switching to kappa units.
RATE_FIELDS = (
    'kappa', 'omega_m', 'gamma_m', 'gamma_c', 'xi1', 'xi2', 'eta',
    'delta_c', 'omega_r', 'omega_sw', 'u0',
)

_POSITIVE_FIELDS = ('kappa', 'omega_m', 'gamma_m', 'gamma_c', 'omega_r', 'n_atoms', 'temperature')
_NON_NEGATIVE_FIELDS = ('omega_sw', 'xi1', 'eta', 'u0', 'n_s')


@dataclass(frozen=True)
class SystemParams:
    """
    Inputs of the membrane-in-the-middle cavity with a condensate.

    Rates are angular (rad/s) unless rate_unit differs from 1, in which case
    every rate is expressed in multiples of rate_unit rad/s (see scaled()).
    """

    kappa: float
    omega_m: float
    gamma_m: float
    gamma_c: float
    xi1: float
    xi2: float
    eta: float
    delta_c: float
    omega_r: float
    omega_sw: float
    n_atoms: float
    u0: float
    temperature: float
    n_s: float = 0.0
    phi: float = math.pi
    squeezing_enabled: bool = False
    d_convention: DConvention = DConvention.STANDARD
    rate_unit: float = 1.0

    def __post_init__(self):
        for name in RATE_FIELDS + ('n_atoms', 'temperature', 'n_s', 'phi', 'rate_unit'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ConfigError(f"expected a number, got {value!r}", key=name)
            if not math.isfinite(value):
                raise ConfigError(f"must be finite, got {value!r}", key=name)
        for name in _POSITIVE_FIELDS:
            if getattr(self, name) <= 0:
                raise ConfigError(f"must be > 0, got {getattr(self, name)!r}", key=name)
        for name in _NON_NEGATIVE_FIELDS:
            if getattr(self, name) < 0:
                raise ConfigError(f"must be >= 0, got {getattr(self, name)!r}", key=name)
        if self.rate_unit <= 0:
            raise ConfigError(f"must be > 0, got {self.rate_unit!r}", key='rate_unit')
        if not isinstance(self.squeezing_enabled, bool):
            raise ConfigError(f"expected true/false, got {self.squeezing_enabled!r}", key='squeezing_enabled')
        try:
            object.__setattr__(self, 'd_convention', DConvention(self.d_convention))
        except ValueError:
            raise ConfigError(
                f"must be one of {[c.value for c in DConvention]}, got {self.d_convention!r}",
                key='d_convention',
            )

    def replace(self, **changes):
        """Return a copy with some fields changed (validated again)."""
        return dataclasses.replace(self, **changes)

    def scaled(self):
        """
        Express every rate in units of kappa.

        Returns:
            SystemParams: Copy with kappa == 1 and rate_unit multiplied by the old kappa.
        """
        factor = self.kappa
        changes = {name: getattr(self, name) / factor for name in RATE_FIELDS}
        changes['rate_unit'] = self.rate_unit * factor
        return dataclasses.replace(self, **changes)

    def in_rad_per_s(self):
        """Undo scaled(): every rate back in rad/s, rate_unit == 1."""
        if self.rate_unit == 1.0:
            return self
        changes = {name: getattr(self, name) * self.rate_unit for name in RATE_FIELDS}
        changes['rate_unit'] = 1.0
        return dataclasses.replace(self, **changes)

    @property
    def xi2_over_xi1(self):
        return self.xi2 / self.xi1 if self.xi1 else 0.0

    def to_dict(self):
        """JSON friendly snapshot whose keys are the config keys."""
        data = dataclasses.asdict(self)
        data['d_convention'] = self.d_convention.value
        data.pop('rate_unit')
        return data

    def mean_field_key(self):
        """Fields that influence the classical steady state (squeezing excluded)."""
        return tuple(getattr(self, name) for name in RATE_FIELDS + ('n_atoms', 'rate_unit'))


@dataclass(frozen=True)
class DerivedParams:
    chi: float
    omega_c: float
    zeta: float
    n_m: float
    n_c: float
    r_sq: float
    m_s_re: float
    m_s_im: float

    @property
    def m_s(self):
        return complex(self.m_s_re, self.m_s_im)


@dataclass(frozen=True)
class MeanFieldState:
    """Classical mean fields; quadratures are dimensionless."""

    alpha_re: float = 0.0
    alpha_im: float = 0.0
    q_bar: float = 0.0
    p_bar: float = 0.0
    Q_bar: float = 0.0
    P_bar: float = 0.0

    @property
    def alpha(self):
        return complex(self.alpha_re, self.alpha_im)

    @property
    def photon_number(self):
        return self.alpha_re ** 2 + self.alpha_im ** 2

    def as_array(self):
        return np.array([self.alpha_re, self.alpha_im, self.q_bar, self.p_bar, self.Q_bar, self.P_bar])

    @classmethod
    def from_array(cls, values):
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError(f"MeanFieldState needs 6 components, got {len(values)}")
        return cls(*values)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.as_array())))


@dataclass(frozen=True)
class Linearization:
    """Drift and diffusion matrices at one mean-field operating point."""

    a_matrix: np.ndarray
    d_matrix: np.ndarray
    delta_eff: float
    beta: float
    omega_b: float
    d_is_psd: bool = True


@dataclass(frozen=True)
class ValidityReport:
    status: str
    lattice_ratio: float
    sideband_ratio: float
    unresolved_sideband: bool
    messages: tuple = ()

    @property
    def ok(self):
        return self.status == 'pass'
