import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from ..exceptions import ConfigError, NonFiniteStateError, NumericalError, StabilityGuardError
from ..models.cavity_model import drift_matrix
from ..models.system_params import TOLERANCES, MeanFieldState

_logger = logging.getLogger(__name__)


class MeanFieldModel(str, enum.Enum):
    FULL = 'full'
    ADIABATIC = 'adiabatic'


class QDotConvention(str, enum.Enum):
    """Sign of the mechanical position equation: q' = +omega_m p (langevin) or -omega_m p."""

    LANGEVIN = 'langevin'
    MEAN_FIELD_LITERAL = 'mean-field-literal'


@dataclass(frozen=True)
class TrajectoryConfig:
    """
    Settings of one mean-field run. Times are in seconds.
    """

    model: MeanFieldModel
    t_end: float
    dt: float
    sample_stride: int = 1
    initial: MeanFieldState = field(default_factory=MeanFieldState)
    q_dot: QDotConvention = QDotConvention.LANGEVIN

    def __post_init__(self):
        try:
            object.__setattr__(self, 'model', MeanFieldModel(self.model))
        except ValueError:
            raise ConfigError(f"unknown model {self.model!r}", key='model')
        object.__setattr__(self, 'q_dot', QDotConvention(self.q_dot))
        if not self.dt > 0:
            raise ConfigError(f"must be > 0, got {self.dt!r}", key='dt')
        if not self.t_end >= self.dt:
            raise ConfigError(f"must be >= dt ({self.dt!r}), got {self.t_end!r}", key='t_end')
        if int(self.sample_stride) != self.sample_stride or self.sample_stride < 1:
            raise ConfigError(f"must be a positive integer, got {self.sample_stride!r}", key='sample_stride')
        if not self.initial.is_finite():
            raise ConfigError("initial state must be finite", key='initial')


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple
    photon_numbers: np.ndarray
    model: MeanFieldModel
    gamma_m: float

    def __len__(self):
        return len(self.times)

    def as_array(self):
        """Samples as an (n, 6) array in MeanFieldState component order."""
        return np.array([s.as_array() for s in self.states])

    @property
    def gamma_m_times(self):
        return self.times * self.gamma_m

    @property
    def q_bar(self):
        return np.array([s.q_bar for s in self.states])

    @property
    def Q_bar(self):
        return np.array([s.Q_bar for s in self.states])


@dataclass(frozen=True)
class EffectiveFrequencies:
    omega_m_eff: float
    omega_c_eff: float
    omega_m_eff_squared: float
    softening_instability: bool


def rhs_full(p, d, state, q_dot=QDotConvention.LANGEVIN):
    """
    Time derivative of the six classical mean fields.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters.
        state (MeanFieldState | numpy.ndarray): (alpha_re, alpha_im, q, p, Q, P).
        q_dot (QDotConvention): Sign convention of the position equation.

    Returns:
        numpy.ndarray: Derivative in the params' rate unit.
    """
    if isinstance(state, MeanFieldState):
        state = state.as_array()
    a_re, a_im, q, pq, big_q, big_p = state
    intensity = a_re * a_re + a_im * a_im
    delta = p.delta_c + d.zeta * big_q - p.xi1 * q + p.xi2 * q * q
    sign = -1.0 if q_dot == QDotConvention.MEAN_FIELD_LITERAL else 1.0
    deriv = np.array([
        -p.kappa * a_re + delta * a_im - p.eta,
        -delta * a_re - p.kappa * a_im,
        sign * p.omega_m * pq,
        -(p.omega_m + 2.0 * p.xi2 * intensity) * q + p.xi1 * intensity - p.gamma_m * pq,
        d.omega_c * big_p - p.gamma_c * big_q,
        -d.omega_c * big_q - d.zeta * intensity - p.gamma_c * big_p,
    ])
    if not np.all(np.isfinite(deriv)):
        raise NonFiniteStateError(f"non-finite mean-field derivative at state {list(state)}", state=np.array(state))
    return deriv


def adiabatic_field(p, d, q_bar, Q_bar):
    """Optical amplitude slaved to the slow variables: alpha = -eta / (i*Delta + kappa)."""
    delta = p.delta_c + d.zeta * Q_bar - p.xi1 * q_bar + p.xi2 * q_bar * q_bar
    return -p.eta / complex(p.kappa, delta)


def rhs_adiabatic(p, d, reduced_state):
    """
    Derivative of the reduced state (q, dq/dt, Q, dQ/dt) after eliminating the cavity field.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters.
        reduced_state (sequence): (q, v_q, Q, v_Q).

    Returns:
        numpy.ndarray: (v_q, a_q, v_Q, a_Q).
    """
    q, v_q, big_q, v_big_q = reduced_state
    alpha = adiabatic_field(p, d, q, big_q)
    intensity = alpha.real ** 2 + alpha.imag ** 2
    omega_m_sq = p.omega_m * (p.omega_m + 2.0 * p.xi2 * intensity)
    omega_c_sq = d.omega_c ** 2 + p.gamma_c ** 2
    deriv = np.array([
        v_q,
        -p.gamma_m * v_q - omega_m_sq * q + p.xi1 * p.omega_m * intensity,
        v_big_q,
        -2.0 * p.gamma_c * v_big_q - omega_c_sq * big_q - d.zeta * d.omega_c * intensity,
    ])
    if not np.all(np.isfinite(deriv)):
        raise NonFiniteStateError(
            f"non-finite adiabatic derivative at state {list(reduced_state)}", state=np.array(reduced_state)
        )
    return deriv


def rk4_step(func, y, h):
    """One classical fourth-order Runge-Kutta step of y' = func(y)."""
    k1 = func(y)
    k2 = func(y + 0.5 * h * k1)
    k3 = func(y + 0.5 * h * k2)
    k4 = func(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _reduce(p, d, state):
    # velocities follow q' = omega_m p and Q' = omega_c P - gamma_c Q
    return np.array([
        state.q_bar,
        p.omega_m * state.p_bar,
        state.Q_bar,
        d.omega_c * state.P_bar - p.gamma_c * state.Q_bar,
    ])


def _expand(p, d, reduced):
    q, v_q, big_q, v_big_q = reduced
    alpha = adiabatic_field(p, d, q, big_q)
    return MeanFieldState(
        alpha_re=alpha.real,
        alpha_im=alpha.imag,
        q_bar=float(q),
        p_bar=float(v_q / p.omega_m),
        Q_bar=float(big_q),
        P_bar=float((v_big_q + p.gamma_c * big_q) / d.omega_c),
    )


def check_step_stability(p, d, state, dt):
    """
    Explicit-step guard for the full model.

    Args:
        dt (float): Step in the params' time unit.

    Returns:
        float: dt * |lambda_max| of the drift matrix at state.
    """
    spectral_radius = float(np.max(np.abs(np.linalg.eigvals(drift_matrix(p, d, state)))))
    product = dt * spectral_radius
    if product >= TOLERANCES.stability_guard:
        raise StabilityGuardError(
            f"dt*|lambda_max| = {product:.4g} exceeds {TOLERANCES.stability_guard} "
            f"(|lambda_max| = {spectral_radius:.6g} in units of {p.rate_unit:.6g} rad/s)"
        )
    return product


def integrate(p, d, cfg):
    """
    Fixed-step RK4 integration of the full or adiabatic mean-field equations.

    Args:
        p (SystemParams): Inputs (any rate unit).
        d (DerivedParams): Derived parameters of p.
        cfg (TrajectoryConfig): Run settings, times in seconds.

    Returns:
        Trajectory: Samples every cfg.sample_stride steps, times in seconds.
    """
    dt = cfg.dt * p.rate_unit
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    stride = int(cfg.sample_stride)

    if cfg.model is MeanFieldModel.FULL:
        check_step_stability(p, d, cfg.initial, dt)
        y = cfg.initial.as_array()

        def func(values):
            return rhs_full(p, d, values, cfg.q_dot)

        def to_state(values):
            return MeanFieldState.from_array(values)
    else:
        if p.kappa <= 100.0 * max(p.gamma_m, p.gamma_c):
            _logger.warning(
                f"Adiabatic elimination assumes kappa >> gamma_m, gamma_c; "
                f"kappa/max(gamma) = {p.kappa / max(p.gamma_m, p.gamma_c):.3g}"
            )
        y = _reduce(p, d, cfg.initial)

        def func(values):
            return rhs_adiabatic(p, d, values)

        def to_state(values):
            return _expand(p, d, values)

    sample_steps = list(range(0, n_steps + 1, stride))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)

    _logger.debug(f"Integrating {cfg.model.value} model: {n_steps} steps of {cfg.dt:.6g} s")
    times, states = [], []
    next_sample = 0
    for step in range(n_steps + 1):
        if step == sample_steps[next_sample]:
            times.append(step * cfg.dt)
            states.append(to_state(y))
            next_sample += 1
        if step == n_steps:
            break
        y = rk4_step(func, y, dt)
        if not np.all(np.isfinite(y)):
            raise NonFiniteStateError(f"state became non-finite at step {step + 1}", state=y)

    photon_numbers = np.array([s.photon_number for s in states])
    _logger.info(
        f"Integrated {cfg.model.value} model to t={n_steps * cfg.dt:.6g} s, "
        f"{len(states)} samples, final photon number {photon_numbers[-1]:.6g}"
    )
    return Trajectory(
        times=np.array(times),
        states=tuple(states),
        photon_numbers=photon_numbers,
        model=cfg.model,
        gamma_m=p.gamma_m * p.rate_unit,
    )


def effective_frequencies(p, d, photon_number):
    """
    Effective mechanical and Bogoliubov frequencies at a given photon number.

    Returns:
        EffectiveFrequencies: omega_m_eff is NaN and softening_instability is set
        when omega_m + 2*xi2*I < 0.
    """
    omega_m_sq = p.omega_m * (p.omega_m + 2.0 * p.xi2 * photon_number)
    omega_c_eff = math.sqrt(d.omega_c ** 2 + p.gamma_c ** 2)
    if omega_m_sq < 0:
        _logger.warning(f"Softening instability: omega_m_eff**2 = {omega_m_sq:.6g} at I={photon_number:.6g}")
        return EffectiveFrequencies(math.nan, omega_c_eff, omega_m_sq, True)
    return EffectiveFrequencies(math.sqrt(omega_m_sq), omega_c_eff, omega_m_sq, False)


def dominant_frequency(times, values):
    """
    Angular frequency of an oscillating signal from its zero crossings.

    Uses the last half of the record, removes a linear trend and averages the
    spacing of successive crossings (each one half period).

    Args:
        times (numpy.ndarray): Sample times.
        values (numpy.ndarray): Signal.

    Returns:
        float: Angular frequency in rad per unit of times.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    half = len(times) // 2
    t, x = times[half:], signal.detrend(values[half:], type='linear')
    sign_change = np.nonzero(np.signbit(x[:-1]) != np.signbit(x[1:]))[0]
    if len(sign_change) < 3:
        raise NumericalError(f"only {len(sign_change)} zero crossings in the analysed window")
    x0, x1 = x[sign_change], x[sign_change + 1]
    t0, t1 = t[sign_change], t[sign_change + 1]
    crossings = t0 - x0 * (t1 - t0) / (x1 - x0)
    return math.pi / float(np.mean(np.diff(crossings)))


def relaxation_time(times, values, baseline=None):
    """
    Decay time of the envelope of a damped oscillation.

    Uses the last half of the record like dominant_frequency. The signal is
    taken relative to baseline (a fitted linear trend when None) and a straight
    line is fitted to the log of its extrema.

    Args:
        times (numpy.ndarray): Sample times.
        values (numpy.ndarray): Signal.
        baseline (float): Resting value the oscillation decays to.

    Returns:
        float: Envelope e-folding time in units of times.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    half = len(times) // 2
    t = times[half:]
    if baseline is None:
        x = signal.detrend(values[half:], type='linear')
    else:
        x = values[half:] - baseline
    peaks, _ = signal.find_peaks(np.abs(x))
    if len(peaks) < 3:
        raise NumericalError(f"only {len(peaks)} extrema in the analysed window")
    slope, _ = np.polyfit(t[peaks], np.log(np.abs(x[peaks])), 1)
    if not slope < 0.0:
        raise NumericalError(f"envelope is not decaying (log slope {slope:.3e})")
    return -1.0 / float(slope)
