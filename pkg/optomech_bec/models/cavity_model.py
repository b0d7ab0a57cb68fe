# Drift/diffusion builders for the linearized cavity-membrane-condensate system.
# Row/column order of every 6x6 matrix: (dX, dY, dq, dp, dQ, dP).
import logging
import math

import numpy as np
import scipy.constants

from ..exceptions import NumericalError
from .system_params import TOLERANCES, DConvention, DerivedParams, Linearization, ValidityReport

_logger = logging.getLogger(__name__)

HBAR = scipy.constants.hbar
K_B = scipy.constants.k

OPTICAL = (0, 1)
MECHANICAL = (2, 3)
BOGOLIUBOV = (4, 5)
MODES = {'optical': OPTICAL, 'mechanical': MECHANICAL, 'bogoliubov': BOGOLIUBOV}


def thermal_occupation(omega, temperature, rate_unit=1.0):
    """
    Bose-Einstein occupation of an oscillator.

    Args:
        omega (float): Frequency in units of rate_unit rad/s.
        temperature (float): Bath temperature in K.
        rate_unit (float): rad/s per unit of omega.

    Returns:
        float: Mean thermal quanta, clamped to 0 when the exponent would overflow.
    """
    argument = HBAR * omega * rate_unit / (K_B * temperature)
    if argument > TOLERANCES.bose_exponent_cap:
        return 0.0
    return 1.0 / math.expm1(argument)


def lattice_depth_per_photon(g0, omega_cavity, omega_atom):
    """
    Optical lattice barrier height per photon, U0 = g0**2 / (omega_cavity - omega_atom).

    Args:
        g0 (float): Atom-field coupling in rad/s.
        omega_cavity (float): Cavity resonance in rad/s.
        omega_atom (float): Atomic transition in rad/s.

    Returns:
        float: U0 in rad/s.
    """
    detuning = omega_cavity - omega_atom
    if detuning == 0:
        raise NumericalError("cavity is resonant with the atomic transition, U0 diverges")
    return g0 ** 2 / detuning


def derive_params(p):
    """
    Compute the Bogoliubov-mode constants, thermal occupations and squeezing moments.

    Args:
        p (SystemParams): Inputs, in rad/s or any rate_unit.

    Returns:
        DerivedParams: Quantities in the same rate unit as p.
    """
    lower = 4.0 * p.omega_r + 0.5 * p.omega_sw
    upper = 4.0 * p.omega_r + 1.5 * p.omega_sw
    chi = (upper / lower) ** 0.25
    omega_c = math.sqrt(lower * upper)
    zeta = math.sqrt(p.n_atoms) * p.u0 / (2.0 * chi)

    n_m = thermal_occupation(p.omega_m, p.temperature, p.rate_unit)
    n_c = thermal_occupation(omega_c, p.temperature, p.rate_unit)

    r_sq = math.asinh(math.sqrt(p.n_s))
    amplitude = 0.5 * math.sinh(2.0 * r_sq)
    m_s_re = amplitude * math.cos(p.phi)
    m_s_im = amplitude * math.sin(p.phi)

    derived = DerivedParams(
        chi=chi, omega_c=omega_c, zeta=zeta, n_m=n_m, n_c=n_c,
        r_sq=r_sq, m_s_re=m_s_re, m_s_im=m_s_im,
    )
    values = np.array([chi, omega_c, zeta, n_m, n_c, r_sq, m_s_re, m_s_im])
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"derived parameters are not finite: {derived}", state=derived)
    return derived


def effective_detuning(p, d, state):
    """Delta = delta_c + zeta*Q - xi1*q + xi2*q**2."""
    q = state.q_bar
    return p.delta_c + d.zeta * state.Q_bar - p.xi1 * q + p.xi2 * q * q


def drift_matrix(p, d, state):
    """
    Build the 6x6 drift matrix of the linearized fluctuations around state.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Output of derive_params(p).
        state (MeanFieldState): Operating point.

    Returns:
        numpy.ndarray: Drift matrix A.
    """
    delta = effective_detuning(p, d, state)
    beta = p.xi1 - 2.0 * p.xi2 * state.q_bar
    omega_b = p.omega_m + 2.0 * p.xi2 * state.photon_number
    root2 = math.sqrt(2.0)
    a_re, a_im = state.alpha_re, state.alpha_im
    zeta = d.zeta

    a = np.zeros((6, 6))
    a[0, 0], a[0, 1] = -p.kappa, delta
    a[1, 0], a[1, 1] = -delta, -p.kappa
    a[0, 2] = -root2 * a_im * beta
    a[1, 2] = root2 * a_re * beta
    a[0, 4] = root2 * a_im * zeta
    a[1, 4] = -root2 * a_re * zeta

    a[2, 3] = p.omega_m
    a[3, 0] = root2 * a_re * beta
    a[3, 1] = root2 * a_im * beta
    a[3, 2] = -omega_b
    a[3, 3] = -p.gamma_m

    a[4, 4], a[4, 5] = -p.gamma_c, d.omega_c
    a[5, 0] = -root2 * a_re * zeta
    a[5, 1] = -root2 * a_im * zeta
    a[5, 4], a[5, 5] = -d.omega_c, -p.gamma_c
    return a


def diffusion_matrix(p, d):
    """
    Build the symmetric 6x6 diffusion matrix.

    Args:
        p (SystemParams): Inputs; squeezing_enabled and d_convention select the optical block.
        d (DerivedParams): Output of derive_params(p).

    Returns:
        numpy.ndarray: Diffusion matrix D.
    """
    diag = [
        p.kappa, p.kappa, 0.0,
        p.gamma_m * (2.0 * d.n_m + 1.0),
        p.gamma_c * (2.0 * d.n_c + 1.0),
        p.gamma_c * (2.0 * d.n_c + 1.0),
    ]
    dmat = np.diag(diag)
    if p.squeezing_enabled:
        base = p.n_s + 0.5
        dmat[0, 0] = 2.0 * p.kappa * (base + d.m_s_re)
        if p.d_convention is DConvention.SAME_SIGN:
            dmat[1, 1] = 2.0 * p.kappa * (base + d.m_s_re)
        else:
            dmat[1, 1] = 2.0 * p.kappa * (base - d.m_s_re)
        dmat[0, 1] = dmat[1, 0] = 2.0 * p.kappa * d.m_s_im
    if not is_positive_semidefinite(dmat):
        _logger.warning(
            f"Diffusion matrix is not positive semidefinite under the {p.d_convention.value} convention "
            f"(optical block {dmat[0, 0]:.6g}, {dmat[1, 1]:.6g}, {dmat[0, 1]:.6g})"
        )
    return dmat


def is_positive_semidefinite(matrix, rel_tol=1e-12):
    eigenvalues = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    scale = max(float(np.max(np.abs(matrix))), np.finfo(float).tiny)
    return bool(eigenvalues.min() >= -rel_tol * scale)


def linearize(p, d, state):
    """Bundle A, D and the operating-point quantities into a Linearization."""
    dmat = diffusion_matrix(p, d)
    return Linearization(
        a_matrix=drift_matrix(p, d, state),
        d_matrix=dmat,
        delta_eff=effective_detuning(p, d, state),
        beta=p.xi1 - 2.0 * p.xi2 * state.q_bar,
        omega_b=p.omega_m + 2.0 * p.xi2 * state.photon_number,
        d_is_psd=is_positive_semidefinite(dmat),
    )


def validity_check(p, d, photon_number):
    """
    Advisory checks on the reduced model's regime of validity.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters (unused today, kept for a uniform signature).
        photon_number (float): Intracavity photon number I.

    Returns:
        ValidityReport: 'pass' or 'warn' with the lattice ratio U0*I/(10*omega_r) and kappa/omega_m.
    """
    if photon_number < 0:
        raise ValueError(f"photon number must be >= 0, got {photon_number}")
    lattice_ratio = p.u0 * photon_number / (10.0 * p.omega_r)
    sideband_ratio = p.kappa / p.omega_m
    messages = []
    if lattice_ratio > 1.0:
        messages.append(
            f"weak-interaction condition U0*I <= 10*omega_r violated (ratio {lattice_ratio:.4g} at I={photon_number:.6g})"
        )
    if sideband_ratio <= 1.0:
        messages.append(f"resolved-sideband regime (kappa/omega_m = {sideband_ratio:.4g})")
    status = 'warn' if messages else 'pass'
    for message in messages:
        _logger.warning(message)
    return ValidityReport(
        status=status,
        lattice_ratio=lattice_ratio,
        sideband_ratio=sideband_ratio,
        unresolved_sideband=sideband_ratio > 1.0,
        messages=tuple(messages),
    )
