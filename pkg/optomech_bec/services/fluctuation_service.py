import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..exceptions import NonConvergenceError, NoStationaryStateError, UnphysicalStateError
from ..models.cavity_model import MODES, derive_params, diffusion_matrix, drift_matrix
from ..models.system_params import TOLERANCES
from .meanfield_service import rk4_step
from .steadystate_service import classify_stability

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CovarianceMatrix:
    """Stationary 6x6 quadrature covariance; zero-point variance is 1/2."""

    v: np.ndarray
    residual: float = 0.0

    def variance(self, index):
        return float(self.v[index, index])

    def reduced(self, mode_pair=('mechanical', 'bogoliubov')):
        return reduced_covariance(self.v, mode_pair)


@dataclass(frozen=True)
class FluctuationObservables:
    sigma_q: float
    sigma_Q: float
    s_q_db: float
    s_Q_db: float
    e_n: float
    sigma_p: float
    sigma_P: float
    min_symplectic: float


@dataclass(frozen=True)
class PhysicalityReport:
    """Smallest symplectic eigenvalues of the single-mode and two-mode reductions."""

    single_mode: dict
    two_mode: dict
    slack: float

    @property
    def minimum(self):
        return min(list(self.single_mode.values()) + list(self.two_mode.values()))

    @property
    def physical(self):
        return self.minimum >= 0.5 - self.slack


@dataclass(frozen=True)
class ObservableRow:
    delta_c_over_kappa: float
    xi2_over_xi1: float
    squeezing_injected: bool
    photon: float
    observables: FluctuationObservables = None


def _check_stable(a):
    verdict = classify_stability(a)
    if not verdict.stable:
        raise NoStationaryStateError(
            f"drift matrix is not stable (margin {verdict.margin:.6g}); no stationary covariance exists", state=a
        )
    return verdict


def solve_lyapunov(a, d, check_stability=True):
    """
    Stationary covariance from A V + V A^T = -D.

    The 36 unknowns are solved at once from the Kronecker-sum system
    (I x A + A x I) vec(V) = -vec(D) by LU with partial pivoting.

    Args:
        a (numpy.ndarray): Drift matrix.
        d (numpy.ndarray): Symmetric diffusion matrix.
        check_stability (bool): Refuse unstable drift matrices.

    Returns:
        CovarianceMatrix: Symmetrized solution and its relative residual.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    if check_stability:
        _check_stable(a)
    n = a.shape[0]
    identity = np.eye(n)
    kron_sum = np.kron(identity, a) + np.kron(a, identity)
    vec_v = np.linalg.solve(kron_sum, -d.reshape(-1, order='F'))
    v = vec_v.reshape((n, n), order='F')
    v = 0.5 * (v + v.T)

    d_scale = float(np.max(np.abs(d)))
    residual = float(np.max(np.abs(a @ v + v @ a.T + d)))
    relative = residual / d_scale if d_scale > 0 else residual
    if d_scale > 0 and relative > TOLERANCES.lyapunov_residual_rel:
        _logger.warning(f"Lyapunov residual {relative:.3g} exceeds {TOLERANCES.lyapunov_residual_rel}")
    return CovarianceMatrix(v=v, residual=relative)


def squeezing_db(variance):
    """
    Quadrature squeezing relative to the zero-point variance 1/2.

    Args:
        variance (float): Quadrature variance.

    Returns:
        float: -10*log10(2*variance); positive means squeezed.
    """
    if not variance > 0:
        raise UnphysicalStateError(f"quadrature variance must be positive, got {variance!r}")
    return -10.0 * math.log10(2.0 * variance)


def reduced_covariance(v, mode_pair=('mechanical', 'bogoliubov')):
    """4x4 covariance of two modes picked from (optical, mechanical, bogoliubov)."""
    v = np.asarray(v, dtype=float)
    if v.shape == (4, 4):
        return v
    first, second = mode_pair
    if first not in MODES or second not in MODES or first == second:
        raise ValueError(f"mode_pair must name two different modes of {sorted(MODES)}, got {mode_pair}")
    index = list(MODES[first]) + list(MODES[second])
    return v[np.ix_(index, index)]


def _two_mode_invariants(v_bp):
    b, b2, c = v_bp[:2, :2], v_bp[2:, 2:], v_bp[:2, 2:]
    return np.linalg.det(b), np.linalg.det(b2), np.linalg.det(c), np.linalg.det(v_bp)


def logarithmic_negativity(v, mode_pair=('mechanical', 'bogoliubov')):
    """
    Logarithmic negativity (natural log) of a two-mode Gaussian reduction.

    Args:
        v (numpy.ndarray): 6x6 covariance, or an already reduced 4x4 block.
        mode_pair (tuple): Two of 'optical', 'mechanical', 'bogoliubov'.

    Returns:
        float: E_N = max(0, -ln(2*eta_minus)).
    """
    v_bp = reduced_covariance(v, mode_pair)
    det_b, det_b2, det_c, det_v = _two_mode_invariants(v_bp)
    sigma = det_b + det_b2 - 2.0 * det_c
    radicand = sigma * sigma - 4.0 * det_v
    if radicand < 0:
        if radicand < -TOLERANCES.radicand_clamp * max(1.0, sigma * sigma):
            raise UnphysicalStateError(
                f"partially transposed reduction is unphysical (Sigma^2 - 4 det V = {radicand:.6g})", state=v_bp
            )
        radicand = 0.0
    eta_minus_sq = 0.5 * (sigma - math.sqrt(radicand))
    if not eta_minus_sq > 0:
        raise UnphysicalStateError(
            f"smallest partially transposed symplectic eigenvalue is not positive ({eta_minus_sq:.6g})", state=v_bp
        )
    return max(0.0, -math.log(2.0 * math.sqrt(eta_minus_sq)))


def symplectic_eigenvalues(v_bp):
    """Both symplectic eigenvalues of a 4x4 two-mode covariance."""
    det_b, det_b2, det_c, det_v = _two_mode_invariants(np.asarray(v_bp, dtype=float))
    invariant = det_b + det_b2 + 2.0 * det_c
    radicand = max(invariant * invariant - 4.0 * det_v, 0.0)
    lower = max(0.5 * (invariant - math.sqrt(radicand)), 0.0)
    upper = 0.5 * (invariant + math.sqrt(radicand))
    return math.sqrt(lower), math.sqrt(upper)


def physicality_report(v, slack=TOLERANCES.symplectic_slack):
    """
    Uncertainty-principle diagnostic of a 6x6 covariance.

    Returns:
        PhysicalityReport: sqrt(det) of every single-mode block and the smaller
        symplectic eigenvalue of every two-mode reduction.
    """
    v = np.asarray(v, dtype=float)
    single = {}
    for name, (i, j) in MODES.items():
        block = v[np.ix_([i, j], [i, j])]
        single[name] = math.sqrt(max(np.linalg.det(block), 0.0))
    pairs = {}
    names = list(MODES)
    for k, first in enumerate(names):
        for second in names[k + 1:]:
            pairs[f"{first}-{second}"] = symplectic_eigenvalues(reduced_covariance(v, (first, second)))[0]
    return PhysicalityReport(single_mode=single, two_mode=pairs, slack=slack)


def observables_at(p, d, branch_point):
    """
    Squeezing and entanglement on a stable stationary solution.

    Args:
        p (SystemParams): Inputs (rate unit must match branch_point).
        d (DerivedParams): Derived parameters.
        branch_point (BranchPoint): Stable solution from find_branches.

    Returns:
        FluctuationObservables: Variances, dB squeezing and membrane-condensate E_N.
    """
    if not branch_point.stable:
        raise NoStationaryStateError(
            f"branch point at delta_c={branch_point.delta_c:.6g} is unstable; no stationary covariance"
        )
    p_at = p if p.delta_c == branch_point.delta_c else p.replace(delta_c=branch_point.delta_c)
    a = drift_matrix(p_at, d, branch_point.state)
    cm = solve_lyapunov(a, diffusion_matrix(p_at, d))
    v = cm.v
    report = physicality_report(v)
    if not report.physical:
        _logger.debug(
            f"Sub-Heisenberg reduction at delta_c={branch_point.delta_c:.6g}: "
            f"min symplectic eigenvalue {report.minimum:.6g}"
        )
    return FluctuationObservables(
        sigma_q=float(v[2, 2]),
        sigma_Q=float(v[4, 4]),
        s_q_db=squeezing_db(v[2, 2]),
        s_Q_db=squeezing_db(v[4, 4]),
        e_n=logarithmic_negativity(v),
        sigma_p=float(v[3, 3]),
        sigma_P=float(v[5, 5]),
        min_symplectic=report.minimum,
    )


def integrate_cm(a, d, t_end, dt, v0=None):
    """
    Relax dV/dt = A V + V A^T + D with RK4 until the derivative vanishes.

    Args:
        a (numpy.ndarray): Stable drift matrix.
        d (numpy.ndarray): Diffusion matrix.
        t_end (float): Largest integration time (same time unit as 1/A).
        dt (float): Step.
        v0 (numpy.ndarray, optional): Initial covariance, vacuum I/2 by default.

    Returns:
        CovarianceMatrix: Converged covariance.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    _check_stable(a)
    n = a.shape[0]
    v = 0.5 * np.eye(n) if v0 is None else np.array(v0, dtype=float)

    def rhs(values):
        return a @ values + values @ a.T + d

    d_scale = float(np.max(np.abs(d)))
    if d_scale == 0:
        d_scale = max(float(np.max(np.abs(rhs(v)))), np.finfo(float).tiny)
    tolerance = TOLERANCES.cm_convergence_rel * d_scale

    n_steps = int(math.ceil(t_end / dt))
    for step in range(n_steps + 1):
        derivative = rhs(v)
        if float(np.max(np.abs(derivative))) < tolerance:
            _logger.debug(f"Covariance relaxed after {step} steps")
            return CovarianceMatrix(v=0.5 * (v + v.T), residual=float(np.max(np.abs(derivative))) / d_scale)
        v = rk4_step(rhs, v, dt)
    raise NonConvergenceError(
        f"covariance did not become stationary within t_end={t_end:.6g} "
        f"(|dV/dt|_max = {float(np.max(np.abs(rhs(v)))):.3g})",
        state=v,
    )


def branch_one_observables(p, table, threads=1):
    """
    Observables along continued branch 1 of a detuning sweep.

    Args:
        p (SystemParams): Inputs whose squeezing settings are applied.
        table (BranchTable): Sweep of the same mean-field parameters.
        threads (int): Worker threads.

    Returns:
        list: One FluctuationObservables (or None when branch 1 is absent or unstable) per detuning.
    """
    d = derive_params(p)
    branch = table.branch(1)

    def evaluate(delta):
        point = branch.get(float(delta))
        if point is None or not point.stable:
            return None
        return observables_at(p, d, point)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(evaluate, table.deltas))
    return [evaluate(delta) for delta in table.deltas]


def sweep_observables(p, xi2_ratios, injections, delta_values, cache, threads=1):
    """
    Cross product of xi2/xi1 values and injection settings over a detuning grid.

    Args:
        p (SystemParams): Base inputs in kappa units (see SystemParams.scaled).
        xi2_ratios (sequence): xi2/xi1 values.
        injections (sequence): Booleans, squeezed-vacuum injection on or off.
        delta_values (sequence): Detunings in the params' rate unit.
        cache (BranchCache): Shared steady-state sweeps.
        threads (int): Worker threads.

    Returns:
        list[ObservableRow]: Ordered by xi2 ratio, then injection, then detuning.
    """
    rows = []
    deltas = np.asarray(delta_values, dtype=float)
    for ratio in xi2_ratios:
        p_ratio = p.replace(xi2=ratio * p.xi1)
        table = cache.get_or_compute(p_ratio, deltas, threads=threads)
        branch = table.branch(1)
        for injected in injections:
            p_run = p_ratio.replace(squeezing_enabled=bool(injected))
            results = branch_one_observables(p_run, table, threads=threads)
            for delta, observables in zip(deltas, results):
                point = branch.get(float(delta))
                rows.append(ObservableRow(
                    delta_c_over_kappa=float(delta / p.kappa),
                    xi2_over_xi1=float(ratio),
                    squeezing_injected=bool(injected),
                    photon=point.photon_number if point is not None else None,
                    observables=observables,
                ))
            found = [r for r in results if r is not None]
            if found:
                _logger.info(
                    f"xi2/xi1={ratio:g} injection={'on' if injected else 'off'}: "
                    f"{len(found)} stable branch-1 points, max s_q {max(o.s_q_db for o in found):.3f} dB, "
                    f"max E_N {max(o.e_n for o in found):.4f}"
                )
            else:
                _logger.warning(f"xi2/xi1={ratio:g}: branch 1 has no stable points on the grid")
    return rows
