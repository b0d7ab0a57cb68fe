import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import root_scalar

from ..exceptions import ConfigError, InternalConsistencyError, NonConvergenceError, SofteningPoleError
from ..models.cavity_model import drift_matrix
from ..models.system_params import TOLERANCES, MeanFieldState

_logger = logging.getLogger(__name__)

DEFAULT_GRID_POINTS = 40000
POLE_REFINEMENT_POINTS = 2000


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float
    marginal: bool = False
    coefficients: tuple = ()


@dataclass(frozen=True)
class BranchPoint:
    delta_c: float
    photon_number: float
    state: MeanFieldState
    stable: bool
    branch_id: int
    margin: float
    marginal: bool = False
    residual: float = 0.0


@dataclass(frozen=True)
class Fold:
    """Root count changes between two neighbouring detunings."""

    delta_before: float
    delta_after: float
    count_before: int
    count_after: int

    @property
    def location(self):
        return 0.5 * (self.delta_before + self.delta_after)


@dataclass(frozen=True)
class BranchTable:
    deltas: np.ndarray
    points: tuple
    counts: tuple
    folds: tuple = field(default_factory=tuple)

    @property
    def max_count(self):
        return max(self.counts) if self.counts else 0

    def points_at(self, index):
        delta = self.deltas[index]
        return [pt for pt in self.points if pt.delta_c == delta]

    def branch(self, branch_id):
        """Points of one continued branch keyed by detuning."""
        return {pt.delta_c: pt for pt in self.points if pt.branch_id == branch_id}

    def first_delta_with_count(self, count):
        for delta, n in zip(self.deltas, self.counts):
            if n >= count:
                return float(delta)
        return None


def softening_pole(p):
    """Photon number where omega_m + 2*xi2*I vanishes, or None if there is none for I > 0."""
    if p.xi2 >= 0:
        return None
    return -p.omega_m / (2.0 * p.xi2)


def closed_form_displacements(p, d, intensity):
    """
    Stationary membrane and condensate displacements at a given photon number.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters.
        intensity (float | numpy.ndarray): Photon number(s) I.

    Returns:
        tuple: (q, p, Q, P), scalars or arrays matching intensity.
    """
    intensity_arr = np.asarray(intensity, dtype=float)
    stiffness = p.omega_m + 2.0 * p.xi2 * intensity_arr
    if np.any(stiffness == 0):
        raise SofteningPoleError(
            f"omega_m + 2*xi2*I = 0 at I = {float(np.ravel(intensity_arr)[np.argmin(np.abs(np.ravel(stiffness)))]):.17g}"
        )
    q = p.xi1 * intensity_arr / stiffness
    big_q = -d.zeta * d.omega_c * intensity_arr / (d.omega_c ** 2 + p.gamma_c ** 2)
    big_p = (p.gamma_c / d.omega_c) * big_q
    momentum = np.zeros_like(q)
    if np.ndim(intensity) == 0:
        return float(q), 0.0, float(big_q), float(big_p)
    return q, momentum, big_q, big_p


def _detuning_of_intensity(p, d, delta_c, intensity):
    with np.errstate(divide='ignore', invalid='ignore'):
        q = p.xi1 * intensity / (p.omega_m + 2.0 * p.xi2 * intensity)
    big_q = -d.zeta * d.omega_c * intensity / (d.omega_c ** 2 + p.gamma_c ** 2)
    return delta_c + d.zeta * big_q - p.xi1 * q + p.xi2 * q * q


def steady_state_residual(p, d, delta_c, intensity):
    """f(I) = I*(Delta(I)**2 + kappa**2) - eta**2."""
    delta = _detuning_of_intensity(p, d, delta_c, intensity)
    return intensity * (delta * delta + p.kappa ** 2) - p.eta ** 2


@functools.lru_cache(maxsize=64)
def _scan_grid(i_max, n_grid, pole):
    n_lin = n_grid // 2
    n_log = n_grid - n_lin
    grid = np.concatenate([
        [0.0],
        np.linspace(0.0, i_max, n_lin),
        np.geomspace(i_max * 1e-12, i_max, n_log),
    ])
    if pole is not None and 0.0 < pole < i_max:
        offsets = np.geomspace(1e-12, 0.5, POLE_REFINEMENT_POINTS)
        grid = np.concatenate([grid, pole * (1.0 - offsets), pole * (1.0 + offsets)])
        grid = grid[np.abs(grid - pole) > 1e-13 * pole]
    grid = np.unique(grid[(grid >= 0.0) & (grid <= i_max)])
    return grid


def _refine_root(p, d, delta_c, lo, hi):
    result = root_scalar(
        lambda intensity: float(steady_state_residual(p, d, delta_c, intensity)),
        bracket=[float(lo), float(hi)],
        method='bisect',
        xtol=np.finfo(float).tiny,
        rtol=TOLERANCES.bisection_rtol,
        maxiter=200,
    )
    if not result.converged:
        raise NonConvergenceError(
            f"bisection in [{lo:.17g}, {hi:.17g}] at delta_c={delta_c:.17g} stopped: {result.flag}"
        )
    return result.root


def _state_at(p, d, delta_c, intensity):
    q, momentum, big_q, big_p = closed_form_displacements(p, d, intensity)
    delta = delta_c + d.zeta * big_q - p.xi1 * q + p.xi2 * q * q
    alpha = -p.eta / complex(p.kappa, delta)
    return MeanFieldState(
        alpha_re=alpha.real, alpha_im=alpha.imag,
        q_bar=q, p_bar=momentum, Q_bar=big_q, P_bar=big_p,
    )


def find_branches(p, d, delta_c=None, n_grid=DEFAULT_GRID_POINTS):
    """
    All stationary solutions at one detuning.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters.
        delta_c (float, optional): Detuning in the params' rate unit. Defaults to p.delta_c.
        n_grid (int): Points of the log+linear scan.

    Returns:
        list[BranchPoint]: Solutions sorted by photon number, branch_id numbered from 1.
    """
    if delta_c is None:
        delta_c = p.delta_c
    p_at = p if delta_c == p.delta_c else replace(p, delta_c=delta_c)

    if p.eta == 0:
        roots = np.array([0.0])
    else:
        i_max = 1.05 * p.eta ** 2 / p.kappa ** 2
        pole = softening_pole(p)
        grid = _scan_grid(i_max, n_grid, pole)
        values = steady_state_residual(p, d, delta_c, grid)

        exact = grid[values == 0.0]
        change = np.nonzero(values[:-1] * values[1:] < 0.0)[0]
        if pole is not None:
            change = change[~((grid[change] < pole) & (grid[change + 1] > pole))]
        bracketed = np.array([_refine_root(p, d, delta_c, grid[k], grid[k + 1]) for k in change])
        roots = np.sort(np.concatenate([exact, bracketed]))
        if len(roots) == 0:
            raise InternalConsistencyError(
                f"no stationary photon number found at delta_c={delta_c:.17g} although f(0) < 0 < f(inf)"
            )
        keep = np.concatenate([[True], np.diff(roots) > TOLERANCES.root_dedup_rel * p.eta ** 2 / p.kappa ** 2])
        roots = roots[keep]

    points = []
    for index, intensity in enumerate(roots, start=1):
        intensity = float(intensity)
        residual = float(steady_state_residual(p, d, delta_c, intensity))
        if abs(residual) > TOLERANCES.root_residual_rel * max(p.eta ** 2, np.finfo(float).tiny):
            raise InternalConsistencyError(
                f"root I={intensity:.17g} at delta_c={delta_c:.17g} has residual {residual:.3g}"
            )
        state = _state_at(p, d, delta_c, intensity)
        verdict = classify_stability(drift_matrix(p_at, d, state))
        points.append(BranchPoint(
            delta_c=float(delta_c),
            photon_number=intensity,
            state=state,
            stable=verdict.stable,
            branch_id=index,
            margin=verdict.margin,
            marginal=verdict.marginal,
            residual=residual,
        ))
    _logger.debug(
        f"delta_c={delta_c:.6g}: {len(points)} root(s), {sum(pt.stable for pt in points)} stable"
    )
    return points


def faddeev_leverrier(matrix):
    """
    Characteristic polynomial det(sI - A) by the Faddeev-LeVerrier recursion.

    Returns:
        numpy.ndarray: Coefficients, leading 1 first.
    """
    a = np.asarray(matrix, dtype=float)
    n = a.shape[0]
    coefficients = np.zeros(n + 1)
    coefficients[0] = 1.0
    m = np.zeros_like(a)
    identity = np.eye(n)
    for k in range(1, n + 1):
        m = a @ m + coefficients[k - 1] * identity
        coefficients[k] = -np.trace(a @ m) / k
    return coefficients


def characteristic_polynomial(matrix, method='eigen'):
    """
    Characteristic polynomial coefficients of a real square matrix.

    'faddeev-leverrier' runs the trace recursion directly. 'eigen' rebuilds the
    coefficients from the eigenvalues, which keeps the small constant terms of
    stiff drift matrices (eigenvalues spread over several decades) accurate.
    """
    if method == 'faddeev-leverrier':
        return faddeev_leverrier(matrix)
    if method != 'eigen':
        raise ValueError(f"unknown method {method!r}")
    return np.real(np.poly(np.linalg.eigvals(matrix)))


def routh_first_column(coefficients):
    """
    First column of the Routh array.

    Returns:
        tuple: (first_column, marginal) where marginal is set when a zero pivot
        or a zero row had to be replaced.
    """
    coeffs = np.asarray(coefficients, dtype=float)
    n = len(coeffs) - 1
    # s -> sigma*s brings every coefficient to order one
    magnitudes = [abs(coeffs[k] / coeffs[0]) ** (1.0 / k) for k in range(1, n + 1) if coeffs[k] != 0]
    sigma = max(magnitudes) if magnitudes else 1.0
    coeffs = coeffs / coeffs[0] / sigma ** np.arange(n + 1)

    width = n // 2 + 1
    rows = [np.zeros(width), np.zeros(width)]
    rows[0][: len(coeffs[0::2])] = coeffs[0::2]
    rows[1][: len(coeffs[1::2])] = coeffs[1::2]
    marginal = False
    for i in range(2, n + 1):
        above, prev = rows[i - 2], rows[i - 1]
        scale = max(float(np.max(np.abs(prev))), float(np.max(np.abs(above))), np.finfo(float).tiny)
        if np.all(np.abs(prev) <= TOLERANCES.routh_zero_rel * scale):
            # zero row: replace by the derivative of the auxiliary polynomial
            order = n - (i - 2)
            powers = order - 2 * np.arange(width)
            prev = np.where(powers > 0, above * powers, 0.0)
            rows[i - 1] = prev
            marginal = True
        pivot = prev[0]
        if abs(pivot) <= TOLERANCES.routh_zero_rel * scale:
            pivot = TOLERANCES.routh_zero_rel * scale
            prev = prev.copy()
            prev[0] = pivot
            rows[i - 1] = prev
            marginal = True
        row = np.zeros(width)
        for j in range(width - 1):
            row[j] = (pivot * above[j + 1] - above[0] * prev[j + 1]) / pivot
        rows.append(row)
    return np.array([r[0] for r in rows[: n + 1]]), marginal


def classify_stability(matrix, method='eigen'):
    """
    Routh-Hurwitz stability verdict for a drift matrix.

    With the default method='eigen' the polynomial is rebuilt from the
    eigenvalues, so the Routh array only cross-checks them; where the two
    disagree the eigenvalue margin wins and the point is flagged marginal.
    method='faddeev-leverrier' makes the verdict independent of eigvals but
    loses the constant term on stiff matrices.

    Args:
        matrix (numpy.ndarray): Real square matrix A.
        method (str): How to form the characteristic polynomial, see characteristic_polynomial.

    Returns:
        StabilityVerdict: stable flag, margin = -max Re(eigenvalue), marginal flag.
    """
    a = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InternalConsistencyError("drift matrix has non-finite entries", state=a)
    coefficients = characteristic_polynomial(a, method)
    first_column, marginal = routh_first_column(coefficients)
    routh_stable = bool(np.all(first_column > 0))
    margin = -float(np.max(np.linalg.eigvals(a).real))

    stable = routh_stable
    if routh_stable != (margin > 0):
        log = _logger.debug if marginal else _logger.warning
        log(
            f"Routh verdict ({routh_stable}) disagrees with eigenvalue margin {margin:.6g}; "
            "treating the point as marginal"
        )
        marginal = True
        stable = margin > 0
    return StabilityVerdict(stable=stable, margin=margin, marginal=marginal, coefficients=tuple(coefficients))


def _assign_branch_ids(per_delta):
    next_id = 1
    previous = []
    labelled = []
    for points in per_delta:
        ids = [None] * len(points)
        pairs = sorted(
            (abs(pt.photon_number - prev_i), k, prev_id)
            for k, pt in enumerate(points)
            for prev_id, prev_i in previous
        )
        used_prev, used_cur = set(), set()
        for _, k, prev_id in pairs:
            if k in used_cur or prev_id in used_prev:
                continue
            ids[k] = prev_id
            used_cur.add(k)
            used_prev.add(prev_id)
        for k in range(len(points)):
            if ids[k] is None:
                ids[k] = next_id
                next_id += 1
        labelled.append([replace(pt, branch_id=ids[k]) for k, pt in enumerate(points)])
        previous = [(ids[k], pt.photon_number) for k, pt in enumerate(points)]
    return labelled


def sweep_detuning(p, d, delta_values, threads=1, n_grid=DEFAULT_GRID_POINTS):
    """
    Stationary solutions over a detuning grid with continued branch labels.

    Args:
        p (SystemParams): Inputs.
        d (DerivedParams): Derived parameters.
        delta_values (sequence): At least two detunings, in the params' rate unit.
        threads (int): Worker threads; output order is the grid order.
        n_grid (int): Scan resolution of each find_branches call.

    Returns:
        BranchTable: All points, per-detuning counts and fold locations.
    """
    deltas = np.asarray(delta_values, dtype=float)
    if len(deltas) < 2:
        raise ValueError("a sweep needs at least two detuning points")

    def solve(delta):
        return find_branches(p, d, float(delta), n_grid)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_delta = list(pool.map(solve, deltas))
    else:
        per_delta = [solve(delta) for delta in deltas]

    labelled = _assign_branch_ids(per_delta)
    counts = tuple(len(points) for points in labelled)
    folds = []
    for k in range(1, len(deltas)):
        if counts[k] != counts[k - 1]:
            folds.append(Fold(float(deltas[k - 1]), float(deltas[k]), counts[k - 1], counts[k]))
            if abs(counts[k] - counts[k - 1]) % 2:
                _logger.warning(
                    f"Root count jumped from {counts[k - 1]} to {counts[k]} between "
                    f"{deltas[k - 1]:.6g} and {deltas[k]:.6g}; grid may be too coarse near a fold"
                )
    _logger.info(
        f"Swept {len(deltas)} detunings: max {max(counts)} coexisting root(s), {len(folds)} fold(s)"
    )
    return BranchTable(
        deltas=deltas,
        points=tuple(pt for points in labelled for pt in points),
        counts=counts,
        folds=tuple(folds),
    )


def kappa_grid(p, delta_min_over_kappa, delta_max_over_kappa, n_points):
    """Detuning grid given in multiples of kappa, returned in the params' rate unit."""
    if n_points < 2:
        raise ConfigError(f"must be >= 2, got {n_points}", key='n_points')
    if not delta_min_over_kappa < delta_max_over_kappa:
        raise ConfigError(
            f"must be smaller than delta_max ({delta_max_over_kappa:g}), got {delta_min_over_kappa:g}",
            key='delta_min',
        )
    return np.linspace(delta_min_over_kappa, delta_max_over_kappa, int(n_points)) * p.kappa


def is_monotone_displacement(p, d, intensities):
    """q(I) nondecreasing on each side of the softening pole (for xi1 >= 0)."""
    intensities = np.sort(np.asarray(intensities, dtype=float))
    pole = softening_pole(p)
    segments = [intensities]
    if pole is not None:
        segments = [intensities[intensities < pole], intensities[intensities > pole]]
    for segment in segments:
        if len(segment) < 2:
            continue
        q = closed_form_displacements(p, d, segment)[0]
        if np.any(np.diff(q) < -1e-12 * np.max(np.abs(q))):
            return False
    return True


def photon_bound(p):
    """Upper end of the photon-number scan, 1.05*eta**2/kappa**2."""
    return 1.05 * p.eta ** 2 / p.kappa ** 2


def fold_distance(points):
    """Smallest gap between coexisting photon numbers, inf for a single root."""
    values = sorted(pt.photon_number for pt in points)
    if len(values) < 2:
        return math.inf
    return float(np.min(np.diff(values)))
