"""Distributionally robust covariance shrinkage.

For a nominal matrix with spectral decomposition ``V diag(x) V^T``, a
divergence ``d`` and a radius ``eps``, the robust estimator is

    X* = V diag(s(g*, x_1), ..., s(g*, x_p)) V^T

where the eigenvalue map ``s(g, b)`` is the root in ``(0, b)`` of
``2a + g * dd/da(a, b) = 0`` and ``g*`` is the unique root of the strictly
decreasing function

    F(g) = sum_i d(s(g, x_i), x_i) - eps.

Larger ``g`` means less shrinkage: ``s(0, b) = 0`` and ``s(g, b) -> b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divergences import DivergenceSpec, Kind, epsilon_max, gen_curv, gen_deriv, gen_value, get_spec
from .errors import BracketFailure, DimensionMismatch, DomainError, NoConvergence, NonFinite, RadiusNonPositive, RadiusTooLarge, SingularNominal
from .lambertw import lambert_w0
from .spectral import SpectralDecomposition, assemble, eigendecompose

DEFAULT_TOL = 1e-10
GAMMA_CAP = 1e30
BISECT_REL_WIDTH = 1e-12
STALL_SLACK = 1e4

_CBRT3 = 3.0 ** (1.0 / 3.0)


# ------------------------------------------------------------ eigenvalue map
#
# Every generator is homogeneous, so s(g, b) = b * s(g / b**k, 1) with k = 1
# for the Wasserstein and weighted quadratic kinds, k = 0 for the quadratic
# kind and k = 2 otherwise. The unit-scale maps below take g > 0.


def _unit_kl(g):
    rg = np.sqrt(g)
    return 2.0 * rg / (rg + np.sqrt(g + 16.0))


# Beyond this the root is 1 - 4/g to double precision (next term O(g^-2)),
# and the Cardano forms below would overflow.
_ASYMPTOTIC_G = 1e20


def _with_tail(formula):
    def unit(g):
        g = np.asarray(g, dtype=float)
        out = 1.0 - 4.0 / g
        body = g <= _ASYMPTOTIC_G
        out[body] = formula(g[body])
        return out

    return unit


@_with_tail
def _unit_wasserstein(g):
    # Cardano root of the cubic in sqrt(a), with the difference of the two
    # cube-root terms rationalized to avoid cancellation when g is large.
    rc = np.sqrt(1.0 + 2.0 * g / 27.0)
    t = np.cbrt(0.25 * g * (1.0 + rc))
    # u = g / t^2 stays bounded for every g, which keeps the quotient finite
    u = g / (t * t)
    root = u * u * (1.0 + rc) / (8.0 * t * (1.0 + u / 6.0 + u * u / 36.0))
    return root * root


def _unit_fisher_rao(g):
    return np.exp(-0.5 * lambert_w0(2.0 / g))


@_with_tail
def _unit_inverse_stein(g):
    # real root of 4a^3 + g a - g = 0, rationalized Cardano form
    q = g * (np.sqrt(3.0 * (27.0 + g)) + 9.0)
    v = g / np.cbrt(q) ** 2
    return 3.0 * _CBRT3 * v / (1.0 + _CBRT3 * v + _CBRT3 * _CBRT3 * v * v)


def _unit_symmetrized_stein(g):
    # h(a) = 4a^3 + g a^2 - g is increasing and convex on a > 0 with h(1) > 0,
    # so Newton started right of the root decreases monotonically onto it.
    a = np.minimum(1.0, np.cbrt(g / 4.0))
    for _ in range(200):
        h = 4.0 * a**3 + g * (a * a - 1.0)
        step = h / (12.0 * a * a + 2.0 * g * a)
        a = a - step
        if np.all(step <= 4e-16 * a):
            break
    return a


_UNIT_MAPS = {
    Kind.KULLBACK_LEIBLER: (_unit_kl, 2),
    Kind.WASSERSTEIN: (_unit_wasserstein, 1),
    Kind.FISHER_RAO: (_unit_fisher_rao, 2),
    Kind.INVERSE_STEIN: (_unit_inverse_stein, 2),
    Kind.SYMMETRIZED_STEIN: (_unit_symmetrized_stein, 2),
    Kind.QUADRATIC: (lambda g: g / (1.0 + g), 0),
    Kind.WEIGHTED_QUADRATIC: (lambda g: g / (g + 1.0), 1),
}


def _check_map_args(gamma, b):
    gamma, b = np.broadcast_arrays(np.asarray(gamma, dtype=float), np.asarray(b, dtype=float))
    if np.any(np.isnan(gamma)) or np.any(np.isnan(b)):
        raise NonFinite("eigenvalue map received NaN")
    if np.any(gamma < 0) or np.any(b < 0):
        raise DomainError("eigenvalue map needs gamma >= 0 and b >= 0")
    return gamma, b


def eigenvalue_map(spec: DivergenceSpec, gamma, b):
    """Shrunk eigenvalue ``s(gamma, b)`` from the closed form of each divergence.

    Returns 0 when ``gamma == 0`` or ``b == 0`` and ``b`` when ``gamma`` is
    infinite. Broadcasts over array arguments.
    """
    unit, power = _UNIT_MAPS[get_spec(spec).kind]
    gamma, b = _check_map_args(gamma, b)
    out = np.zeros(gamma.shape)
    live = (gamma > 0) & (b > 0)
    finite = live & np.isfinite(gamma) & np.isfinite(b)
    if np.any(finite):
        bl = b[finite]
        out[finite] = bl * unit(gamma[finite] / bl**power)
    saturated = live & np.isinf(gamma)
    out[saturated] = b[saturated]
    # the shrunk value never leaves [0, b]
    out = np.minimum(out, b)
    return float(out) if out.ndim == 0 else out


def eigenvalue_map_numeric(spec: DivergenceSpec, gamma, b, rel_width: float = 1e-13):
    """Solve ``2a + gamma * dd/da(a, b) = 0`` on ``(0, b)`` by bisection.

    The left-hand side is strictly increasing in ``a``, negative near 0 and
    equal to ``2b`` at ``a = b``. Bisection stops once the bracket is narrower
    than ``rel_width * b``.

    Raises
    ------
    BracketFailure
        If the bracket ends do not straddle zero.
    """
    spec = get_spec(spec)
    gamma, b = _check_map_args(gamma, b)
    if np.any(gamma <= 0) or np.any(b <= 0) or not np.all(np.isfinite(gamma * b)):
        raise DomainError("numeric eigenvalue map needs finite gamma > 0 and b > 0")
    shape = gamma.shape
    gamma = gamma.astype(float).ravel()
    b = b.astype(float).ravel()

    def lhs(a):
        with np.errstate(over="ignore", divide="ignore"):
            return 2.0 * a + gamma * np.asarray(gen_deriv(spec, a, b))

    lo = b * 1e-300
    hi = b.copy()
    if np.any(lhs(lo) >= 0) or np.any(lhs(hi) <= 0):
        # nudge the ends inward once before giving up
        lo = b * 1e-150
        hi = b * (1.0 - 1e-16)
        if np.any(lhs(lo) >= 0) or np.any(lhs(hi) <= 0):
            raise BracketFailure(f"{spec.name}: defining equation does not change sign on (0, b)")
    for _ in range(400):
        if np.all(hi - lo <= rel_width * b):
            break
        mid = 0.5 * (lo + hi)
        positive = lhs(mid) > 0
        hi = np.where(positive, mid, hi)
        lo = np.where(positive, lo, mid)
    out = (0.5 * (lo + hi)).reshape(shape)
    return float(out) if out.ndim == 0 else out


def eigenvalue_map_derivative(spec: DivergenceSpec, gamma, b):
    """``ds/dgamma = -d'(s) / (2 + gamma d''(s))`` from implicit differentiation."""
    gamma, b = _check_map_args(gamma, b)
    s = np.asarray(eigenvalue_map(spec, gamma, b), dtype=float)
    d1 = np.asarray(gen_deriv(spec, s, b))
    d2 = np.asarray(gen_curv(spec, s, b))
    out = -d1 / (2.0 + gamma * d2)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------- root-finding


def _positive_part(eigs) -> np.ndarray:
    e = np.asarray(eigs, dtype=float).ravel()
    return e[e > 0]


def big_f(spec: DivergenceSpec, gamma: float, nominal_eigs, epsilon: float) -> float:
    """``F(gamma) = sum_i d(s(gamma, x_i), x_i) - epsilon``; zero eigenvalues add nothing."""
    b = _positive_part(nominal_eigs)
    s = np.asarray(eigenvalue_map(spec, gamma, b))
    with np.errstate(divide="ignore"):
        total = float(np.sum(np.asarray(gen_value(spec, s, b))))
    return total - epsilon


def big_f_prime(spec: DivergenceSpec, gamma: float, nominal_eigs) -> float:
    b = _positive_part(nominal_eigs)
    if gamma <= 0:
        return -math.inf
    s = np.asarray(eigenvalue_map(spec, gamma, b))
    d1 = np.asarray(gen_deriv(spec, s, b))
    return float(np.sum(d1 * (-d1 / (2.0 + gamma * np.asarray(gen_curv(spec, s, b))))))


def gamma_upper_bound(spec: DivergenceSpec, nominal_eigs, epsilon: float) -> float | None:
    """Closed-form upper bound on the root for KL, Wasserstein and Fisher-Rao; else ``None``."""
    kind = get_spec(spec).kind
    e = np.asarray(nominal_eigs, dtype=float).ravel()
    p = e.size
    top = float(np.max(e))
    if kind is Kind.KULLBACK_LEIBLER:
        return 4.0 * top * top * math.exp(-4.0 * epsilon / p) / -math.expm1(-2.0 * epsilon / p)
    if kind is Kind.WASSERSTEIN:
        return 2.0 * math.sqrt(p * top**3 / epsilon)
    if kind is Kind.FISHER_RAO:
        return float(np.sum(e * e)) / math.sqrt(epsilon)
    return None


def _check_radius(spec: DivergenceSpec, epsilon, cap: float) -> float:
    try:
        epsilon = float(epsilon)
    except (TypeError, ValueError):
        raise RadiusNonPositive(f"radius {epsilon!r} is not a number") from None
    if math.isnan(epsilon) or epsilon <= 0:
        raise RadiusNonPositive(f"radius must be positive, got {epsilon}")
    if not epsilon < cap:
        raise RadiusTooLarge(f"radius {epsilon} must lie below {cap} for {spec.name}")
    return epsilon


def validate_problem(spec: DivergenceSpec, nominal_eigs, epsilon) -> tuple[np.ndarray, float]:
    """Check the radius and the nominal spectrum; return the spectrum and its radius cap."""
    e, cap = _validate_nominal(get_spec(spec), nominal_eigs, epsilon)
    _check_radius(get_spec(spec), epsilon, cap)
    return e, cap


def _validate_nominal(spec: DivergenceSpec, nominal_eigs, epsilon) -> tuple[np.ndarray, float]:
    e = np.asarray(nominal_eigs, dtype=float).ravel()
    if not np.all(np.isfinite(e)):
        raise NonFinite("nominal spectrum contains NaN or Inf")
    # A bad radius is reported before problems with the nominal matrix.
    _check_radius(spec, epsilon, math.inf)
    if e.size == 0:
        raise SingularNominal("empty nominal spectrum")
    if np.any(e < 0):
        raise DomainError(f"nominal matrix is not positive semidefinite (smallest eigenvalue {e.min():.3e})")
    if spec.requires_pd_nominal and np.any(e == 0):
        raise SingularNominal(f"{spec.name} needs a positive definite nominal matrix")
    return e, epsilon_max(spec, e)


@dataclass(frozen=True)
class RootReport:
    gamma: float
    residual: float
    bracket: tuple[float, float]
    evaluations: int


def _f_and_log_slope(spec: DivergenceSpec, gamma: np.ndarray, b: np.ndarray, epsilon: np.ndarray):
    """``F`` and ``dF / dlog(gamma)`` for a batch of multipliers, one map evaluation each.

    ``b`` holds one nominal spectrum per multiplier (shape ``(k, p)``) or one
    shared spectrum. Zero entries contribute nothing.
    """
    b = np.broadcast_to(b, (gamma.size, np.shape(b)[-1]))
    live = b > 0
    safe = np.where(live, b, 1.0)
    s = np.asarray(eigenvalue_map(spec, gamma[:, None], safe)).reshape(safe.shape)
    with np.errstate(divide="ignore"):
        vals = np.asarray(gen_value(spec, s, safe)).reshape(s.shape)
    f = np.sum(np.where(live, vals, 0.0), axis=1) - epsilon
    inside = live & (s > 0) & (s < safe)
    terms = np.zeros(s.shape)
    if np.any(inside):
        si, bi = s[inside], safe[inside]
        gi = np.broadcast_to(gamma[:, None], s.shape)[inside]
        d1 = np.asarray(gen_deriv(spec, si, bi))
        d2 = np.asarray(gen_curv(spec, si, bi))
        terms[inside] = -d1 * d1 / (2.0 + gi * d2)
    slope = gamma * np.sum(terms, axis=1)
    slope[~np.any(inside, axis=1)] = np.nan
    return f, slope


@dataclass(frozen=True)
class RootBatch:
    """Roots for several radii over one nominal spectrum."""

    gamma: np.ndarray
    residual: np.ndarray
    bracket: np.ndarray  # shape (m, 2)
    evaluations: int


def solve_gamma_batch(
    spec: DivergenceSpec,
    nominal_eigs,
    epsilons,
    tol: float = DEFAULT_TOL,
    polish: bool = False,
) -> RootBatch:
    """Solve ``F(gamma) = 0`` for every radius in ``epsilons`` at once.

    Each radius gets its own bracket: the top is the closed-form bound where
    one exists, otherwise the first power of 16 (from 1) with ``F < 0``; the
    bottom is found by dividing by 16. Inside the bracket a Newton step in
    ``log gamma`` is taken when it stays strictly inside and the previous step
    at least halved ``|F|``; otherwise the step is a geometric bisection. A
    radius is done once ``|F| <= tol * max(1, epsilon)`` or its bracket is
    narrower than ``1e-12`` relative. ``polish`` adds up to eight Newton steps
    after convergence.

    Raises
    ------
    NoConvergence
        If a bracket collapses while ``|F|`` still exceeds ``STALL_SLACK``
        times the target.
    """
    spec = get_spec(spec)
    eps = _radii(epsilons)
    e, cap = _validate_nominal(spec, nominal_eigs, eps[0])
    for value in eps:
        _check_radius(spec, value, cap)
    return _solve_rows(spec, e[None, :], eps, tol, polish)


def _radii(epsilons) -> np.ndarray:
    eps = np.atleast_1d(np.asarray(epsilons, dtype=float)).ravel()
    if eps.size == 0:
        raise DomainError("no radii to solve for")
    return eps


def _solve_rows(spec: DivergenceSpec, e: np.ndarray, eps: np.ndarray, tol: float, polish: bool) -> RootBatch:
    """Root-finding core; ``e`` holds one validated spectrum per radius, or a single shared row."""
    b = np.where(e > 0, e, 0.0)
    shared = b.shape[0] == 1
    m = eps.size
    target = tol * np.maximum(1.0, eps)
    evaluations = 0

    def f(g, rows):
        nonlocal evaluations
        evaluations += 1
        return _f_and_log_slope(spec, g, b if shared else b[rows], eps[rows])

    hi = np.array([gamma_upper_bound(spec, e[0 if shared else i], v) or 1.0 for i, v in enumerate(eps)])
    hi[~(np.isfinite(hi) & (hi > 0))] = 1.0
    f_hi, d_hi = f(hi, np.arange(m))
    while np.any(f_hi > 0):
        up = np.flatnonzero(f_hi > 0)
        hi[up] *= 16.0
        if np.any(hi[up] > GAMMA_CAP):
            raise BracketFailure(f"{spec.name}: F stays positive up to gamma={GAMMA_CAP:g}")
        f_hi[up], d_hi[up] = f(hi[up], up)
    lo, f_lo, d_lo = hi.copy(), f_hi.copy(), d_hi.copy()
    while np.any(f_lo < 0):
        down = np.flatnonzero(f_lo < 0)
        hi[down], f_hi[down], d_hi[down] = lo[down], f_lo[down], d_lo[down]
        lo[down] /= 16.0
        if np.any(lo[down] < 1e-300):
            raise BracketFailure(f"{spec.name}: F stays negative down to gamma=1e-300")
        f_lo[down], d_lo[down] = f(lo[down], down)
    bracket = np.column_stack([lo, hi])

    take_hi = -f_hi < f_lo
    best = np.where(take_hi, hi, lo)
    f_best = np.where(take_hi, f_hi, f_lo)
    d_best = np.where(take_hi, d_hi, d_lo)
    newton_ok = np.ones(m, dtype=bool)
    for _ in range(400):
        active = np.flatnonzero((np.abs(f_best) > target) & (hi - lo > BISECT_REL_WIDTH * hi))
        if active.size == 0:
            break
        a_lo, a_hi = lo[active], hi[active]
        fb, db = f_best[active], d_best[active]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = np.where(newton_ok[active] & (db < 0) & np.isfinite(db), -fb / db, np.nan)
            cand = best[active] * np.exp(np.clip(step, -700.0, 700.0))
        bisect = ~((a_lo < cand) & (cand < a_hi))
        cand[bisect] = np.sqrt(a_lo[bisect] * a_hi[bisect])
        stuck = ~((a_lo < cand) & (cand < a_hi))
        cand[stuck] = 0.5 * (a_lo[stuck] + a_hi[stuck])
        moving = (a_lo < cand) & (cand < a_hi)
        if not np.any(moving):
            break
        active, cand = active[moving], cand[moving]
        f_c, d_c = f(cand, active)
        newton_ok[active] = np.abs(f_c) <= 0.5 * np.abs(f_best[active])
        pos, neg = f_c > 0, f_c < 0
        lo[active[pos]] = cand[pos]
        hi[active[neg]] = cand[neg]
        zero = f_c == 0
        lo[active[zero]] = hi[active[zero]] = cand[zero]
        better = np.abs(f_c) < np.abs(f_best[active])
        idx = active[better]
        best[idx], f_best[idx], d_best[idx] = cand[better], f_c[better], d_c[better]

    if polish:
        for _ in range(8):
            ok = np.flatnonzero((f_best != 0) & (d_best < 0) & np.isfinite(d_best))
            if ok.size == 0:
                break
            cand = best[ok] * np.exp(np.clip(-f_best[ok] / d_best[ok], -700.0, 700.0))
            inside = (bracket[ok, 0] <= cand) & (cand <= bracket[ok, 1])
            ok, cand = ok[inside], cand[inside]
            if ok.size == 0:
                break
            f_c, d_c = f(cand, ok)
            better = np.abs(f_c) < np.abs(f_best[ok])
            if not np.any(better):
                break
            idx = ok[better]
            best[idx], f_best[idx], d_best[idx] = cand[better], f_c[better], d_c[better]
    residual = np.abs(f_best)
    # a bracket can collapse to roundoff before |F| reaches the target; that
    # is tolerated up to a factor STALL_SLACK, beyond which the root is wrong
    failed = ~(residual <= STALL_SLACK * target)
    if np.any(failed):
        i = int(np.flatnonzero(failed)[0])
        raise NoConvergence(f"{spec.name}: |F| = {residual[i]:.3e} at radius {eps[i]} after the bracket collapsed")
    return RootBatch(best, residual, bracket, evaluations)


def solve_gamma(
    spec: DivergenceSpec,
    nominal_eigs,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    polish: bool = False,
) -> RootReport:
    """Find ``gamma*`` with ``|F(gamma*)| <= tol * max(1, epsilon)``; see :func:`solve_gamma_batch`."""
    batch = solve_gamma_batch(spec, nominal_eigs, [epsilon], tol=tol, polish=polish)
    return RootReport(float(batch.gamma[0]), float(batch.residual[0]), tuple(float(v) for v in batch.bracket[0]), batch.evaluations)


# ------------------------------------------------------------------ estimator


@dataclass(frozen=True)
class ShrinkageSolution:
    """Robust estimator together with the quantities that certify it."""

    gamma_star: float
    shrunk_eigenvalues: np.ndarray
    estimator: np.ndarray
    achieved_divergence: float
    radius: float
    kind: DivergenceSpec
    residual: float
    nominal: SpectralDecomposition = field(repr=False)

    def __post_init__(self):
        self.shrunk_eigenvalues.setflags(write=False)
        self.estimator.setflags(write=False)

    @property
    def nominal_eigenvalues(self) -> np.ndarray:
        return self.nominal.eigenvalues

    @property
    def decomposition(self) -> SpectralDecomposition:
        """The estimator's own eigendecomposition (it shares the nominal eigenvectors)."""
        return SpectralDecomposition(self.shrunk_eigenvalues, self.nominal.eigenvectors)


def shrink_spectrum(spec: DivergenceSpec, nominal_eigs, epsilon: float, tol: float = DEFAULT_TOL, polish: bool = False):
    """Return ``(root report, shrunk eigenvalues)`` for a nominal spectrum."""
    report = solve_gamma(spec, nominal_eigs, epsilon, tol=tol, polish=polish)
    e = np.asarray(nominal_eigs, dtype=float)
    return report, np.asarray(eigenvalue_map(spec, report.gamma, e), dtype=float).reshape(e.shape)


def shrink_spectra(spec: DivergenceSpec, nominal_eigs, epsilons, tol: float = DEFAULT_TOL):
    """Batched :func:`shrink_spectrum`: one row of shrunk eigenvalues per radius."""
    e = np.asarray(nominal_eigs, dtype=float)
    batch = solve_gamma_batch(spec, e, epsilons, tol, False)
    return batch, np.asarray(eigenvalue_map(spec, batch.gamma[:, None], e[None, :]), dtype=float)


def shrink_spectra_many(spec: DivergenceSpec, nominals, radii, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Shrunk spectra for several nominal spectra of one order.

    ``radii[k]`` lists the radii for ``nominals[k]``. Returns an array of
    shape ``(len(nominals), len(radii[k]), p)``; every nominal needs the same
    number of radii. All roots are found in one batched solve.
    """
    spec = get_spec(spec)
    rows, eps = [], []
    for e, rs in zip(nominals, radii):
        rs = _radii(rs)
        e, cap = _validate_nominal(spec, e, rs[0])
        for value in rs:
            _check_radius(spec, value, cap)
        rows.append(np.broadcast_to(e, (rs.size, e.size)))
        eps.append(rs)
    if not rows:
        raise DomainError("no nominal spectra to shrink")
    if len({r.shape for r in rows}) != 1:
        raise DimensionMismatch("every nominal needs the same order and number of radii")
    E = np.concatenate(rows)
    batch = _solve_rows(spec, E, np.concatenate(eps), tol, False)
    live = E > 0
    safe = np.where(live, E, 1.0)
    out = np.where(live, np.asarray(eigenvalue_map(spec, batch.gamma[:, None], safe)).reshape(E.shape), 0.0)
    return out.reshape(len(rows), -1, E.shape[1])


def estimate(
    nominal,
    spec: DivergenceSpec,
    epsilon: float,
    tol: float = DEFAULT_TOL,
    decomposition: SpectralDecomposition | None = None,
    polish: bool = False,
) -> ShrinkageSolution:
    """Robust covariance estimator for the ball of radius ``epsilon`` around ``nominal``.

    Pass ``decomposition`` to reuse an existing eigendecomposition of the
    nominal matrix (e.g. across a radius grid).
    """
    spec = get_spec(spec)
    d = decomposition if decomposition is not None else eigendecompose(nominal)
    report, shrunk = shrink_spectrum(spec, d.eigenvalues, epsilon, tol=tol, polish=polish)
    positive = d.eigenvalues > 0
    achieved = float(np.sum(np.asarray(gen_value(spec, shrunk[positive], d.eigenvalues[positive]))))
    return ShrinkageSolution(
        gamma_star=report.gamma,
        shrunk_eigenvalues=shrunk,
        estimator=assemble(shrunk, d.eigenvectors),
        achieved_divergence=achieved,
        radius=float(epsilon),
        kind=spec,
        residual=report.residual,
        nominal=d,
    )
