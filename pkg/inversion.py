"""
QuasiLocal Inversion
Gauss-Newton reconstruction of a quasi-local stiffness matrix from coarse
measurements: analytic derivatives of the effective model with respect to the
relevant entries, shifted (optionally regularized) normal equations, Armijo
backtracking and the randomized incomplete-data variant.
"""

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator, lsqr

import assembly
import settings
from effective import EffectiveModel
from errors import ConfigError, LineSearchFailed, NotPositiveDefinite, SingularNormalEquations
from pattern import build_pattern, pack, unpack

logger = logging.getLogger(__name__)


@dataclass
class ArmijoParams:
    c1: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 30

    def __post_init__(self):
        if not 0 < self.c1 < 1:
            raise ConfigError(f"Armijo c1 must lie in (0, 1), got {self.c1}")
        if not 0 < self.shrink < 1:
            raise ConfigError(f"Armijo shrink factor must lie in (0, 1), got {self.shrink}")
        if self.initial_step <= 0:
            raise ConfigError(f"Initial step must be positive, got {self.initial_step}")
        if self.max_backtracks < 0:
            raise ConfigError(f"max_backtracks must be >= 0, got {self.max_backtracks}")


@dataclass
class InversionConfig:
    """
    Gauss-Newton settings. eta=None selects the relative shift
    eta_relative * trace(H_k) / mu.

    Steps use the dense Jacobian up to jacobian_budget_bytes, then the
    assembled normal matrix up to normal_budget_bytes, then damped LSQR.
    """

    ell: int
    eta: float = None
    eta_relative: float = 1e-8
    gamma: float = 0.0
    s_reg: np.ndarray = None
    max_iters: int = 20
    armijo: ArmijoParams = field(default_factory=ArmijoParams)
    randomized: bool = False
    fraction: float = 0.5
    seed: int = 0
    stall_tolerance: float = 1e-10
    stall_window: int = 3
    jacobian_budget_bytes: float = 2e8
    normal_budget_bytes: float = 4e8
    lsqr_iter_lim: int = 400

    def __post_init__(self):
        if isinstance(self.armijo, dict):
            self.armijo = ArmijoParams(**self.armijo)
        if self.ell < 0:
            raise ConfigError(f"ell must be >= 0, got {self.ell}")
        if self.eta is not None and self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.eta_relative < 0:
            raise ConfigError(f"eta_relative must be >= 0, got {self.eta_relative}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.fraction <= 1:
            raise ConfigError(f"Randomized fraction must lie in (0, 1], got {self.fraction}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")

    @classmethod
    def from_settings(cls, ell, **overrides):
        """Config built from the inversion/solver blocks of config.yaml"""
        block = dict(settings.config['inversion'])
        solver = settings.solver_settings()
        block['jacobian_budget_bytes'] = solver['jacobian_budget_bytes']
        block['normal_budget_bytes'] = solver['normal_budget_bytes']
        block['lsqr_iter_lim'] = solver['lsqr_iter_lim']
        block.update(overrides)
        return cls(ell=ell, **block)

    def as_dict(self):
        data = asdict(self)
        data['s_reg'] = None if self.s_reg is None else 'provided'
        return data


@dataclass
class InversionTrace:
    """Per-iteration records of one Gauss-Newton run and its final matrix"""

    ell: int
    records: list = field(default_factory=list)
    matrix: object = None
    status: str = 'running'

    @property
    def values(self):
        return [record['J'] for record in self.records]

    @property
    def final_value(self):
        return self.records[-1]['J'] if self.records else float('nan')

    @property
    def iterations(self):
        return max(len(self.records) - 1, 0)


class Linearization:
    """
    Derivatives of the stacked coarse predictions at one iterate.

    With Z = S_{H,0}^-1 and U the full predictions, the derivative along a
    symmetric perturbation V is -Z (V U)_int. Rows are the interior entries
    of the m0 x q prediction block in C order; boundary rows vanish.
    """

    def __init__(self, model, measurements, pattern):
        mesh = model.mesh
        self.model = model
        self.measurements = measurements
        self.pattern = pattern
        self.predictions = model.predict(measurements.boundary, measurements.load)
        self.residual = (measurements.observed - self.predictions)[mesh.interior_nodes]
        self.scale = 1.0 / measurements.norm_squared

        Z = model.interior_solve(np.eye(mesh.interior_count))
        self.Z = 0.5 * (Z + Z.T)
        self.Z_full = np.zeros((mesh.interior_count, mesh.node_count))
        self.Z_full[:, mesh.interior_nodes] = self.Z

    @property
    def shape(self):
        return (self.residual.size, self.pattern.size)

    @property
    def dense_bytes(self):
        return 8 * self.shape[0] * self.shape[1]

    def dense(self, block=256):
        """Unscaled Jacobian, (m0*q) x mu"""
        rows, cols = self.pattern.rows, self.pattern.cols
        U = self.predictions
        m0, q = self.residual.shape
        J = np.empty((m0 * q, self.pattern.size))
        for start in range(0, self.pattern.size, block):
            sl = slice(start, min(start + block, self.pattern.size))
            a, b = rows[sl], cols[sl]
            part = np.einsum('ik,kj->ijk', self.Z_full[:, a], U[b])
            off = a != b
            part[:, :, off] += np.einsum('ik,kj->ijk', self.Z_full[:, b[off]], U[a[off]])
            J[:, sl] = -part.reshape(m0 * q, -1)
        return J

    def matvec(self, v):
        V = unpack(self.pattern, np.ravel(v))
        return -(self.Z_full @ (V @ self.predictions)).ravel()

    def rmatvec(self, w):
        W = np.asarray(w, dtype=float).reshape(self.residual.shape)
        G = (self.Z_full.T @ W) @ self.predictions.T
        rows, cols = self.pattern.rows, self.pattern.cols
        out = G[rows, cols] + G[cols, rows]
        diagonal = rows == cols
        out[diagonal] = G[rows[diagonal], rows[diagonal]]
        return -out

    def operator(self):
        """Scaled Jacobian sqrt(c) J as a LinearOperator"""
        root = math.sqrt(self.scale)
        return LinearOperator(
            self.shape,
            matvec=lambda v: root * self.matvec(v),
            rmatvec=lambda w: root * self.rmatvec(w),
            dtype=float,
        )

    @property
    def normal_bytes(self):
        return 8 * self.pattern.size ** 2

    def normal_matrix(self, block=512):
        """
        Unscaled J'J, mu x mu, from the Gram matrices Z'Z and U U'.

        Column k of J is -vec(Z e_a U_b' + Z e_b U_a') for the entry (a, b)
        (one term on the diagonal), so every inner product of two columns is
        a sum of products zz[., .] * uu[., .].
        """
        zz = self.Z_full.T @ self.Z_full
        uu = self.predictions @ self.predictions.T
        a, b = self.pattern.rows, self.pattern.cols
        off = (a != b).astype(float)
        size = self.pattern.size
        G = np.empty((size, size))
        for start in range(0, size, block):
            sl = slice(start, min(start + block, size))
            ak, bk, wk = a[sl], b[sl], off[sl][:, None]
            part = zz[np.ix_(ak, a)] * uu[np.ix_(bk, b)]
            part += off * (zz[np.ix_(ak, b)] * uu[np.ix_(bk, a)])
            part += wk * (zz[np.ix_(bk, a)] * uu[np.ix_(ak, b)])
            part += (wk * off) * (zz[np.ix_(bk, b)] * uu[np.ix_(ak, a)])
            G[sl] = part
        return G

    def trace_normal(self):
        """trace(J'J) of the unscaled Jacobian, without forming J"""
        zz = self.Z_full.T @ self.Z_full
        uu = self.predictions @ self.predictions.T
        a, b = self.pattern.rows, self.pattern.cols
        diag_z, diag_u = np.diag(zz), np.diag(uu)
        terms = diag_z[a] * diag_u[b] + diag_z[b] * diag_u[a] + 2.0 * zz[a, b] * uu[a, b]
        diagonal = a == b
        terms[diagonal] = diag_z[a[diagonal]] * diag_u[a[diagonal]]
        return float(terms.sum())

    def misfit_gradient(self):
        """Gradient of J_H with respect to the relevant entries"""
        return -self.scale * self.rmatvec(self.residual.ravel())


def _regularization(config, s):
    if config is None or config.gamma == 0.0:
        return 0.0, np.zeros_like(s)
    s_reg = np.zeros_like(s) if config.s_reg is None else np.asarray(config.s_reg, dtype=float)
    offset = s - s_reg
    return 0.5 * config.gamma * float(offset @ offset), offset


def jacobian(S_H, pattern, measurements, model=None):
    """
    Dense Jacobian of the stacked predictions, (q*m) x mu.

    Row k*m + i is node i of measurement k (column-major vec of the m x q
    prediction matrix); boundary rows are zero.
    """
    mesh = measurements.mesh
    model = model or EffectiveModel(S_H, mesh)
    lin = Linearization(model, measurements, pattern)
    m0, q = lin.residual.shape
    interior = lin.dense().reshape(m0, q, pattern.size)
    full = np.zeros((q, mesh.node_count, pattern.size))
    full[:, mesh.interior_nodes, :] = interior.transpose(1, 0, 2)
    return full.reshape(q * mesh.node_count, pattern.size)


def gradient_JH(S_H, pattern, measurements, gamma=0.0, s_reg=None):
    """Gradient of J_H (plus the Tikhonov term when gamma > 0)"""
    lin = Linearization(EffectiveModel(S_H, measurements.mesh), measurements, pattern)
    grad = lin.misfit_gradient()
    if gamma:
        s = pack(pattern, S_H)
        grad = grad + gamma * (s - (np.zeros_like(s) if s_reg is None else np.asarray(s_reg, dtype=float)))
    return grad


def _augmented_operator(J, root_gamma):
    m, n = J.shape
    return LinearOperator(
        (m + n, n),
        matvec=lambda v: np.concatenate([J.matvec(v), root_gamma * np.ravel(v)]),
        rmatvec=lambda w: J.rmatvec(w[:m]) + root_gamma * w[m:],
        dtype=float,
    )


def gauss_newton_step(J, r, eta, gamma=0.0, offset=None, iter_lim=None):
    """
    Direction p of the shifted Gauss-Newton equations.

    Solves (J'J + (eta + gamma) I) p = J'r - gamma * offset. J is a dense
    array (normal equations, Cholesky) or a LinearOperator (damped LSQR).
    """
    if eta < 0 or gamma < 0:
        raise ConfigError(f"eta and gamma must be >= 0, got {eta}, {gamma}")
    r = np.ravel(np.asarray(r, dtype=float))
    mu = J.shape[1]
    offset = np.zeros(mu) if offset is None else np.asarray(offset, dtype=float)

    if isinstance(J, LinearOperator):
        if iter_lim is None:
            iter_lim = settings.solver_settings()['lsqr_iter_lim']
        A, b = J, r
        if gamma > 0:
            A = _augmented_operator(J, math.sqrt(gamma))
            b = np.concatenate([r, -math.sqrt(gamma) * offset])
        result = lsqr(A, b, damp=math.sqrt(eta), atol=1e-12, btol=1e-12, iter_lim=iter_lim)
        p, istop, itn = result[0], result[1], result[2]
        logger.debug("LSQR step: istop=%d after %d iterations", istop, itn)
        return p

    J = np.asarray(J, dtype=float)
    return normal_step(J.T @ J, J.T @ r, eta, gamma, offset)


def normal_step(H, g, eta, gamma=0.0, offset=None, overwrite=False):
    """
    Direction p from an assembled Gauss-Newton matrix H = J'J and g = J'r:
    (H + (eta + gamma) I) p = g - gamma * offset, by Cholesky. overwrite=True
    lets the factorization reuse the storage of H.
    """
    if eta < 0 or gamma < 0:
        raise ConfigError(f"eta and gamma must be >= 0, got {eta}, {gamma}")
    H = np.asarray(H, dtype=float) if overwrite else np.array(H, dtype=float)
    mu = H.shape[0]
    offset = np.zeros(mu) if offset is None else np.asarray(offset, dtype=float)
    shift = eta + gamma
    H[np.diag_indices_from(H)] += shift
    rhs = np.asarray(g, dtype=float) - gamma * offset
    try:
        factor = la.cho_factor(H, lower=True, overwrite_a=True)
    except la.LinAlgError:
        raise SingularNormalEquations(
            "Gauss-Newton normal equations are singular; use a shift eta > 0"
        )
    pivots = np.abs(np.diag(factor[0])) ** 2
    if shift == 0 and pivots.min() <= mu * np.finfo(float).eps * pivots.max():
        raise SingularNormalEquations(
            "Gauss-Newton normal equations are numerically singular; use a shift eta > 0"
        )
    return la.cho_solve(factor, rhs)


def objective(S_H, measurements, pattern, config=None):
    """J_H plus the optional Tikhonov term; raises NotPositiveDefinite for inadmissible S_H"""
    value = EffectiveModel(S_H, measurements.mesh).functional(measurements)
    penalty, _ = _regularization(config, pack(pattern, S_H))
    return value + penalty


def line_search(S_H, direction, measurements, armijo, pattern, slope, current_value=None, config=None):
    """
    Armijo backtracking along direction (a relevant-entry vector).

    slope is <gradient, direction>. Returns (step, accepted matrix, accepted
    value, backtracks). Trials with an indefinite interior block count as
    failed trials.
    """
    s = pack(pattern, S_H)
    if current_value is None:
        current_value = objective(S_H, measurements, pattern, config)
    step = armijo.initial_step
    for backtrack in range(armijo.max_backtracks + 1):
        trial = unpack(pattern, s + step * direction)
        try:
            value = objective(trial, measurements, pattern, config)
        except NotPositiveDefinite:
            logger.debug("Trial step %.3e rejected: interior block not SPD", step)
        else:
            if value <= current_value + armijo.c1 * step * slope:
                return step, trial, value, backtrack
        step *= armijo.shrink
    raise LineSearchFailed(f"No acceptable step after {armijo.max_backtracks} backtracks")


def randomized_subset(measurements, fraction, rng):
    """Sorted uniform random subset of ceil(fraction * q) measurement indices"""
    if not 0 < fraction <= 1:
        raise ConfigError(f"Randomized fraction must lie in (0, 1], got {fraction}")
    q = measurements if isinstance(measurements, (int, np.integer)) else measurements.q
    size = math.ceil(fraction * q)
    if size >= q:
        return np.arange(q)
    return np.sort(rng.choice(q, size=size, replace=False))


def initial_guess(kind, mesh, pattern=None, rng=None, value_range=(0.1, 10.0)):
    """
    Starting matrix for the inversion.

    'unit' is the FEM stiffness of the constant coefficient 1, 'random' the
    FEM stiffness of a coarse coefficient drawn from U(value_range).
    """
    if kind == 'unit':
        coefficient = assembly.constant_coefficient(mesh)
    elif kind == 'random':
        rng = rng if rng is not None else np.random.default_rng()
        lo, hi = value_range
        coefficient = assembly.Coefficient(mesh, rng.uniform(lo, hi, mesh.element_count))
    else:
        raise ConfigError(f"Unknown initial guess {kind!r}; expected 'unit' or 'random'")
    S0 = assembly.assemble_stiffness(mesh, coefficient)
    if pattern is not None:
        S0 = unpack(pattern, pack(pattern, S0))
    return S0


def _record(iteration, value, misfit_value, **extra):
    record = {'iteration': iteration, 'J': value, 'J_misfit': misfit_value}
    record.update(extra)
    return record


def _stagnated(values, window, tolerance):
    if len(values) <= window:
        return False
    old, new = values[-1 - window], values[-1]
    return old - new <= tolerance * abs(old)


def run_inversion(config, measurements, S0, pattern=None):
    """
    Gauss-Newton iteration from S0 within M(ell, T_H).

    Stops after max_iters, on relative stagnation over stall_window
    iterations, on a vanishing functional or gradient, or when the line
    search fails (recorded as 'stalled').
    """
    mesh = measurements.mesh
    pattern = pattern or build_pattern(mesh, config.ell)
    rng = np.random.default_rng(config.seed)

    s = pack(pattern, S0)
    S = unpack(pattern, s)
    model = EffectiveModel(S, mesh)
    misfit_value = model.functional(measurements)
    penalty, offset = _regularization(config, s)
    value = misfit_value + penalty

    trace = InversionTrace(ell=config.ell, matrix=S)
    trace.records.append(_record(0, value, misfit_value, step=None, gradient_norm=None, backtracks=0, subset=None))
    logger.info("ell=%d: initial J=%.6e (mu=%d, q=%d)", config.ell, value, pattern.size, measurements.q)

    status = 'max_iters'
    for iteration in range(1, config.max_iters + 1):
        if value <= 1e-24:
            status = 'converged'
            break

        full = Linearization(model, measurements, pattern)
        gradient = full.misfit_gradient() + config.gamma * offset
        gradient_norm = float(np.linalg.norm(gradient))
        if gradient_norm == 0.0:
            status = 'converged'
            break

        subset = None
        direction_lin = full
        if config.randomized:
            subset = randomized_subset(measurements, config.fraction, rng)
            if subset.size < measurements.q:
                direction_lin = Linearization(model, measurements.subset(subset), pattern)

        root = math.sqrt(direction_lin.scale)
        residual = root * direction_lin.residual.ravel()
        if direction_lin.dense_bytes <= config.jacobian_budget_bytes:
            J = root * direction_lin.dense()
            path = 'dense'
            normal_trace = float(np.sum(J * J))
        elif direction_lin.normal_bytes <= config.normal_budget_bytes:
            H = direction_lin.normal_matrix()
            H *= direction_lin.scale
            path = 'normal'
            normal_trace = float(np.trace(H))
        else:
            J = direction_lin.operator()
            path = 'matrix-free'
            normal_trace = direction_lin.scale * direction_lin.trace_normal()
        eta = config.eta if config.eta is not None else config.eta_relative * normal_trace / pattern.size

        if path == 'normal':
            g = direction_lin.scale * direction_lin.rmatvec(direction_lin.residual.ravel())
            direction = normal_step(H, g, eta, config.gamma, offset, overwrite=True)
        else:
            direction = gauss_newton_step(J, residual, eta, config.gamma, offset, config.lsqr_iter_lim)
        slope = float(gradient @ direction)
        if not slope < 0:
            logger.warning("ell=%d, iteration %d: step is not a descent direction, using -gradient", config.ell, iteration)
            direction = -gradient
            slope = -gradient_norm ** 2

        try:
            step, S, value, backtracks = line_search(
                S, direction, measurements, config.armijo, pattern, slope, value, config
            )
        except LineSearchFailed as e:
            logger.warning("ell=%d, iteration %d: %s", config.ell, iteration, e)
            trace.records[-1]['status'] = 'stalled'
            status = 'stalled'
            break

        model = EffectiveModel(S, mesh)
        s = pack(pattern, S)
        penalty, offset = _regularization(config, s)
        misfit_value = value - penalty
        trace.matrix = S
        trace.records.append(_record(
            iteration, value, misfit_value,
            step=step, gradient_norm=gradient_norm, backtracks=backtracks, eta=eta, path=path,
            subset=None if subset is None else subset.tolist(),
        ))
        logger.info("ell=%d, iteration %d: J=%.6e step=%.3e (%s)", config.ell, iteration, value, step, path)

        if _stagnated(trace.values, config.stall_window, config.stall_tolerance):
            status = 'stagnated'
            break

    trace.status = status
    logger.info("ell=%d: finished with J=%.6e (%s)", config.ell, trace.final_value, status)
    return trace
