"""Dense convex QP solver: operator splitting with warm starts.

Solves  min 0.5 z' P z + q' z  s.t.  lower <= A z <= upper  with an ADMM
iteration in the OSQP family: one linear system with a cached Cholesky
factor per iteration, projection onto the box, and a dual update.  Warm
starting across the 500 Hz re-solve path is the point of the design; vector
updates keep the factorization.

The problem is Ruiz-equilibrated once at setup; convergence is checked on
the *unscaled* KKT residuals.  When the normal matrix is structurally
banded (as in the multiple-shooting MPC ordering), a banded Cholesky is
used automatically.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cholesky_banded

from . import _kernels as k

RHO_EQ_FACTOR = 1e3
RHO_MIN, RHO_MAX = 1e-6, 1e6
RUIZ_ITERATIONS = 10


class QpDimensionError(ValueError):
    """Problem pieces do not agree in shape."""


@dataclass
class QpProblem:
    p_mat: np.ndarray      # n x n symmetric PSD cost matrix
    q_vec: np.ndarray      # n linear cost
    a_mat: np.ndarray      # m x n constraint matrix
    lower: np.ndarray      # m lower bounds (equalities: lower == upper)
    upper: np.ndarray      # m upper bounds
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        self.p_mat = np.asarray(self.p_mat, dtype=float)
        self.q_vec = np.asarray(self.q_vec, dtype=float)
        self.a_mat = np.asarray(self.a_mat, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not validate:
            return
        n = self.q_vec.shape[0]
        if self.p_mat.shape != (n, n):
            raise QpDimensionError(f"P is {self.p_mat.shape}, expected {(n, n)}")
        m = self.a_mat.shape[0] if self.a_mat.size else self.lower.shape[0]
        if self.a_mat.size and self.a_mat.shape != (m, n):
            raise QpDimensionError(f"A is {self.a_mat.shape}, expected {(m, n)}")
        if self.lower.shape != (m,) or self.upper.shape != (m,):
            raise QpDimensionError("bound vectors do not match the constraint count")
        if np.abs(self.p_mat - self.p_mat.T).max(initial=0.0) > 1e-12:
            raise ValueError("cost matrix must be symmetric")
        if not np.all(np.isfinite(self.q_vec)):
            raise ValueError("linear cost must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")

    @property
    def n(self) -> int:
        return self.q_vec.shape[0]

    @property
    def m(self) -> int:
        return self.lower.shape[0]

    def objective(self, z: np.ndarray) -> float:
        return float(0.5 * z @ self.p_mat @ z + self.q_vec @ z)


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 4000
    adaptive_rho: bool = True
    check_interval: int = 25
    polish: bool = True
    loose_factor: float = 100.0  # pre-polish ADMM tolerance multiplier

    def __post_init__(self) -> None:
        if self.rho <= 0.0 or self.sigma <= 0.0:
            raise ValueError("rho and sigma must be positive")
        if not 0.0 < self.alpha < 2.0:
            raise ValueError("relaxation alpha must lie in (0, 2)")


@dataclass
class QpSolution:
    z: np.ndarray          # primal
    y: np.ndarray          # dual
    status: str            # "solved" | "max-iter" | "primal-infeasible"
    iterations: int
    primal_res: float
    dual_res: float


def _ruiz_equilibrate(p, a, q, lower, upper):
    """Symmetric Ruiz scaling of the stacked KKT data; returns scaled copies."""
    n = q.shape[0]
    m = lower.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    p = p.copy()
    a = a.copy()
    q = q.copy()
    lower = lower.copy()
    upper = upper.copy()
    for _ in range(RUIZ_ITERATIONS):
        col_norm_p = np.abs(p).max(axis=0, initial=0.0) if p.size else np.zeros(n)
        col_norm_a = np.abs(a).max(axis=0, initial=0.0) if a.size else np.zeros(n)
        col = np.maximum(col_norm_p, col_norm_a)
        delta = 1.0 / np.sqrt(np.where(col > 1e-12, col, 1.0))
        row = np.abs(a).max(axis=1, initial=0.0) if a.size else np.zeros(m)
        eps_row = 1.0 / np.sqrt(np.where(row > 1e-12, row, 1.0))
        p = delta[:, None] * p * delta[None, :]
        q = delta * q
        if a.size:
            a = eps_row[:, None] * a * delta[None, :]
        with np.errstate(invalid="ignore"):
            lower = eps_row * lower
            upper = eps_row * upper
        lower = np.where(np.isnan(lower), -np.inf, lower)
        upper = np.where(np.isnan(upper), np.inf, upper)
        d *= delta
        e *= eps_row
    return p, a, q, lower, upper, d, e


class _CoreSolver:
    """Operator-splitting iteration over one (possibly reduced) problem."""

    def __init__(
        self,
        problem: QpProblem,
        settings: QpSettings | None = None,
        scaling: tuple[np.ndarray, np.ndarray] | None = None,
        bandwidth: int | None = None,
        rho_init: float | None = None,
    ):
        self.problem = problem
        self.settings = settings or QpSettings()
        self._eq_mask = (problem.upper - problem.lower) <= 1e-12
        self._rho_bar = rho_init if rho_init is not None else self.settings.rho
        self._bandwidth_hint = bandwidth
        self._setup_scaling(scaling)
        self._build_rho()
        self._factor()

    @property
    def rho_bar(self) -> float:
        return self._rho_bar

    # -- setup ---------------------------------------------------------------

    def _setup_scaling(self, scaling) -> None:
        pr = self.problem
        a = pr.a_mat if pr.a_mat.size else np.zeros((pr.m, pr.n))
        if scaling is None:
            p_s, a_s, q_s, l_s, u_s, d, e = _ruiz_equilibrate(
                pr.p_mat, a, pr.q_vec, pr.lower, pr.upper
            )
        else:
            # reuse a previously computed equilibration (re-solve fast path)
            d, e = scaling
            p_s = d[:, None] * pr.p_mat * d[None, :]
            a_s = e[:, None] * a * d[None, :]
            q_s = d * pr.q_vec
            with np.errstate(invalid="ignore"):
                l_s = np.where(np.isinf(pr.lower), pr.lower, e * pr.lower)
                u_s = np.where(np.isinf(pr.upper), pr.upper, e * pr.upper)
        self._d = d
        self._e = e
        self._q = q_s
        self._lower = l_s
        self._upper = u_s
        self._p_csr = sp.csr_matrix(p_s)
        self._a_csr = sp.csr_matrix(a_s)
        self._at_csr = sp.csr_matrix(a_s.T)
        # diagonal-P fast path feeds the banded normal-matrix kernel
        self._p_diag = None
        if self._p_csr.nnz <= pr.n:
            counts = np.diff(self._p_csr.indptr)
            rows = np.repeat(np.arange(pr.n), counts)
            if np.array_equal(self._p_csr.indices, rows):
                diag = np.zeros(pr.n)
                diag[rows] = self._p_csr.data
                self._p_diag = diag

    @property
    def scaling(self) -> tuple[np.ndarray, np.ndarray]:
        return self._d, self._e

    def _build_rho(self) -> None:
        rho = np.full(self.problem.m, self._rho_bar)
        rho[self._eq_mask] *= RHO_EQ_FACTOR
        self._rho = rho
        self._rho_inv = 1.0 / rho if rho.size else rho

    def _factor(self) -> None:
        n = self.problem.n
        m = self.problem.m
        if self._bandwidth_hint is None:
            if self._a_csr.nnz:
                rows = np.repeat(np.arange(m), np.diff(self._a_csr.indptr))
                spans = np.zeros(0)
                if rows.size:
                    col = self._a_csr.indices
                    span_max = np.full(m, -1)
                    span_min = np.full(m, n)
                    np.maximum.at(span_max, rows, col)
                    np.minimum.at(span_min, rows, col)
                    spans = span_max - span_min
                bw = int(spans.max(initial=0))
            else:
                bw = 0
            self._bandwidth_hint = bw
        bw = self._bandwidth_hint
        use_banded = self._p_diag is not None and 0 < bw < n // 3 and n > 60
        if use_banded:
            ab = k.build_banded_normal(
                self._a_csr.data,
                self._a_csr.indices,
                self._a_csr.indptr,
                self._rho,
                self._p_diag,
                self.settings.sigma,
                bw,
                n,
                m,
            )
            self._l_fac = cholesky_banded(ab, lower=True)
            self._banded = True
            return
        if self._a_csr.nnz:
            ata = (self._a_csr.multiply(self._rho[:, None])).T @ self._a_csr
            m_mat = (self._p_csr + ata).toarray()
        else:
            m_mat = self._p_csr.toarray()
        m_mat[np.diag_indices(n)] += self.settings.sigma
        self._l_fac = np.linalg.cholesky(m_mat)
        self._banded = False

    # -- updates -------------------------------------------------------------

    def update_vectors(
        self, q_vec: np.ndarray, lower: np.ndarray, upper: np.ndarray
    ) -> None:
        """Swap the linear cost and bounds; the matrix factorization is kept."""
        pr = self.problem
        q_vec = np.asarray(q_vec, dtype=float)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if q_vec.shape != (pr.n,) or lower.shape != (pr.m,) or upper.shape != (pr.m,):
            raise QpDimensionError("vector update changes problem dimensions")
        if np.any(lower > upper):
            raise ValueError("lower bounds exceed upper bounds")
        pr.q_vec = q_vec
        pr.lower = lower
        pr.upper = upper
        self._q = self._d * q_vec
        with np.errstate(invalid="ignore"):
            self._lower = np.where(np.isinf(lower), lower, self._e * lower)
            self._upper = np.where(np.isinf(upper), upper, self._e * upper)
        eq_mask = (upper - lower) <= 1e-12
        if not np.array_equal(eq_mask, self._eq_mask):
            self._eq_mask = eq_mask
            self._build_rho()
            self._factor()

    # -- solve ---------------------------------------------------------------

    def _unscaled_residuals(self, x, z, y):
        # unscale through the cached equilibration instead of the dense data
        pr = self.problem
        e_inv = 1.0 / self._e if self._e.size else self._e
        d_inv = 1.0 / self._d
        az = e_inv * (self._a_csr @ x) if pr.m else np.zeros(0)
        zz = e_inv * z if pr.m else np.zeros(0)
        r_prim = np.abs(az - zz).max(initial=0.0)
        px = d_inv * (self._p_csr @ x)
        aty = d_inv * (self._at_csr @ y) if pr.m else np.zeros(pr.n)
        dual = px + pr.q_vec + aty
        r_dual = np.abs(dual).max(initial=0.0)
        scale_p = max(np.abs(az).max(initial=0.0), np.abs(zz).max(initial=0.0))
        scale_d = max(
            np.abs(px).max(initial=0.0),
            np.abs(aty).max(initial=0.0),
            np.abs(pr.q_vec).max(initial=0.0),
        )
        return r_prim, r_dual, scale_p, scale_d

    def solve(self, warm: tuple[np.ndarray, np.ndarray] | None = None) -> QpSolution:
        pr = self.problem
        st = self.settings
        n, m = pr.n, pr.m
        if warm is not None:
            z_w, y_w = warm
            if np.asarray(z_w).shape != (n,) or np.asarray(y_w).shape != (m,):
                raise QpDimensionError("warm start dimensions do not match")
            x = np.asarray(z_w, dtype=float) / self._d
            y = np.asarray(y_w, dtype=float) / self._e
            z = np.clip(self._a_csr @ x if m else np.zeros(0), self._lower, self._upper)
            r_prim, r_dual, scale_p, scale_d = self._unscaled_residuals(x, z, y)
            if r_prim <= st.eps_abs + st.eps_rel * scale_p and r_dual <= (
                st.eps_abs + st.eps_rel * scale_d
            ):
                return QpSolution(
                    z=self._d * x,
                    y=self._e * y,
                    status="solved",
                    iterations=0,
                    primal_res=r_prim,
                    dual_res=r_dual,
                )
        else:
            x = np.zeros(n)
            y = np.zeros(m)
            z = np.zeros(m)

        iterations = 0
        status_str = "max-iter"
        r_prim_u = r_dual_u = np.inf
        eps_factor = st.loose_factor if st.polish else 1.0
        adaptive = st.adaptive_rho
        while True:
            res = k.admm_run(
                self._l_fac,
                self._banded,
                self._a_csr.data,
                self._a_csr.indices,
                self._a_csr.indptr,
                self._at_csr.data,
                self._at_csr.indices,
                self._at_csr.indptr,
                self._p_csr.data,
                self._p_csr.indices,
                self._p_csr.indptr,
                self._q,
                self._lower,
                self._upper,
                self._rho,
                self._rho_inv,
                st.sigma,
                st.alpha,
                st.eps_abs * eps_factor,
                st.eps_rel * eps_factor,
                st.max_iter,
                st.check_interval,
                adaptive,
                x,
                z,
                y,
                iterations,
            )
            code, iterations, r1, _ = res
            if code == k.STATUS_RHO_UPDATE:
                self._rho_bar = float(np.clip(self._rho_bar * r1, RHO_MIN, RHO_MAX))
                self._build_rho()
                self._factor()
                continue
            if code == k.STATUS_PRIMAL_INFEASIBLE:
                r_prim_u, r_dual_u, _, _ = self._unscaled_residuals(x, z, y)
                status_str = "primal-infeasible"
                break
            if st.polish:
                polished = self._polish(x, z, y)
                if polished is not None:
                    xp, zp, yp, rp, rd = polished
                    return QpSolution(
                        z=self._d * xp,
                        y=self._e * yp,
                        status="solved",
                        iterations=iterations,
                        primal_res=rp,
                        dual_res=rd,
                    )
            r_prim_u, r_dual_u, scale_p, scale_d = self._unscaled_residuals(x, z, y)
            if r_prim_u <= st.eps_abs + st.eps_rel * scale_p and r_dual_u <= (
                st.eps_abs + st.eps_rel * scale_d
            ):
                status_str = "solved"
                break
            if code == k.STATUS_MAX_ITER or iterations >= st.max_iter:
                status_str = "max-iter"
                break
            if eps_factor <= 1e-8:
                status_str = "max-iter"
                break
            eps_factor *= 1e-2
            adaptive = False

        return QpSolution(
            z=self._d * x,
            y=self._e * y,
            status=status_str,
            iterations=iterations,
            primal_res=r_prim_u,
            dual_res=r_dual_u,
        )

    def _polish(self, x, z, y):
        """Exact solve on the detected active set; returns None if not accepted.

        Equality rows and rows whose dual points at a bound form the active
        set; the reduced KKT system is solved with light regularization and
        two rounds of iterative refinement.
        """
        st = self.settings
        pr = self.problem
        n, m = pr.n, pr.m
        act_low = (y < -1e-12) & ~self._eq_mask
        act_up = (y > 1e-12) & ~self._eq_mask
        act = act_low | act_up | self._eq_mask
        na = int(act.sum())
        a_act = self._a_csr[act].toarray() if na else np.zeros((0, n))
        b_act = np.where(act_up[act], self._upper[act], self._lower[act])
        if na and not np.all(np.isfinite(b_act)):
            return None
        delta = 1e-9
        kkt = np.zeros((n + na, n + na))
        p_dense = self._p_csr.toarray()
        kkt[:n, :n] = p_dense + delta * np.eye(n)
        if na:
            kkt[:n, n:] = a_act.T
            kkt[n:, :n] = a_act
            kkt[n:, n:] = -delta * np.eye(na)
        rhs = np.concatenate([-self._q, b_act])
        try:
            lu = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        # iterative refinement against the unregularized system
        for _ in range(2):
            res_top = -self._q - p_dense @ lu[:n]
            if na:
                res_top -= a_act.T @ lu[n:]
                res_bot = b_act - a_act @ lu[:n]
                resid = np.concatenate([res_top, res_bot])
            else:
                resid = res_top
            try:
                lu = lu + np.linalg.solve(kkt, resid)
            except np.linalg.LinAlgError:
                break
        xp = lu[:n]
        yp = np.zeros(m)
        if na:
            yp[np.nonzero(act)[0]] = lu[n:]
        zp = np.clip(self._a_csr @ xp if m else np.zeros(0), self._lower, self._upper)
        rp, rd, scale_p, scale_d = self._unscaled_residuals(xp, zp, yp)
        if rp <= st.eps_abs + st.eps_rel * scale_p and rd <= st.eps_abs + st.eps_rel * scale_d:
            return xp, zp, yp, rp, rd
        return None


class _Presolve:
    """Eliminates variables pinned by single-variable equality rows.

    Swing-foot wrench equalities and period variables with collapsed bounds
    fall out here, shrinking the iteration workspace without changing the
    problem.  Conflicting pins surface as primal infeasibility.
    """

    def __init__(self, problem: QpProblem):
        a = problem.a_mat
        m, n = problem.m, problem.n
        self.active = False
        self.infeasible = False
        if m == 0 or not a.size:
            return
        eq = (problem.upper - problem.lower) <= 1e-12
        nnz_per_row = np.count_nonzero(a, axis=1)
        single = np.nonzero(eq & (nnz_per_row == 1))[0]
        if single.size == 0:
            return
        pin_col = np.argmax(a[single] != 0.0, axis=1)
        fixed_mask = np.zeros(n, dtype=bool)
        fix_row_of = np.full(n, -1, dtype=int)
        fix_coef = np.ones(n)
        fixing_rows = np.zeros(m, dtype=bool)
        for r, j in zip(single, pin_col):
            if fixed_mask[j]:
                continue  # later duplicate pins are checked as ordinary rows
            fixed_mask[j] = True
            fix_row_of[j] = r
            fix_coef[j] = a[r, j]
            fixing_rows[r] = True
        self.active = True
        self.fixed_mask = fixed_mask
        self.free_idx = np.nonzero(~fixed_mask)[0]
        self.fixed_idx = np.nonzero(fixed_mask)[0]
        self.fix_row_of = fix_row_of
        self.fix_coef = fix_coef
        fixed_vals = np.zeros(n)
        fixed_vals[self.fixed_idx] = (
            problem.lower[fix_row_of[self.fixed_idx]] / fix_coef[self.fixed_idx]
        )
        self.fixed_vals = fixed_vals
        keep = ~fixing_rows
        a_keep = a[keep]
        self._a_keep_fixed = a_keep[:, fixed_mask]
        shift = self._a_keep_fixed @ fixed_vals[fixed_mask]
        a_red = a_keep[:, ~fixed_mask]
        lower = problem.lower[keep] - shift
        upper = problem.upper[keep] - shift
        nonempty = np.count_nonzero(a_red, axis=1) > 0
        self._nonempty = nonempty
        if np.any(~nonempty):
            bad = (~nonempty) & ((lower > 1e-9) | (upper < -1e-9))
            if np.any(bad):
                self.infeasible = True
            a_red = a_red[nonempty]
            lower = lower[nonempty]
            upper = upper[nonempty]
        self._keep_rows = np.nonzero(keep)[0]
        self.keep_idx = self._keep_rows[nonempty]
        self._p_free_fixed = problem.p_mat[np.ix_(self.free_idx, self.fixed_idx)]
        p_red = problem.p_mat[np.ix_(self.free_idx, self.free_idx)]
        q_red = problem.q_vec[self.free_idx] + self._p_free_fixed @ fixed_vals[fixed_mask]
        self.reduced = QpProblem(p_red, q_red, a_red, lower, upper, validate=False)

    def refresh_values(self, problem: QpProblem) -> None:
        """Recompute the reduced vectors assuming an unchanged pin pattern."""
        vals = problem.lower[self.fix_row_of[self.fixed_idx]] / self.fix_coef[self.fixed_idx]
        self.fixed_vals[self.fixed_idx] = vals
        shift = self._a_keep_fixed @ vals
        lower = problem.lower[self._keep_rows] - shift
        upper = problem.upper[self._keep_rows] - shift
        red = self.reduced
        red.q_vec = problem.q_vec[self.free_idx] + self._p_free_fixed @ vals
        red.lower = lower[self._nonempty]
        red.upper = upper[self._nonempty]

    def reduce_warm(self, z: np.ndarray, y: np.ndarray):
        return z[self.free_idx], y[self.keep_idx]

    def expand(self, problem: QpProblem, sol: QpSolution) -> QpSolution:
        n, m = problem.n, problem.m
        z = self.fixed_vals.copy()
        z[self.free_idx] = sol.z
        y = np.zeros(m)
        y[self.keep_idx] = sol.y
        # duals of the fixing rows from stationarity of their pinned columns
        resid = problem.p_mat @ z + problem.q_vec + problem.a_mat.T @ y
        for j in np.nonzero(self.fixed_mask)[0]:
            r = self.fix_row_of[j]
            y[r] = -resid[j] / problem.a_mat[r, j]
        return QpSolution(
            z=z,
            y=y,
            status=sol.status,
            iterations=sol.iterations,
            primal_res=sol.primal_res,
            dual_res=sol.dual_res,
        )


class QpSolver:
    """Single-user solver instance owning a mutable workspace.

    Distinct instances are independent; an instance may be moved between
    threads but not shared.  ``scaling``, ``bandwidth``, and ``rho_init``
    let a re-solve loop skip re-equilibration.
    """

    def __init__(
        self,
        problem: QpProblem,
        settings: QpSettings | None = None,
        scaling: tuple[np.ndarray, np.ndarray] | None = None,
        bandwidth: int | None = None,
        rho_init: float | None = None,
        presolve: bool = True,
    ):
        self.problem = problem
        self.settings = settings or QpSettings()
        self._pre = _Presolve(problem) if presolve else None
        if self._pre is not None and not self._pre.active:
            self._pre = None
        work = self._pre.reduced if self._pre is not None else problem
        self._core = _CoreSolver(
            work,
            self.settings,
            scaling=scaling,
            bandwidth=bandwidth,
            rho_init=rho_init,
        )

    @property
    def scaling(self) -> tuple[np.ndarray, np.ndarray]:
        return self._core.scaling

    @property
    def rho_bar(self) -> float:
        return self._core.rho_bar

    def solve(self, warm: tuple[np.ndarray, np.ndarray] | None = None) -> QpSolution:
        if self._pre is None:
            return self._core.solve(warm=warm)
        if self._pre.infeasible:
            return QpSolution(
                z=self._pre.fixed_vals.copy(),
                y=np.zeros(self.problem.m),
                status="primal-infeasible",
                iterations=0,
                primal_res=np.inf,
                dual_res=np.inf,
            )
        if warm is not None:
            z_w, y_w = warm
            if (
                np.asarray(z_w).shape != (self.problem.n,)
                or np.asarray(y_w).shape != (self.problem.m,)
            ):
                raise QpDimensionError("warm start dimensions do not match")
            warm = self._pre.reduce_warm(np.asarray(z_w, dtype=float), np.asarray(y_w, dtype=float))
        sol = self._core.solve(warm=warm)
        return self._pre.expand(self.problem, sol)

    def update_vectors(
        self,
        q_vec: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        assume_same_pattern: bool = False,
    ) -> None:
        """Swap the linear cost and bounds; the factorization is kept when the
        set of pinned variables is unchanged.

        ``assume_same_pattern`` skips re-detecting pinned variables; use it on
        re-solve loops where only values move (the caller guarantees the same
        rows stay single-variable equalities).
        """
        pr = self.problem
        q_vec = np.asarray(q_vec, dtype=float)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if q_vec.shape != (pr.n,) or lower.shape != (pr.m,) or upper.shape != (pr.m,):
            raise QpDimensionError("vector update changes problem dimensions")
        if np.any(lower > upper):
            raise ValueError("lower bounds exceed upper bounds")
        pr.q_vec = q_vec
        pr.lower = lower
        pr.upper = upper
        if assume_same_pattern:
            if self._pre is None:
                self._core.update_vectors(q_vec, lower, upper)
            else:
                self._pre.refresh_values(pr)
                red = self._pre.reduced
                self._core.update_vectors(red.q_vec, red.lower, red.upper)
            return
        new_pre = _Presolve(pr)
        if not new_pre.active:
            if self._pre is None:
                self._core.update_vectors(q_vec, lower, upper)
            else:
                self._pre = None
                self._core = _CoreSolver(pr, self.settings)
            return
        same_pattern = (
            self._pre is not None
            and np.array_equal(new_pre.fixed_mask, self._pre.fixed_mask)
            and np.array_equal(new_pre.keep_idx, self._pre.keep_idx)
        )
        self._pre = new_pre
        if same_pattern:
            red = new_pre.reduced
            self._core.update_vectors(red.q_vec, red.lower, red.upper)
        else:
            self._core = _CoreSolver(new_pre.reduced, self.settings)


def qp_solve(
    problem: QpProblem,
    settings: QpSettings | None = None,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
) -> QpSolution:
    """One-shot solve; build a QpSolver directly to reuse the factorization."""
    return QpSolver(problem, settings).solve(warm=warm)


def qp_update_vectors(
    problem: QpProblem,
    new_q: np.ndarray,
    new_lower: np.ndarray,
    new_upper: np.ndarray,
) -> QpProblem:
    """Value-level vector swap with the same dimension checks as the solver."""
    new_q = np.asarray(new_q, dtype=float)
    new_lower = np.asarray(new_lower, dtype=float)
    new_upper = np.asarray(new_upper, dtype=float)
    if new_q.shape != (problem.n,) or new_lower.shape != (problem.m,) or new_upper.shape != (problem.m,):
        raise QpDimensionError("vector update changes problem dimensions")
    return QpProblem(
        p_mat=problem.p_mat,
        q_vec=new_q,
        a_mat=problem.a_mat,
        lower=new_lower,
        upper=new_upper,
    )
