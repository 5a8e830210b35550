"""Numba kernels for the QP solver's iteration loop.

The operator-splitting iteration is dominated by sparse matrix-vector
products and triangular solves with a cached Cholesky factor; doing them in
jitted loops keeps a warm mid-level solve well under the 2 ms budget.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_RUNNING = 0
STATUS_SOLVED = 1
STATUS_MAX_ITER = 2
STATUS_PRIMAL_INFEASIBLE = 3
STATUS_RHO_UPDATE = 4


@njit(cache=True)
def _inv3(a):
    out = np.empty((3, 3))
    det = (
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )
    inv_det = 1.0 / det
    out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) * inv_det
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) * inv_det
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) * inv_det
    out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) * inv_det
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) * inv_det
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) * inv_det
    out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) * inv_det
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) * inv_det
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) * inv_det
    return out


@njit(cache=True)
def _mm3(a, b):
    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for k in range(3):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


@njit(cache=True)
def _mv3(a, v):
    out = np.zeros(3)
    for i in range(3):
        acc = 0.0
        for k in range(3):
            acc += a[i, k] * v[k]
        out[i] = acc
    return out


@njit(cache=True)
def _skew(r):
    out = np.zeros((3, 3))
    out[0, 1] = -r[2]
    out[0, 2] = r[1]
    out[1, 0] = r[2]
    out[1, 2] = -r[0]
    out[2, 0] = -r[1]
    out[2, 1] = r[0]
    return out


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _euler_rotations(theta):
    """Rx, Ry, Rz and their angle derivatives for R = Rz Ry Rx."""
    cr, sr = np.cos(theta[0]), np.sin(theta[0])
    cp, sp = np.cos(theta[1]), np.sin(theta[1])
    cy, sy = np.cos(theta[2]), np.sin(theta[2])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    drx = np.array([[0.0, 0.0, 0.0], [0.0, -sr, -cr], [0.0, cr, -sr]])
    dry = np.array([[-sp, 0.0, cp], [0.0, 0.0, 0.0], [-cp, 0.0, -sp]])
    drz = np.array([[-sy, -cy, 0.0], [cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    return rx, ry, rz, drx, dry, drz


@njit(cache=True)
def plant_derivative(
    x,
    u,
    p_left,
    p_right,
    d_force,
    d_moment,
    mass,
    ib_diag,
    m_la,
    m_ra,
    r_la,
    r_ra,
    i_tr_z,
    grav,
    locked,
):
    """Nonlinear decomposed-plant derivative over the 19-entry state.

    Foot wrenches act at the foot points, arm forces act along body x with
    their pitch moment on the body and yaw moment on the torso coordinate,
    and the torso torque is an equal-and-opposite pair.  With ``locked`` the
    upper body is frozen and torso-frame disturbance moments pass to the
    body (a position-held joint transmits them).
    """
    theta = x[3:6]
    v = x[6:9]
    omega = x[9:12]
    rx, ry, rz, _, _, _ = _euler_rotations(theta)
    r = _mm3(rz, _mm3(ry, rx))

    ib = np.zeros((3, 3))
    for i in range(3):
        ib[i, i] = ib_diag[i]
    i_w = _mm3(r, _mm3(ib, r.T.copy()))

    f_l = u[0:3]
    m_l = u[3:6]
    f_r = u[6:9]
    m_r = u[9:12]
    tau_tr = u[12]
    f_la = u[13]
    f_ra = u[14]

    body_x = r[:, 0].copy()
    body_y = r[:, 1].copy()
    body_z = r[:, 2].copy()

    f_tot = f_l + f_r + d_force + (f_la + f_ra) * body_x
    m_tot = (
        _cross(p_left - x[0:3], f_l)
        + m_l
        + _cross(p_right - x[0:3], f_r)
        + m_r
    )
    # arm pitch moments and the arm-gravity coupling act about body y
    pitch_arm = r_la[2] * f_la + r_ra[2] * f_ra
    if not locked:
        pitch_arm += m_la * grav * x[14] + m_ra * grav * x[15]
    m_tot = m_tot + pitch_arm * body_y
    # torso actuator reaction on the lower body
    m_tot = m_tot - tau_tr * body_z
    m_tot = m_tot + d_moment
    dist_torso_z = 0.0
    if not locked:
        # torso-frame z disturbance spins the torso coordinate instead
        dist_torso_z = d_moment @ body_z
        m_tot = m_tot - dist_torso_z * body_z

    dx = np.zeros(19)
    dx[0:3] = v
    # inverse ZYX rate map
    cp_, sp_ = np.cos(theta[1]), np.sin(theta[1])
    cy_, sy_ = np.cos(theta[2]), np.sin(theta[2])
    inv_cp = 1.0 / cp_
    dx[3] = (cy_ * omega[0] + sy_ * omega[1]) * inv_cp
    dx[4] = -sy_ * omega[0] + cy_ * omega[1]
    dx[5] = (cy_ * sp_ * omega[0] + sy_ * sp_ * omega[1]) * inv_cp + omega[2]
    dx[6:9] = f_tot / mass
    dx[8] -= x[12]
    dx[9:12] = _mv3(_inv3(i_w), m_tot - _cross(omega, _mv3(i_w, omega)))
    # dx[12] = 0: gravity entry
    if not locked:
        dx[13] = x[16]
        dx[14] = x[17]
        dx[15] = x[18]
        dx[16] = (
            tau_tr - r_la[1] * f_la - r_ra[1] * f_ra + dist_torso_z
        ) / i_tr_z
        dx[17] = -f_la / m_la
        dx[18] = -f_ra / m_ra
    return dx


@njit(cache=True)
def plant_rk4(
    x,
    u,
    p_left,
    p_right,
    d_force,
    d_moment,
    dt,
    mass,
    ib_diag,
    m_la,
    m_ra,
    r_la,
    r_ra,
    i_tr_z,
    grav,
    locked,
):
    k1 = plant_derivative(
        x, u, p_left, p_right, d_force, d_moment, mass, ib_diag, m_la, m_ra, r_la, r_ra, i_tr_z, grav, locked
    )
    k2 = plant_derivative(
        x + 0.5 * dt * k1, u, p_left, p_right, d_force, d_moment, mass, ib_diag, m_la, m_ra, r_la, r_ra, i_tr_z, grav, locked
    )
    k3 = plant_derivative(
        x + 0.5 * dt * k2, u, p_left, p_right, d_force, d_moment, mass, ib_diag, m_la, m_ra, r_la, r_ra, i_tr_z, grav, locked
    )
    k4 = plant_derivative(
        x + dt * k3, u, p_left, p_right, d_force, d_moment, mass, ib_diag, m_la, m_ra, r_la, r_ra, i_tr_z, grav, locked
    )
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def srb_jacobians_core(theta, omega, p_com, p_stf, f_l, m_l, f_r, m_r, mass, ib_diag, ib_inp_diag):
    """Continuous Jacobians of the rigid-body dynamics; see the python wrapper."""
    cp_, sp_ = np.cos(theta[1]), np.sin(theta[1])
    cy_, sy_ = np.cos(theta[2]), np.sin(theta[2])
    rx, ry, rz, drx, dry, drz = _euler_rotations(theta)
    r = _mm3(rz, _mm3(ry, rx))

    ib = np.zeros((3, 3))
    ib_inp = np.zeros((3, 3))
    for i in range(3):
        ib[i, i] = ib_diag[i]
        ib_inp[i, i] = ib_inp_diag[i]
    i_w = _mm3(r, _mm3(ib, r.T.copy()))
    i_w_inv = _inv3(i_w)
    i_w_inp_inv = _inv3(_mm3(r, _mm3(ib_inp, r.T.copy())))

    # inverse ZYX rate map (pitch guarded by the caller)
    g_inv = np.empty((3, 3))
    inv_cp = 1.0 / cp_
    g_inv[0, 0] = cy_ * inv_cp
    g_inv[0, 1] = sy_ * inv_cp
    g_inv[0, 2] = 0.0
    g_inv[1, 0] = -sy_
    g_inv[1, 1] = cy_
    g_inv[1, 2] = 0.0
    g_inv[2, 0] = cy_ * sp_ * inv_cp
    g_inv[2, 1] = sy_ * sp_ * inv_cp
    g_inv[2, 2] = 1.0

    de_dth = np.zeros((3, 3))
    de_dth[0, 0] = -cy_ * sp_
    de_dth[1, 0] = -sy_ * sp_
    de_dth[2, 0] = -cp_
    de_dpsi = np.zeros((3, 3))
    de_dpsi[0, 0] = -sy_ * cp_
    de_dpsi[0, 1] = -cy_
    de_dpsi[1, 0] = cy_ * cp_
    de_dpsi[1, 1] = -sy_
    # rotation partials
    s_phi = _mm3(rz, _mm3(ry, drx))
    s_th = _mm3(rz, _mm3(dry, rx))
    s_psi = _mm3(drz, _mm3(ry, rx))

    lever = p_stf - p_com
    m_tot = _cross(lever, f_l) + m_l + _cross(lever, f_r) + m_r
    h = _mv3(i_w, omega)
    q = m_tot - _cross(omega, h)
    omega_dot = _mv3(i_w_inv, q)

    a = np.zeros((13, 13))
    b = np.zeros((13, 12))
    for i in range(3):
        a[i, 6 + i] = 1.0

    g_omega = _mv3(g_inv, omega)
    col_th = -_mv3(g_inv, _mv3(de_dth, g_omega))
    col_psi = -_mv3(g_inv, _mv3(de_dpsi, g_omega))
    for i in range(3):
        a[3 + i, 4] = col_th[i]
        a[3 + i, 5] = col_psi[i]
        for j in range(3):
            a[3 + i, 9 + j] = g_inv[i, j]

    inv_m = 1.0 / mass
    for i in range(3):
        b[6 + i, i] = inv_m
        b[6 + i, 6 + i] = inv_m
    a[8, 12] = -1.0

    wdw = _mm3(i_w_inv, _skew(h) - _mm3(_skew(omega), i_w))
    dfp = _mm3(i_w_inv, _skew(f_l) + _skew(f_r))
    for i in range(3):
        for j in range(3):
            a[9 + i, 9 + j] = wdw[i, j]
            a[9 + i, j] = dfp[i, j]
    rot_partials = (s_phi, s_th, s_psi)
    for jth in range(3):
        s_j = rot_partials[jth]
        w_j = _mm3(s_j, _mm3(ib, r.T.copy())) + _mm3(r, _mm3(ib, s_j.T.copy()))
        col = -_mv3(i_w_inv, _mv3(w_j, omega_dot) + _cross(omega, _mv3(w_j, omega)))
        for i in range(3):
            a[9 + i, 3 + jth] = col[i]

    lever_sk = _skew(lever)
    moment_map = _mm3(i_w_inp_inv, lever_sk)
    for col0 in (0, 6):
        for i in range(3):
            for j in range(3):
                b[9 + i, col0 + j] = moment_map[i, j]
                b[9 + i, col0 + 3 + j] = i_w_inp_inv[i, j]
    return a, b


@njit(cache=True)
def csr_matvec(data, indices, indptr, x, out):
    for i in range(out.shape[0]):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


@njit(cache=True)
def build_banded_normal(a_data, a_indices, a_indptr, rho, p_diag, sigma, bw, n, m):
    """ab[i, j] = (P + sigma I + A' rho A)[j+i, j] for diagonal P, banded result."""
    ab = np.zeros((bw + 1, n))
    for j in range(n):
        ab[0, j] = p_diag[j] + sigma
    for i in range(m):
        r = rho[i]
        start, end = a_indptr[i], a_indptr[i + 1]
        for ka in range(start, end):
            ca = a_indices[ka]
            va = r * a_data[ka]
            for kb in range(start, end):
                cb = a_indices[kb]
                if cb <= ca:
                    ab[ca - cb, cb] += va * a_data[kb]
    return ab


@njit(cache=True)
def dense_chol_solve(l_fac, b, work):
    n = b.shape[0]
    for j in range(n):
        acc = b[j]
        for i in range(j):
            acc -= l_fac[j, i] * work[i]
        work[j] = acc / l_fac[j, j]
    for j in range(n - 1, -1, -1):
        acc = work[j]
        for i in range(j + 1, n):
            acc -= l_fac[i, j] * b[i]
        b[j] = acc / l_fac[j, j]


@njit(cache=True)
def banded_chol_solve(cb, b, work):
    """Solve L L^T x = b with L in LAPACK lower-banded layout cb[i, j] = L[j+i, j]."""
    n = b.shape[0]
    w = cb.shape[0] - 1
    for j in range(n):
        acc = b[j]
        lo = j - w if j - w > 0 else 0
        for i in range(lo, j):
            acc -= cb[j - i, i] * work[i]
        work[j] = acc / cb[0, j]
    for j in range(n - 1, -1, -1):
        acc = work[j]
        hi = j + w if j + w < n - 1 else n - 1
        for k in range(j + 1, hi + 1):
            acc -= cb[k - j, j] * b[k]
        b[j] = acc / cb[0, j]


@njit(cache=True)
def admm_run(
    l_fac,
    banded,
    a_data,
    a_indices,
    a_indptr,
    at_data,
    at_indices,
    at_indptr,
    p_data,
    p_indices,
    p_indptr,
    q,
    lower,
    upper,
    rho,
    rho_inv,
    sigma,
    alpha,
    eps_abs,
    eps_rel,
    max_iter,
    check_interval,
    adaptive_rho,
    x,
    z,
    y,
    start_iter,
):
    """Run ADMM iterations in place; returns (status, iterations, r_prim, r_dual).

    ``x`` is the primal iterate, ``z`` the constraint-space copy, ``y`` the
    dual.  Exits early with STATUS_RHO_UPDATE when the caller should rescale
    rho and refactor.
    """
    n = x.shape[0]
    m = z.shape[0]
    rhs = np.empty(n)
    work = np.empty(n)
    ax = np.empty(m)
    atv = np.empty(n)
    px = np.empty(n)
    zt = np.empty(m)
    tmp_m = np.empty(m)
    dy = np.empty(m)
    y_prev = y.copy()

    it = start_iter
    while it < max_iter:
        it += 1
        # x-update: (P + sigma I + A' rho A) xt = sigma x - q + A'(rho z - y)
        for i in range(m):
            tmp_m[i] = rho[i] * z[i] - y[i]
        csr_matvec(at_data, at_indices, at_indptr, tmp_m, atv)
        for i in range(n):
            rhs[i] = sigma * x[i] - q[i] + atv[i]
        if banded:
            banded_chol_solve(l_fac, rhs, work)
        else:
            dense_chol_solve(l_fac, rhs, work)
        # rhs now holds xt
        csr_matvec(a_data, a_indices, a_indptr, rhs, zt)
        for i in range(n):
            x[i] = alpha * rhs[i] + (1.0 - alpha) * x[i]
        for i in range(m):
            v = alpha * zt[i] + (1.0 - alpha) * z[i]
            znew = v + rho_inv[i] * y[i]
            if znew < lower[i]:
                znew = lower[i]
            elif znew > upper[i]:
                znew = upper[i]
            y[i] = y[i] + rho[i] * (v - znew)
            z[i] = znew

        if it % check_interval == 0 or it == max_iter:
            csr_matvec(a_data, a_indices, a_indptr, x, ax)
            csr_matvec(p_data, p_indices, p_indptr, x, px)
            csr_matvec(at_data, at_indices, at_indptr, y, atv)
            r_prim = 0.0
            norm_ax = 0.0
            norm_z = 0.0
            for i in range(m):
                e = abs(ax[i] - z[i])
                if e > r_prim:
                    r_prim = e
                if abs(ax[i]) > norm_ax:
                    norm_ax = abs(ax[i])
                if abs(z[i]) > norm_z:
                    norm_z = abs(z[i])
            r_dual = 0.0
            norm_px = 0.0
            norm_aty = 0.0
            norm_q = 0.0
            for i in range(n):
                e = abs(px[i] + q[i] + atv[i])
                if e > r_dual:
                    r_dual = e
                if abs(px[i]) > norm_px:
                    norm_px = abs(px[i])
                if abs(atv[i]) > norm_aty:
                    norm_aty = abs(atv[i])
                if abs(q[i]) > norm_q:
                    norm_q = abs(q[i])
            scale_p = norm_ax if norm_ax > norm_z else norm_z
            scale_d = norm_px
            if norm_aty > scale_d:
                scale_d = norm_aty
            if norm_q > scale_d:
                scale_d = norm_q
            eps_p = eps_abs + eps_rel * scale_p
            eps_d = eps_abs + eps_rel * scale_d
            if r_prim <= eps_p and r_dual <= eps_d:
                return STATUS_SOLVED, it, r_prim, r_dual

            # primal infeasibility certificate from the dual increment
            norm_dy = 0.0
            for i in range(m):
                dy[i] = y[i] - y_prev[i]
                if abs(dy[i]) > norm_dy:
                    norm_dy = abs(dy[i])
            if norm_dy > 1e-12:
                csr_matvec(at_data, at_indices, at_indptr, dy, atv)
                at_dy = 0.0
                for i in range(n):
                    if abs(atv[i]) > at_dy:
                        at_dy = abs(atv[i])
                support = 0.0
                unbounded = False
                for i in range(m):
                    if dy[i] > 0.0:
                        if np.isinf(upper[i]):
                            unbounded = True
                            break
                        support += upper[i] * dy[i]
                    elif dy[i] < 0.0:
                        if np.isinf(lower[i]):
                            unbounded = True
                            break
                        support += lower[i] * dy[i]
                tol_inf = 1e-8 * norm_dy
                if (not unbounded) and at_dy <= tol_inf and support <= -tol_inf:
                    return STATUS_PRIMAL_INFEASIBLE, it, r_prim, r_dual
            for i in range(m):
                y_prev[i] = y[i]

            if adaptive_rho and it < max_iter:
                denom_p = scale_p if scale_p > 1e-12 else 1e-12
                denom_d = scale_d if scale_d > 1e-12 else 1e-12
                rel_p = r_prim / denom_p
                rel_d = r_dual / denom_d
                if rel_d > 1e-14:
                    ratio = np.sqrt(rel_p / rel_d)
                    if ratio > 5.0 or ratio < 0.2:
                        return STATUS_RHO_UPDATE, it, ratio, 0.0

    csr_matvec(a_data, a_indices, a_indptr, x, ax)
    csr_matvec(p_data, p_indices, p_indptr, x, px)
    csr_matvec(at_data, at_indices, at_indptr, y, atv)
    r_prim = 0.0
    for i in range(m):
        e = abs(ax[i] - z[i])
        if e > r_prim:
            r_prim = e
    r_dual = 0.0
    for i in range(n):
        e = abs(px[i] + q[i] + atv[i])
        if e > r_dual:
            r_dual = e
    return STATUS_MAX_ITER, max_iter, r_prim, r_dual
