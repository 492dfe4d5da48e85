"""Numba kernels for the simulation hot path.

State vector layout (16,):
  [0:3]   position in Hill frame [m]
  [3:6]   velocity in Hill frame [m/s]
  [6:10]  attitude quaternion body->Hill, scalar last
  [10:13] body angular rate [rad/s]
  [13]    battery energy [J]
  [14]    node temperature [degC]
  [15]    sun angle in the Hill x-y plane [rad]

Physical constants arrive packed by ``PhysicalConstants.pack()``; constraint
parameters by ``pack_constraint_params()``.  The public modules wrap these
kernels with typed dataclasses; everything here is float64 arrays so the
episode loop stays allocation-light under a single-core budget.

Constraint row layout for an agent with k neighbours (M = 13 + k rows
counting each box axis separately):
  0            chief keep-out
  1 .. k       deputy keep-out, one per neighbour
  k+1          speed limit
  k+2          proximity keep-in
  k+3          free-drift (passive-maneuver) keep-out
  k+4 .. k+6   translational velocity boxes (x, y, z)
  k+7          sun exclusion zone (second order)
  k+8          node temperature (second order)
  k+9          battery energy (second order)
  k+10 .. k+12 angular velocity boxes

Rows 0..k are hard (no slack); the remaining 12 rows each carry one slack
variable.  Sun angle is treated as a frozen parameter inside the constraint
model (quasi-static sun); the simulation itself integrates it.
"""

import numpy as np
from numba import njit

# Indices into the packed physical-constants vector.
CP_M = 0
CP_N = 1
CP_FMAX = 2
CP_J1 = 3
CP_J2 = 4
CP_J3 = 5
CP_TAUMAX = 6
CP_SOLAR = 7
CP_ALBEDO = 8
CP_SIGMA = 9
CP_TEARTH = 10
CP_MNODE = 11
CP_ANODE = 12
CP_CHEAT = 13
CP_ABSORB = 14
CP_EMISS = 15
CP_PIDEAL = 16
CP_IDEG = 17
CP_APANEL = 18
CP_POUT = 19

# Indices into the packed constraint-parameters vector.
PP_AMAX = 0
PP_NU0 = 1
PP_NU1 = 2
PP_RMAX = 3
PP_RCOLL = 4
PP_RDEP = 5
PP_VMAX = 6
PP_WMAX = 7
PP_EZLIM = 8
PP_TMAX = 9
PP_D0 = 10
PP_D1 = 11
PP_EMIN = 12
PP_D2 = 13
PP_GAIN1 = 14
PP_GAIN_HO1 = 15
PP_GAIN_HO2 = 16

KELVIN = 273.15

# Filter/QP status codes.
QP_OPTIMAL = 0
QP_INFEASIBLE = 1
QP_MAXITER = 2
FILTER_PASSTHROUGH = 0
FILTER_QP = 1
FILTER_HARD_ONLY = 2
FILTER_FAULT = 3
FILTER_QP_SLACK = 4


@njit(cache=True)
def quat_to_rot(q):
    """Rotation matrix (body -> Hill) of a scalar-last quaternion.

    The quaternion is normalized internally so mid-integration states with
    slightly drifted norm stay usable.
    """
    x = q[0]
    y = q[1]
    z = q[2]
    w = q[3]
    s = 1.0 / np.sqrt(x * x + y * y + z * z + w * w)
    x *= s
    y *= s
    z *= s
    w *= s
    r = np.empty((3, 3))
    r[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[0, 1] = 2.0 * (x * y - z * w)
    r[0, 2] = 2.0 * (x * z + y * w)
    r[1, 0] = 2.0 * (x * y + z * w)
    r[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[1, 2] = 2.0 * (y * z - x * w)
    r[2, 0] = 2.0 * (x * z - y * w)
    r[2, 1] = 2.0 * (y * z + x * w)
    r[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r


@njit(cache=True)
def _cwh_accel(p, v, n):
    a = np.empty(3)
    a[0] = 3.0 * n * n * p[0] + 2.0 * n * v[1]
    a[1] = -2.0 * n * v[0]
    a[2] = -n * n * p[2]
    return a


@njit(cache=True)
def _gyro_accel(w, cp):
    d = np.empty(3)
    d[0] = ((cp[CP_J2] - cp[CP_J3]) * w[1] * w[2]) / cp[CP_J1]
    d[1] = ((cp[CP_J3] - cp[CP_J1]) * w[0] * w[2]) / cp[CP_J2]
    d[2] = ((cp[CP_J1] - cp[CP_J2]) * w[0] * w[1]) / cp[CP_J3]
    return d


@njit(cache=True)
def _thermal_rate(dot_sun, dot_earth, temp_c, cp):
    """Node heat balance in W divided by thermal mass: dT/dt in K/s."""
    area = cp[CP_ANODE]
    q = 0.0
    if dot_sun > 0.0:
        q += cp[CP_ABSORB] * area * cp[CP_SOLAR] * dot_sun
    fview = 0.8 * dot_earth
    if fview < 0.0:
        fview = 0.0
    elif fview > 0.8:
        fview = 0.8
    te = cp[CP_TEARTH]
    q += cp[CP_ABSORB] * area * cp[CP_SOLAR] * cp[CP_ALBEDO] * fview
    q += cp[CP_SIGMA] * cp[CP_EMISS] * area * fview * te * te * te * te
    tk = temp_c + KELVIN
    q -= cp[CP_SIGMA] * cp[CP_EMISS] * area * tk * tk * tk * tk
    return q / (cp[CP_MNODE] * cp[CP_CHEAT])


@njit(cache=True)
def _power_rate(dot_panel_sun, cp):
    p_in = 0.0
    if dot_panel_sun > 0.0:
        p_in = cp[CP_PIDEAL] * cp[CP_IDEG] * cp[CP_APANEL] * dot_panel_sun
    return p_in - cp[CP_POUT]


@njit(cache=True)
def state_derivative(x, u, cp):
    """Time derivative of the full 16-state under control u = [F_body, tau]."""
    dx = np.empty(16)
    n = cp[CP_N]
    rot = quat_to_rot(x[6:10])
    # Translation: CWH drift plus thrust rotated into the Hill frame.
    f_hill = rot @ u[0:3]
    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    a = _cwh_accel(x[0:3], x[3:6], n)
    inv_m = 1.0 / cp[CP_M]
    dx[3] = a[0] + f_hill[0] * inv_m
    dx[4] = a[1] + f_hill[1] * inv_m
    dx[5] = a[2] + f_hill[2] * inv_m
    # Attitude kinematics (raw quaternion) and Euler's equations.
    q1 = x[6]
    q2 = x[7]
    q3 = x[8]
    q4 = x[9]
    w1 = x[10]
    w2 = x[11]
    w3 = x[12]
    dx[6] = 0.5 * (q4 * w1 - q3 * w2 + q2 * w3)
    dx[7] = 0.5 * (q3 * w1 + q4 * w2 - q1 * w3)
    dx[8] = 0.5 * (-q2 * w1 + q1 * w2 + q4 * w3)
    dx[9] = 0.5 * (-q1 * w1 - q2 * w2 - q3 * w3)
    g = _gyro_accel(x[10:13], cp)
    dx[10] = g[0] + u[3] / cp[CP_J1]
    dx[11] = g[1] + u[4] / cp[CP_J2]
    dx[12] = g[2] + u[5] / cp[CP_J3]
    # Resources.  Node normal is -y_body, panel normal is -x_body.
    sun_x = np.cos(x[15])
    sun_y = np.sin(x[15])
    node_sun = -(rot[0, 1] * sun_x + rot[1, 1] * sun_y)
    node_earth = rot[0, 1]  # (-R[:,1]) . (-1,0,0)
    panel_sun = -(rot[0, 0] * sun_x + rot[1, 0] * sun_y)
    dx[13] = _power_rate(panel_sun, cp)
    dx[14] = _thermal_rate(node_sun, node_earth, x[14], cp)
    dx[15] = -n
    return dx


@njit(cache=True)
def rk4_step(x, u, dt, cp):
    """Classical RK4 step; renormalizes the quaternion and clamps energy."""
    k1 = state_derivative(x, u, cp)
    k2 = state_derivative(x + 0.5 * dt * k1, u, cp)
    k3 = state_derivative(x + 0.5 * dt * k2, u, cp)
    k4 = state_derivative(x + dt * k3, u, cp)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    qn = np.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    out[6] /= qn
    out[7] /= qn
    out[8] /= qn
    out[9] /= qn
    if out[13] < 0.0:
        out[13] = 0.0
    ok = True
    for i in range(16):
        if not np.isfinite(out[i]):
            ok = False
    return out, ok


@njit(cache=True)
def drift_positions(trans, n, cos_nt, sin_nt, t_grid):
    """Free-drift distances |p(t)| on a time grid via the closed-form CWH map."""
    m = t_grid.size
    out = np.empty(m)
    x0 = trans[0]
    y0 = trans[1]
    z0 = trans[2]
    vx = trans[3]
    vy = trans[4]
    vz = trans[5]
    for i in range(m):
        c = cos_nt[i]
        s = sin_nt[i]
        nt = n * t_grid[i]
        px = (4.0 - 3.0 * c) * x0 + s / n * vx + 2.0 / n * (1.0 - c) * vy
        py = (
            6.0 * (s - nt) * x0
            + y0
            - 2.0 / n * (1.0 - c) * vx
            + (4.0 * s - 3.0 * nt) / n * vy
        )
        pz = c * z0 + s / n * vz
        out[i] = np.sqrt(px * px + py * py + pz * pz)
    return out


@njit(cache=True)
def constraint_rows(x, others, cp, pp, cos_nt, sin_nt, t_grid):
    """Evaluate every safety constraint and its control-affine row.

    Returns (h_raw, psi, lf, gu, rhs, degen):
      h_raw  raw constraint values (safety margins)
      psi    h for first-order rows, the first HOCBF stage for second-order
      lf     drift derivative of psi's defining function
      gu     control coefficients over [F_body, tau]
      rhs    row right-hand side so each QP row reads gu.u - slack >= rhs
      degen  1 where the gradient was singular and the row was neutralized
    """
    k = others.shape[0]
    m_rows = 13 + k
    n_mm = cp[CP_N]
    a_max = pp[PP_AMAX]
    gain1 = pp[PP_GAIN1]
    ho1 = pp[PP_GAIN_HO1]
    ho2 = pp[PP_GAIN_HO2]
    inv_m = 1.0 / cp[CP_M]

    h_raw = np.zeros(m_rows)
    psi = np.zeros(m_rows)
    lf = np.zeros(m_rows)
    gu = np.zeros((m_rows, 6))
    rhs = np.zeros(m_rows)
    degen = np.zeros(m_rows, np.uint8)

    p = x[0:3]
    v = x[3:6]
    w = x[10:13]
    rot = quat_to_rot(x[6:10])
    a_drift = _cwh_accel(p, v, n_mm)
    w_drift = _gyro_accel(w, cp)
    jvec = np.empty(3)
    jvec[0] = cp[CP_J1]
    jvec[1] = cp[CP_J2]
    jvec[2] = cp[CP_J3]

    r = np.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
    vdotp = v[0] * p[0] + v[1] * p[1] + v[2] * p[2]

    # --- chief keep-out -------------------------------------------------
    i = 0
    if r < 1e-9:
        degen[i] = 1
        h_raw[i] = -pp[PP_RCOLL]
        psi[i] = h_raw[i]
        rhs[i] = -1e30
    else:
        sr = r - pp[PP_RCOLL]
        root = np.sqrt(2.0 * a_max * abs(sr))
        h = (root if sr >= 0.0 else -root) + vdotp / r
        den = root if root > 1e-9 else 1e-9
        coef = a_max / den
        lfi = 0.0
        for c in range(3):
            grad_p = coef * p[c] / r + v[c] / r - vdotp * p[c] / r ** 3
            lfi += grad_p * v[c] + (p[c] / r) * a_drift[c]
        h_raw[i] = h
        psi[i] = h
        lf[i] = lfi
        for c in range(3):
            gu[i, c] = (
                (p[0] * rot[0, c] + p[1] * rot[1, c] + p[2] * rot[2, c]) / r * inv_m
            )
        rhs[i] = -lfi - gain1 * h

    # --- deputy keep-out, one row per neighbour -------------------------
    for j in range(k):
        i = 1 + j
        dp = np.empty(3)
        dv = np.empty(3)
        for c in range(3):
            dp[c] = p[c] - others[j, c]
            dv[c] = v[c] - others[j, 3 + c]
        rr = np.sqrt(dp[0] ** 2 + dp[1] ** 2 + dp[2] ** 2)
        if rr < 1e-9:
            degen[i] = 1
            h_raw[i] = -pp[PP_RDEP]
            psi[i] = h_raw[i]
            rhs[i] = -1e30
            continue
        dvdotdp = dv[0] * dp[0] + dv[1] * dp[1] + dv[2] * dp[2]
        sr = rr - pp[PP_RDEP]
        root = np.sqrt(4.0 * a_max * abs(sr))
        h = (root if sr >= 0.0 else -root) + dvdotdp / rr
        den = root if root > 1e-9 else 1e-9
        coef = 2.0 * a_max / den
        a_other = _cwh_accel(others[j, 0:3].copy(), others[j, 3:6].copy(), n_mm)
        lfi = 0.0
        for c in range(3):
            grad_dp = coef * dp[c] / rr + dv[c] / rr - dvdotdp * dp[c] / rr ** 3
            lfi += grad_dp * dv[c] + (dp[c] / rr) * (a_drift[c] - a_other[c])
        h_raw[i] = h
        psi[i] = h
        lf[i] = lfi
        for c in range(3):
            gu[i, c] = (
                (dp[0] * rot[0, c] + dp[1] * rot[1, c] + dp[2] * rot[2, c])
                / rr
                * inv_m
            )
        rhs[i] = -lfi - gain1 * h

    # --- speed limit -----------------------------------------------------
    i = k + 1
    nv = np.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    h = pp[PP_NU0] + pp[PP_NU1] * r - nv
    h_raw[i] = h
    psi[i] = h
    if r > 1e-9:
        lfi = pp[PP_NU1] * vdotp / r
    else:
        lfi = 0.0
    if nv > 1e-12:
        for c in range(3):
            lfi -= (v[c] / nv) * a_drift[c]
        for c in range(3):
            gu[i, c] = (
                -(v[0] * rot[0, c] + v[1] * rot[1, c] + v[2] * rot[2, c]) / nv * inv_m
            )
    lf[i] = lfi
    rhs[i] = -lfi - gain1 * h

    # --- proximity keep-in -------------------------------------------------
    i = k + 2
    if r < 1e-9:
        h_raw[i] = np.sqrt(2.0 * a_max * pp[PP_RMAX])
        psi[i] = h_raw[i]
        rhs[i] = -1e30
        degen[i] = 1
    else:
        sr = pp[PP_RMAX] - r
        root = np.sqrt(2.0 * a_max * abs(sr))
        h = (root if sr >= 0.0 else -root) - vdotp / r
        den = root if root > 1e-9 else 1e-9
        coef = a_max / den
        lfi = 0.0
        for c in range(3):
            grad_p = -coef * p[c] / r - (v[c] / r - vdotp * p[c] / r ** 3)
            lfi += grad_p * v[c] - (p[c] / r) * a_drift[c]
        h_raw[i] = h
        psi[i] = h
        lf[i] = lfi
        for c in range(3):
            gu[i, c] = (
                -(p[0] * rot[0, c] + p[1] * rot[1, c] + p[2] * rot[2, c]) / r * inv_m
            )
        rhs[i] = -lfi - gain1 * h

    # --- free-drift keep-out over the forward horizon ----------------------
    i = k + 3
    trans = x[0:6]
    dists = drift_positions(trans, n_mm, cos_nt, sin_nt, t_grid)
    tbest = 0
    dbest = dists[0]
    for t in range(1, dists.size):
        if dists[t] < dbest:
            dbest = dists[t]
            tbest = t
    h = dbest - pp[PP_RCOLL]
    h_raw[i] = h
    psi[i] = h
    if dbest < 1e-9:
        degen[i] = 1
        rhs[i] = -1e30
    else:
        c_ = cos_nt[tbest]
        s_ = sin_nt[tbest]
        nt = n_mm * t_grid[tbest]
        px = (4.0 - 3.0 * c_) * trans[0] + s_ / n_mm * trans[3] + 2.0 / n_mm * (
            1.0 - c_
        ) * trans[4]
        py = (
            6.0 * (s_ - nt) * trans[0]
            + trans[1]
            - 2.0 / n_mm * (1.0 - c_) * trans[3]
            + (4.0 * s_ - 3.0 * nt) / n_mm * trans[4]
        )
        pz = c_ * trans[2] + s_ / n_mm * trans[5]
        grad6 = np.zeros(6)
        grad6[0] = ((4.0 - 3.0 * c_) * px + 6.0 * (s_ - nt) * py) / dbest
        grad6[1] = py / dbest
        grad6[2] = c_ * pz / dbest
        grad6[3] = (s_ / n_mm * px - 2.0 / n_mm * (1.0 - c_) * py) / dbest
        grad6[4] = (
            2.0 / n_mm * (1.0 - c_) * px + (4.0 * s_ - 3.0 * nt) / n_mm * py
        ) / dbest
        grad6[5] = s_ / n_mm * pz / dbest
        lfi = 0.0
        for c in range(3):
            lfi += grad6[c] * v[c] + grad6[3 + c] * a_drift[c]
        lf[i] = lfi
        for c in range(3):
            gu[i, c] = (
                (grad6[3] * rot[0, c] + grad6[4] * rot[1, c] + grad6[5] * rot[2, c])
                * inv_m
            )
        rhs[i] = -lfi - gain1 * h

    # --- translational velocity boxes ---------------------------------------
    vmax2 = pp[PP_VMAX] * pp[PP_VMAX]
    for c in range(3):
        i = k + 4 + c
        h = vmax2 - v[c] * v[c]
        h_raw[i] = h
        psi[i] = h
        lfi = -2.0 * v[c] * a_drift[c]
        lf[i] = lfi
        for cc in range(3):
            gu[i, cc] = -2.0 * v[c] * rot[c, cc] * inv_m
        rhs[i] = -lfi - gain1 * h

    # Shared attitude geometry for the second-order rows.
    sun_x = np.cos(x[15])
    sun_y = np.sin(x[15])
    # s and rE expressed in the body frame (rows of R dotted with them).
    u_sun = np.empty(3)
    u_sun[0] = rot[0, 0] * sun_x + rot[1, 0] * sun_y
    u_sun[1] = rot[0, 1] * sun_x + rot[1, 1] * sun_y
    u_sun[2] = rot[0, 2] * sun_x + rot[1, 2] * sun_y
    u_earth = np.empty(3)
    u_earth[0] = -rot[0, 0]
    u_earth[1] = -rot[0, 1]
    u_earth[2] = -rot[0, 2]

    # --- sun exclusion zone (boresight +x_body), second order ---------------
    i = k + 7
    d = u_sun[0]  # boresight . sun
    if d > 1.0:
        d = 1.0
    elif d < -1.0:
        d = -1.0
    sin2 = 1.0 - d * d
    h = np.arccos(d) - pp[PP_EZLIM]
    h_raw[i] = h
    if sin2 < 1e-12:
        degen[i] = 1
        psi[i] = h
        rhs[i] = -1e30
    else:
        c1 = 1.0 / np.sqrt(sin2)
        # row over wdot for ddot terms: e = +x_body
        wrow_b = np.empty(3)
        wrow_b[0] = 0.0
        wrow_b[1] = -u_sun[2]
        wrow_b[2] = u_sun[1]
        ddot = wrow_b[0] * w[0] + wrow_b[1] * w[1] + wrow_b[2] * w[2]
        hdot = -c1 * ddot
        psi1 = hdot + ho1 * h
        psi[i] = psi1
        # geometric second-order term: s . R (w x (w x e_b))
        wxe = np.empty(3)
        wxe[0] = 0.0
        wxe[1] = w[2]
        wxe[2] = -w[1]
        wxwxe = np.empty(3)
        wxwxe[0] = w[1] * wxe[2] - w[2] * wxe[1]
        wxwxe[1] = w[2] * wxe[0] - w[0] * wxe[2]
        wxwxe[2] = w[0] * wxe[1] - w[1] * wxe[0]
        geom = (
            u_sun[0] * wxwxe[0] + u_sun[1] * wxwxe[1] + u_sun[2] * wxwxe[2]
        )
        dd_drift = (
            wrow_b[0] * w_drift[0]
            + wrow_b[1] * w_drift[1]
            + wrow_b[2] * w_drift[2]
            + geom
        )
        hdd_drift = -c1 * dd_drift - d * ddot * ddot * c1 ** 3
        lf[i] = hdd_drift + ho1 * hdot
        for c in range(3):
            gu[i, 3 + c] = -c1 * wrow_b[c] / jvec[c]
        rhs[i] = -lf[i] - ho2 * psi1

    # --- node temperature, second order --------------------------------------
    i = k + 8
    d_s = -u_sun[1]  # node normal (-y_body) . sun
    d_e = -u_earth[1]  # node normal . rE
    if d_s > 1.0:
        d_s = 1.0
    elif d_s < -1.0:
        d_s = -1.0
    if d_e > 1.0:
        d_e = 1.0
    elif d_e < -1.0:
        d_e = -1.0
    th_si = np.arccos(d_s)
    th_ei = np.arccos(d_e)
    half_pi = 0.5 * np.pi
    temp_c = x[14]
    h_t = (
        pp[PP_TMAX]
        - temp_c
        - pp[PP_D0] * (half_pi - th_si)
        - pp[PP_D1] * (half_pi - th_ei)
    )
    h_raw[i] = h_t
    sin2s = 1.0 - d_s * d_s
    sin2e = 1.0 - d_e * d_e
    # wdot rows for the node normal e_n = -y_body against sun and earth.
    wrow_s = np.empty(3)
    wrow_s[0] = -u_sun[2]
    wrow_s[1] = 0.0
    wrow_s[2] = u_sun[0]
    wrow_e = np.empty(3)
    wrow_e[0] = -u_earth[2]
    wrow_e[1] = 0.0
    wrow_e[2] = u_earth[0]
    if sin2s < 1e-12 or sin2e < 1e-12:
        degen[i] = 1
        psi[i] = h_t
        rhs[i] = -1e30
        c_s = 0.0
        th_si_dot = 0.0
        th_si_dd_drift = 0.0
        batt_ok = False
    else:
        c_s = 1.0 / np.sqrt(sin2s)
        c_e = 1.0 / np.sqrt(sin2e)
        ds_dot = wrow_s[0] * w[0] + wrow_s[1] * w[1] + wrow_s[2] * w[2]
        de_dot = wrow_e[0] * w[0] + wrow_e[1] * w[1] + wrow_e[2] * w[2]
        th_si_dot = -c_s * ds_dot
        th_ei_dot = -c_e * de_dot
        t_dot = _thermal_rate(d_s, d_e, temp_c, cp)
        hdot = -t_dot + pp[PP_D0] * th_si_dot + pp[PP_D1] * th_ei_dot
        psi1 = hdot + ho1 * h_t
        psi[i] = psi1
        # Q rate of change (frozen sun; clamp indicators held).
        area = cp[CP_ANODE]
        k_ei = (
            cp[CP_ABSORB] * area * cp[CP_SOLAR] * cp[CP_ALBEDO]
            + cp[CP_SIGMA] * cp[CP_EMISS] * area * cp[CP_TEARTH] ** 4
        )
        q_dot = 0.0
        if d_s > 0.0:
            q_dot += cp[CP_ABSORB] * area * cp[CP_SOLAR] * ds_dot
        fv_arg = 0.8 * d_e
        if fv_arg > 0.0 and fv_arg < 0.8:
            q_dot += k_ei * 0.8 * de_dot
        tk = temp_c + KELVIN
        q_dot -= 4.0 * cp[CP_SIGMA] * cp[CP_EMISS] * area * tk ** 3 * t_dot
        t_dd = q_dot / (cp[CP_MNODE] * cp[CP_CHEAT])
        # geometric second-order pieces
        wxen = np.empty(3)
        wxen[0] = w[2]
        wxen[1] = 0.0
        wxen[2] = -w[0]
        wxwxen = np.empty(3)
        wxwxen[0] = w[1] * wxen[2] - w[2] * wxen[1]
        wxwxen[1] = w[2] * wxen[0] - w[0] * wxen[2]
        wxwxen[2] = w[0] * wxen[1] - w[1] * wxen[0]
        geom_s = (
            u_sun[0] * wxwxen[0] + u_sun[1] * wxwxen[1] + u_sun[2] * wxwxen[2]
        )
        geom_e = (
            u_earth[0] * wxwxen[0]
            + u_earth[1] * wxwxen[1]
            + u_earth[2] * wxwxen[2]
        )
        ds_dd_drift = (
            wrow_s[0] * w_drift[0]
            + wrow_s[1] * w_drift[1]
            + wrow_s[2] * w_drift[2]
            + geom_s
        )
        de_dd_drift = (
            wrow_e[0] * w_drift[0]
            + wrow_e[1] * w_drift[1]
            + wrow_e[2] * w_drift[2]
            + geom_e
        )
        th_si_dd_drift = -c_s * ds_dd_drift - d_s * ds_dot * ds_dot * c_s ** 3
        th_ei_dd_drift = -c_e * de_dd_drift - d_e * de_dot * de_dot * c_e ** 3
        lf[i] = (
            -t_dd
            + pp[PP_D0] * th_si_dd_drift
            + pp[PP_D1] * th_ei_dd_drift
            + ho1 * hdot
        )
        for c in range(3):
            gu[i, 3 + c] = (
                (-pp[PP_D0] * c_s * wrow_s[c] - pp[PP_D1] * c_e * wrow_e[c])
                / jvec[c]
            )
        rhs[i] = -lf[i] - ho2 * psi1
        batt_ok = True

    # --- battery energy, second order ----------------------------------------
    i = k + 9
    d_p = -u_sun[0]  # panel normal (-x_body) . sun
    h_b = x[13] - pp[PP_EMIN] - pp[PP_D2] * th_si
    h_raw[i] = h_b
    if not batt_ok:
        degen[i] = 1
        psi[i] = h_b
        rhs[i] = -1e30
    else:
        e_dot = _power_rate(d_p, cp)
        hdot = e_dot - pp[PP_D2] * th_si_dot
        psi1 = hdot + ho1 * h_b
        psi[i] = psi1
        wrow_p = np.empty(3)
        wrow_p[0] = 0.0
        wrow_p[1] = u_sun[2]
        wrow_p[2] = -u_sun[1]
        dp_dot = wrow_p[0] * w[0] + wrow_p[1] * w[1] + wrow_p[2] * w[2]
        e_dd = 0.0
        if d_p > 0.0:
            e_dd = cp[CP_PIDEAL] * cp[CP_IDEG] * cp[CP_APANEL] * dp_dot
        lf[i] = e_dd - pp[PP_D2] * th_si_dd_drift + ho1 * hdot
        for c in range(3):
            gu[i, 3 + c] = pp[PP_D2] * c_s * wrow_s[c] / jvec[c]
        rhs[i] = -lf[i] - ho2 * psi1

    # --- angular velocity boxes -----------------------------------------------
    wmax2 = pp[PP_WMAX] * pp[PP_WMAX]
    for c in range(3):
        i = k + 10 + c
        h = wmax2 - w[c] * w[c]
        h_raw[i] = h
        psi[i] = h
        lfi = -2.0 * w[c] * w_drift[c]
        lf[i] = lfi
        gu[i, 3 + c] = -2.0 * w[c] / jvec[c]
        rhs[i] = -lfi - gain1 * h

    return h_raw, psi, lf, gu, rhs, degen


@njit(cache=True)
def _schur_solve(g_mat, inv_h, active, n_act, rhs_v):
    """Solve (G_A H^-1 G_A') r = rhs with diagonal equilibration."""
    n = inv_h.size
    b_mat = np.empty((n_act, n_act))
    for a in range(n_act):
        ia = active[a]
        for b in range(a, n_act):
            ib = active[b]
            acc = 0.0
            for j in range(n):
                acc += g_mat[ia, j] * inv_h[j] * g_mat[ib, j]
            b_mat[a, b] = acc
            b_mat[b, a] = acc
    d = np.empty(n_act)
    for a in range(n_act):
        da = b_mat[a, a]
        d[a] = 1.0 / np.sqrt(da) if da > 1e-300 else 1.0
    b_scaled = np.empty((n_act, n_act))
    for a in range(n_act):
        for b in range(n_act):
            b_scaled[a, b] = b_mat[a, b] * d[a] * d[b]
    rhs_scaled = np.empty(n_act)
    for a in range(n_act):
        rhs_scaled[a] = rhs_v[a] * d[a]
    y = np.linalg.solve(b_scaled, rhs_scaled)
    out = np.empty(n_act)
    for a in range(n_act):
        out[a] = y[a] * d[a]
    return out


@njit(cache=True)
def qp_solve_gi(h_diag, c, g_raw, h_raw_vec, max_iter, tol):
    """Dual active-set solve of min 0.5 z'Hz + c'z  s.t.  Gz >= h.

    H must be strictly positive diagonal.  Starts from the unconstrained
    minimizer and adds the most violated constraint each outer pass, taking
    partial dual steps (dropping blocking constraints) as in the classic
    dual active-set scheme.  Ties break on the lowest row index so the pivot
    order, and therefore the output bits, are reproducible.  Rows are
    normalized internally and the solution is re-derived from the final
    active set, which keeps the KKT residual near round-off even with the
    huge slack weights the safety filter uses.

    Returns (z, lam, status, iters) with status 0 optimal / 1 infeasible /
    2 iteration cap; lam is reported against the caller's row scaling.
    """
    n = h_diag.size
    m = h_raw_vec.size
    inv_h = 1.0 / h_diag
    # normalize rows for conditioning; recover multipliers at the end
    g_mat = np.empty((m, n))
    h_vec = np.empty(m)
    row_scale = np.empty(m)
    for i in range(m):
        nrm = 0.0
        for j in range(n):
            nrm += g_raw[i, j] * g_raw[i, j]
        nrm = np.sqrt(nrm)
        s = 1.0 / nrm if nrm > 1e-300 else 1.0
        row_scale[i] = s
        for j in range(n):
            g_mat[i, j] = g_raw[i, j] * s
        h_vec[i] = h_raw_vec[i] * s
    z = -c * inv_h
    lam = np.zeros(m)
    active = np.empty(m, np.int64)
    n_act = 0
    used = np.zeros(m, np.uint8)
    it = 0
    status = QP_MAXITER
    while it < max_iter:
        it += 1
        # most violated inactive row, ties to the lowest index
        p = -1
        worst = tol
        for i in range(m):
            if used[i]:
                continue
            gz = 0.0
            for j in range(n):
                gz += g_mat[i, j] * z[j]
            viol = h_vec[i] - gz
            if viol > worst:
                worst = viol
                p = i
        if p < 0:
            # refinement: recompute (z, lam) directly from the active set,
            # then iterate on the active-equality residual (the multipliers
            # can be ~1e9 with the filter's slack weights, so the plain
            # reconstruction of z cancels catastrophically)
            if n_act > 0:
                rhs_v = np.empty(n_act)
                for a in range(n_act):
                    ia = active[a]
                    acc = h_vec[ia]
                    for j in range(n):
                        acc += g_mat[ia, j] * inv_h[j] * c[j]
                    rhs_v[a] = acc
                lam_a = _schur_solve(g_mat, inv_h, active, n_act, rhs_v)
                ok = True
                for a in range(n_act):
                    if lam_a[a] < -1e-9:
                        ok = False
                if ok:
                    z_new = np.empty(n)
                    for j in range(n):
                        acc = -c[j]
                        for a in range(n_act):
                            acc += g_mat[active[a], j] * lam_a[a]
                        z_new[j] = acc * inv_h[j]
                    for _refine in range(3):
                        resid = np.empty(n_act)
                        worst_resid = 0.0
                        for a in range(n_act):
                            ia = active[a]
                            gz = 0.0
                            for j in range(n):
                                gz += g_mat[ia, j] * z_new[j]
                            resid[a] = h_vec[ia] - gz
                            if abs(resid[a]) > worst_resid:
                                worst_resid = abs(resid[a])
                        if worst_resid < 1e-14:
                            break
                        dlam = _schur_solve(g_mat, inv_h, active, n_act, resid)
                        for a in range(n_act):
                            lam_a[a] += dlam[a]
                        for j in range(n):
                            acc = 0.0
                            for a in range(n_act):
                                acc += g_mat[active[a], j] * dlam[a]
                            z_new[j] += acc * inv_h[j]
                    # accept only if it does not break inactive rows
                    feasible = True
                    for i in range(m):
                        if used[i]:
                            continue
                        gz = 0.0
                        for j in range(n):
                            gz += g_mat[i, j] * z_new[j]
                        if h_vec[i] - gz > tol:
                            feasible = False
                    z = z_new
                    for a in range(n_act):
                        ia = active[a]
                        lam[ia] = lam_a[a] if lam_a[a] > 0.0 else 0.0
                    if feasible:
                        status = QP_OPTIMAL
                        break
                    # refined point violates something: keep iterating from it
                    continue
                # negative multiplier: drop the most negative and continue
                worst_a = 0
                for a in range(1, n_act):
                    if lam_a[a] < lam_a[worst_a]:
                        worst_a = a
                drop = active[worst_a]
                used[drop] = 0
                lam[drop] = 0.0
                for a in range(worst_a, n_act - 1):
                    active[a] = active[a + 1]
                n_act -= 1
                continue
            status = QP_OPTIMAL
            break
        lam_p = 0.0
        inner_done = False
        while it < max_iter:
            it += 1
            # direction pair (dz, r) for adding row p against the active set
            if n_act > 0:
                rhs_v = np.empty(n_act)
                for a in range(n_act):
                    ia = active[a]
                    acc = 0.0
                    for j in range(n):
                        acc += g_mat[ia, j] * inv_h[j] * g_mat[p, j]
                    rhs_v[a] = acc
                r = _schur_solve(g_mat, inv_h, active, n_act, rhs_v)
                dz = np.empty(n)
                for j in range(n):
                    acc = g_mat[p, j]
                    for a in range(n_act):
                        acc -= g_mat[active[a], j] * r[a]
                    dz[j] = acc * inv_h[j]
            else:
                r = np.zeros(0)
                dz = np.empty(n)
                for j in range(n):
                    dz[j] = g_mat[p, j] * inv_h[j]
            denom = 0.0
            for j in range(n):
                denom += g_mat[p, j] * dz[j]
            # dual blocking step
            t1 = np.inf
            bidx = -1
            for a in range(n_act):
                if r[a] > 1e-14:
                    ta = lam[active[a]] / r[a]
                    if ta < t1 - 1e-15 or (
                        ta <= t1 + 1e-15 and bidx >= 0 and active[a] < active[bidx]
                    ):
                        t1 = ta
                        bidx = a
            # primal step to reach the boundary of row p; the row counts as
            # linearly dependent only relative to its own curvature scale
            np_norm = 0.0
            for j in range(n):
                np_norm += g_mat[p, j] * inv_h[j] * g_mat[p, j]
            if denom > 1e-13 * np_norm:
                gz = 0.0
                for j in range(n):
                    gz += g_mat[p, j] * z[j]
                t2 = (h_vec[p] - gz) / denom
            else:
                t2 = np.inf
            if not np.isfinite(t1) and not np.isfinite(t2):
                return z, lam, QP_INFEASIBLE, it
            if t2 <= t1:
                t = t2
                if t < 0.0:
                    t = 0.0
                for j in range(n):
                    z[j] += t * dz[j]
                for a in range(n_act):
                    lam[active[a]] -= t * r[a]
                lam_p += t
                lam[p] = lam_p
                active[n_act] = p
                n_act += 1
                used[p] = 1
                inner_done = True
                break
            t = t1
            for j in range(n):
                z[j] += t * dz[j]
            for a in range(n_act):
                lam[active[a]] -= t * r[a]
            lam_p += t
            drop = active[bidx]
            used[drop] = 0
            lam[drop] = 0.0
            for a in range(bidx, n_act - 1):
                active[a] = active[a + 1]
            n_act -= 1
        if not inner_done and it >= max_iter:
            break
    # report multipliers against the caller's (unnormalized) rows
    for i in range(m):
        lam[i] = lam[i] * row_scale[i]
    return z, lam, status, it


@njit(cache=True)
def assemble_and_solve(u_des, gu, rhs, degen, n_hard, bounds6, slack_weight):
    """Build and solve the filter program over [u, slack].

    Solved as a ladder: (0) pass the desired control through when it already
    satisfies everything; (1) solve with every slack pinned at zero, which
    is the exact optimum whenever no soft constraint genuinely conflicts;
    (2) on conflict, solve the full program with slack variables rescaled by
    1/sqrt(weight) so the Hessian is the identity (the literal huge-weight
    program is the same problem in worse coordinates); (3) hard rows and box
    only; (4) zero control with a fault flag.

    Returns (u_act, slack, status, stage) with status a FILTER_* code.
    """
    m_rows = rhs.size
    n_soft = m_rows - n_hard
    # Stage 0: desired control already satisfies every row and the box.
    ok = True
    for c in range(6):
        if abs(u_des[c]) > bounds6[c]:
            ok = False
    if ok:
        for i in range(m_rows):
            if degen[i]:
                continue
            acc = 0.0
            for c in range(6):
                acc += gu[i, c] * u_des[c]
            if acc < rhs[i] - 1e-12:
                ok = False
                break
    if ok:
        return u_des.copy(), np.zeros(n_soft), FILTER_PASSTHROUGH, 0

    # Stage 1: all rows enforced, slacks pinned at zero.
    all_rows = np.ones(m_rows, np.uint8)
    g1, h1 = _stage_rows(gu, rhs, degen, bounds6, all_rows)
    z1, lam1, st1, _ = qp_solve_gi(np.full(6, 2.0), -2.0 * u_des, g1, h1, 500, 1e-10)
    if st1 != QP_INFEASIBLE:
        u_act = _clip6(z1[0:6], bounds6)
        return u_act, np.zeros(n_soft), FILTER_QP, 1

    # Stage 2: slack variables engaged, scaled to unit Hessian.
    sigma = 1.0 / np.sqrt(slack_weight)
    n_var = 6 + n_soft
    h_diag = np.full(n_var, 2.0)
    c_vec = np.zeros(n_var)
    for c in range(6):
        c_vec[c] = -2.0 * u_des[c]
    n_rows = m_rows + 12
    g_mat = np.zeros((n_rows, n_var))
    h_vec = np.full(n_rows, -1e30)
    for i in range(m_rows):
        if degen[i]:
            continue
        for c in range(6):
            g_mat[i, c] = gu[i, c]
        if i >= n_hard:
            g_mat[i, 6 + (i - n_hard)] = -sigma
        h_vec[i] = rhs[i]
    for c in range(6):
        g_mat[m_rows + 2 * c, c] = 1.0
        h_vec[m_rows + 2 * c] = -bounds6[c]
        g_mat[m_rows + 2 * c + 1, c] = -1.0
        h_vec[m_rows + 2 * c + 1] = -bounds6[c]
    z2, lam2, st2, _ = qp_solve_gi(h_diag, c_vec, g_mat, h_vec, 500, 1e-10)
    if st2 != QP_INFEASIBLE:
        u_act = _clip6(z2[0:6], bounds6)
        slack = np.empty(n_soft)
        for s in range(n_soft):
            slack[s] = z2[6 + s] * sigma
        return u_act, slack, FILTER_QP_SLACK, 2

    # Stage 3: hard rows and box only.
    hard_mask = np.zeros(m_rows, np.uint8)
    for i in range(n_hard):
        hard_mask[i] = 1
    g3, h3 = _stage_rows(gu, rhs, degen, bounds6, hard_mask)
    z3, lam3, st3, _ = qp_solve_gi(np.full(6, 2.0), -2.0 * u_des, g3, h3, 500, 1e-10)
    if st3 != QP_INFEASIBLE:
        u_act = _clip6(z3[0:6], bounds6)
        return u_act, np.zeros(n_soft), FILTER_HARD_ONLY, 3
    return np.zeros(6), np.zeros(n_soft), FILTER_FAULT, 4


@njit(cache=True)
def _stage_rows(gu, rhs, degen, bounds6, row_mask):
    m_rows = rhs.size
    n_rows = m_rows + 12
    g_mat = np.zeros((n_rows, 6))
    h_vec = np.full(n_rows, -1e30)
    for i in range(m_rows):
        if degen[i] or not row_mask[i]:
            continue
        for c in range(6):
            g_mat[i, c] = gu[i, c]
        h_vec[i] = rhs[i]
    for c in range(6):
        g_mat[m_rows + 2 * c, c] = 1.0
        h_vec[m_rows + 2 * c] = -bounds6[c]
        g_mat[m_rows + 2 * c + 1, c] = -1.0
        h_vec[m_rows + 2 * c + 1] = -bounds6[c]
    return g_mat, h_vec


@njit(cache=True)
def _clip6(u, bounds6):
    out = u.copy()
    for c in range(6):
        if out[c] > bounds6[c]:
            out[c] = bounds6[c]
        elif out[c] < -bounds6[c]:
            out[c] = -bounds6[c]
    return out


@njit(cache=True)
def filter_control(x, others, u_des, cp, pp, cos_nt, sin_nt, t_grid,
                   slack_weight):
    """One RTA filter evaluation: constraint rows plus the minimally
    invasive QP.  Returns (u_act, h_raw, slack, status, intervened)."""
    h_raw, psi, lf, gu, rhs, degen = constraint_rows(
        x, others, cp, pp, cos_nt, sin_nt, t_grid
    )
    k = others.shape[0]
    bounds6 = np.empty(6)
    for c in range(3):
        bounds6[c] = cp[CP_FMAX]
        bounds6[3 + c] = cp[CP_TAUMAX]
    u_act, slack, status, _ = assemble_and_solve(
        u_des, gu, rhs, degen, 1 + k, bounds6, slack_weight
    )
    intervened = False
    for c in range(6):
        if abs(u_act[c] - u_des[c]) > 1e-9:
            intervened = True
    return u_act, h_raw, slack, status, intervened


@njit(cache=True)
def visible_points(points, pos, rot, fov_half_cos):
    """Mask of sphere points inside the sensor cone and on the facing side."""
    n_pts = points.shape[0]
    out = np.zeros(n_pts, np.uint8)
    bx = rot[0, 0]
    by = rot[1, 0]
    bz = rot[2, 0]
    for ip in range(n_pts):
        px = points[ip, 0]
        py = points[ip, 1]
        pz = points[ip, 2]
        rx = px - pos[0]
        ry = py - pos[1]
        rz = pz - pos[2]
        dist = np.sqrt(rx * rx + ry * ry + rz * rz)
        if dist < 1e-12:
            continue
        if (rx * bx + ry * by + rz * bz) < fov_half_cos * dist:
            continue
        # facing-side test: outward normal against the deputy direction
        if (px * (-rx) + py * (-ry) + pz * (-rz)) <= 0.0:
            continue
        out[ip] = 1
    return out
