"""Compiled numeric kernels for chain kinematics, dynamics, and plant stepping.

Everything in here is numba-jitted and operates on plain float64 arrays so the
1 kHz plant loop stays cheap; the hot kernels are written allocation-free with
hand-inlined cross products.  The public wrappers with validation and nicer
types live in :mod:`mobman.robot` and :mod:`mobman.sim`.

Frame conventions (see robot.py for the full story):
  * joint i sits at ``origins[i]`` in its parent frame and rotates about
    ``axes[i]`` (unit vector, parent-frame coordinates),
  * link i carries mass ``masses[i]`` at ``coms[i]`` with inertia
    ``inertias[i]`` about the COM, all in the link-i frame,
  * the chain is rooted at the mount transform (R_m, p_m) expressed in the
    vehicle body frame.
"""

import numpy as np
from numba import njit

JIT_OPTS = dict(cache=True, fastmath=False)


@njit(**JIT_OPTS)
def _rodrigues(axis, angle):
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    a1, a2, a3 = axis[0], axis[1], axis[2]
    R = np.empty((3, 3))
    R[0, 0] = t * a1 * a1 + c
    R[0, 1] = t * a1 * a2 - s * a3
    R[0, 2] = t * a1 * a3 + s * a2
    R[1, 0] = t * a1 * a2 + s * a3
    R[1, 1] = t * a2 * a2 + c
    R[1, 2] = t * a2 * a3 - s * a1
    R[2, 0] = t * a1 * a3 - s * a2
    R[2, 1] = t * a2 * a3 + s * a1
    R[2, 2] = t * a3 * a3 + c
    return R


@njit(**JIT_OPTS)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(**JIT_OPTS)
def chain_frames(q, origins, axes, mount_R, mount_p, ee_offset):
    """Forward pass over the chain.

    Returns (z, pj, Rj, p_ee, R_ee): joint axes (n,3) and origins (n,3) in
    the mount-parent frame, link frames (n,3,3), and the end-effector
    position/rotation.
    """
    n = q.shape[0]
    z = np.empty((n, 3))
    pj = np.empty((n, 3))
    Rj = np.empty((n, 3, 3))
    R = mount_R.copy()
    p = mount_p.copy()
    for i in range(n):
        p = p + R @ origins[i]
        z[i] = R @ axes[i]
        R = R @ _rodrigues(axes[i], q[i])
        Rj[i] = R
        pj[i] = p
    p_ee = p + R @ ee_offset
    return z, pj, Rj, p_ee, R


@njit(**JIT_OPTS)
def jacobian(q, origins, axes, mount_R, mount_p, ee_offset):
    """Geometric Jacobian (6,n): rows 0-2 linear, 3-5 angular."""
    n = q.shape[0]
    z, pj, Rj, p_ee, R_ee = chain_frames(q, origins, axes, mount_R, mount_p, ee_offset)
    J = np.zeros((6, n))
    for i in range(n):
        lx = p_ee[0] - pj[i, 0]
        ly = p_ee[1] - pj[i, 1]
        lz = p_ee[2] - pj[i, 2]
        J[0, i] = z[i, 1] * lz - z[i, 2] * ly
        J[1, i] = z[i, 2] * lx - z[i, 0] * lz
        J[2, i] = z[i, 0] * ly - z[i, 1] * lx
        J[3, i] = z[i, 0]
        J[4, i] = z[i, 1]
        J[5, i] = z[i, 2]
    return J


@njit(**JIT_OPTS)
def jacobian_dot(q, qd, origins, axes, mount_R, mount_p, ee_offset):
    """Time derivative of the geometric Jacobian due to joint motion only."""
    n = q.shape[0]
    z, pj, Rj, p_ee, R_ee = chain_frames(q, origins, axes, mount_R, mount_p, ee_offset)
    omega = np.zeros((n, 3))
    pdot = np.zeros((n, 3))
    wx = wy = wz = 0.0
    for i in range(n):
        if i > 0:
            dx = pj[i, 0] - pj[i - 1, 0]
            dy = pj[i, 1] - pj[i - 1, 1]
            dz = pj[i, 2] - pj[i - 1, 2]
            pdot[i, 0] = pdot[i - 1, 0] + wy * dz - wz * dy
            pdot[i, 1] = pdot[i - 1, 1] + wz * dx - wx * dz
            pdot[i, 2] = pdot[i - 1, 2] + wx * dy - wy * dx
        wx += qd[i] * z[i, 0]
        wy += qd[i] * z[i, 1]
        wz += qd[i] * z[i, 2]
        omega[i, 0] = wx
        omega[i, 1] = wy
        omega[i, 2] = wz
    ex = p_ee[0] - pj[n - 1, 0]
    ey = p_ee[1] - pj[n - 1, 1]
    ez = p_ee[2] - pj[n - 1, 2]
    pe_dot = np.empty(3)
    pe_dot[0] = pdot[n - 1, 0] + omega[n - 1, 1] * ez - omega[n - 1, 2] * ey
    pe_dot[1] = pdot[n - 1, 1] + omega[n - 1, 2] * ex - omega[n - 1, 0] * ez
    pe_dot[2] = pdot[n - 1, 2] + omega[n - 1, 0] * ey - omega[n - 1, 1] * ex
    Jd = np.zeros((6, n))
    for i in range(n):
        zdx = omega[i, 1] * z[i, 2] - omega[i, 2] * z[i, 1]
        zdy = omega[i, 2] * z[i, 0] - omega[i, 0] * z[i, 2]
        zdz = omega[i, 0] * z[i, 1] - omega[i, 1] * z[i, 0]
        lx = p_ee[0] - pj[i, 0]
        ly = p_ee[1] - pj[i, 1]
        lz = p_ee[2] - pj[i, 2]
        ldx = pe_dot[0] - pdot[i, 0]
        ldy = pe_dot[1] - pdot[i, 1]
        ldz = pe_dot[2] - pdot[i, 2]
        Jd[0, i] = zdy * lz - zdz * ly + z[i, 1] * ldz - z[i, 2] * ldy
        Jd[1, i] = zdz * lx - zdx * lz + z[i, 2] * ldx - z[i, 0] * ldz
        Jd[2, i] = zdx * ly - zdy * lx + z[i, 0] * ldy - z[i, 1] * ldx
        Jd[3, i] = zdx
        Jd[4, i] = zdy
        Jd[5, i] = zdz
    return Jd


@njit(**JIT_OPTS)
def _dynamics_core(q, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor):
    """Shared forward pass: frames, COM positions/Jacobians, world inertias.

    Returns (z, pj, c, Jv, Iw, M) where Jv is the stacked (n,3,n) COM linear
    Jacobian, Iw the (n,3,3) world-frame link inertias, M the joint inertia
    matrix including rotor terms.
    """
    n = q.shape[0]
    zero3 = np.zeros(3)
    z, pj, Rj, _, _ = chain_frames(q, origins, axes, mount_R, mount_p, zero3)
    c = np.empty((n, 3))
    Jv = np.zeros((n, 3, n))
    Iw = np.empty((n, 3, 3))
    for i in range(n):
        c[i] = pj[i] + Rj[i] @ coms[i]
        Iw[i] = Rj[i] @ inertias[i] @ Rj[i].T
        for m in range(i + 1):
            lx = c[i, 0] - pj[m, 0]
            ly = c[i, 1] - pj[m, 1]
            lz = c[i, 2] - pj[m, 2]
            Jv[i, 0, m] = z[m, 1] * lz - z[m, 2] * ly
            Jv[i, 1, m] = z[m, 2] * lx - z[m, 0] * lz
            Jv[i, 2, m] = z[m, 0] * ly - z[m, 1] * lx
    M = np.zeros((n, n))
    for i in range(n):
        M[i, i] += rotor[i]
    for i in range(n):
        mi = masses[i]
        for a in range(i + 1):
            # rotational row vector z_a^T Iw_i
            r0 = z[a, 0] * Iw[i, 0, 0] + z[a, 1] * Iw[i, 1, 0] + z[a, 2] * Iw[i, 2, 0]
            r1 = z[a, 0] * Iw[i, 0, 1] + z[a, 1] * Iw[i, 1, 1] + z[a, 2] * Iw[i, 2, 1]
            r2 = z[a, 0] * Iw[i, 0, 2] + z[a, 1] * Iw[i, 1, 2] + z[a, 2] * Iw[i, 2, 2]
            for b in range(a + 1):
                val = mi * (
                    Jv[i, 0, a] * Jv[i, 0, b]
                    + Jv[i, 1, a] * Jv[i, 1, b]
                    + Jv[i, 2, a] * Jv[i, 2, b]
                )
                val += r0 * z[b, 0] + r1 * z[b, 1] + r2 * z[b, 2]
                M[a, b] += val
                if a != b:
                    M[b, a] += val
    return z, pj, c, Jv, Iw, M


@njit(**JIT_OPTS)
def mass_matrix(q, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor):
    """Joint-space inertia matrix via per-link COM Jacobians."""
    return _dynamics_core(
        q, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor
    )[5]


@njit(**JIT_OPTS)
def gravity_from_core(z, pj, c, masses, g):
    """Gravity torque given the shared forward-pass data."""
    n = masses.shape[0]
    G = np.zeros(n)
    for i in range(n):
        mgx = masses[i] * g[0]
        mgy = masses[i] * g[1]
        mgz = masses[i] * g[2]
        for m in range(i + 1):
            lx = c[i, 0] - pj[m, 0]
            ly = c[i, 1] - pj[m, 1]
            lz = c[i, 2] - pj[m, 2]
            jx = z[m, 1] * lz - z[m, 2] * ly
            jy = z[m, 2] * lx - z[m, 0] * lz
            jz = z[m, 0] * ly - z[m, 1] * lx
            G[m] -= jx * mgx + jy * mgy + jz * mgz
    return G


@njit(**JIT_OPTS)
def gravity_vector(q, origins, axes, mount_R, mount_p, coms, masses, g):
    """Gradient of gravitational potential with respect to q."""
    n = q.shape[0]
    zero3 = np.zeros(3)
    z, pj, Rj, _, _ = chain_frames(q, origins, axes, mount_R, mount_p, zero3)
    c = np.empty((n, 3))
    for i in range(n):
        c[i] = pj[i] + Rj[i] @ coms[i]
    return gravity_from_core(z, pj, c, masses, g)


@njit(**JIT_OPTS)
def _partials_core(z, pj, c, Jv, Iw, masses, dM):
    """Fill dM[k] = dM/dq_k from the shared forward-pass data.

    Rigid-body identities for a revolute chain:
      dz_m/dq_k   = z_k x z_m            (k < m)
      dp_m/dq_k   = z_k x (p_m - p_k)    (k < m)
      dc_i/dq_k   = z_k x (c_i - p_k)    (k <= i)
      dIw_i/dq_k  = [z_k] Iw_i - Iw_i [z_k]   (k <= i)
    """
    n = masses.shape[0]
    dJv = np.zeros((3, n))
    dJw = np.zeros((3, n))
    dIw = np.empty((3, 3))
    for k in range(n):
        zkx = z[k, 0]
        zky = z[k, 1]
        zkz = z[k, 2]
        for i in range(k, n):
            # dc_i/dq_k
            lx = c[i, 0] - pj[k, 0]
            ly = c[i, 1] - pj[k, 1]
            lz = c[i, 2] - pj[k, 2]
            dcx = zky * lz - zkz * ly
            dcy = zkz * lx - zkx * lz
            dcz = zkx * ly - zky * lx
            for m in range(i + 1):
                if k < m:
                    dzx = zky * z[m, 2] - zkz * z[m, 1]
                    dzy = zkz * z[m, 0] - zkx * z[m, 2]
                    dzz = zkx * z[m, 1] - zky * z[m, 0]
                    px = pj[m, 0] - pj[k, 0]
                    py = pj[m, 1] - pj[k, 1]
                    pz = pj[m, 2] - pj[k, 2]
                    dpx = zky * pz - zkz * py
                    dpy = zkz * px - zkx * pz
                    dpz = zkx * py - zky * px
                else:
                    dzx = dzy = dzz = 0.0
                    dpx = dpy = dpz = 0.0
                levx = c[i, 0] - pj[m, 0]
                levy = c[i, 1] - pj[m, 1]
                levz = c[i, 2] - pj[m, 2]
                ddx = dcx - dpx
                ddy = dcy - dpy
                ddz = dcz - dpz
                dJv[0, m] = dzy * levz - dzz * levy + z[m, 1] * ddz - z[m, 2] * ddy
                dJv[1, m] = dzz * levx - dzx * levz + z[m, 2] * ddx - z[m, 0] * ddz
                dJv[2, m] = dzx * levy - dzy * levx + z[m, 0] * ddy - z[m, 1] * ddx
                dJw[0, m] = dzx
                dJw[1, m] = dzy
                dJw[2, m] = dzz
            # dIw = [z_k] Iw - Iw [z_k]
            I = Iw[i]
            dIw[0, 0] = -zkz * I[1, 0] + zky * I[2, 0] - (I[0, 1] * zkz - I[0, 2] * zky)
            dIw[0, 1] = -zkz * I[1, 1] + zky * I[2, 1] - (-I[0, 0] * zkz + I[0, 2] * zkx)
            dIw[0, 2] = -zkz * I[1, 2] + zky * I[2, 2] - (I[0, 0] * zky - I[0, 1] * zkx)
            dIw[1, 0] = zkz * I[0, 0] - zkx * I[2, 0] - (I[1, 1] * zkz - I[1, 2] * zky)
            dIw[1, 1] = zkz * I[0, 1] - zkx * I[2, 1] - (-I[1, 0] * zkz + I[1, 2] * zkx)
            dIw[1, 2] = zkz * I[0, 2] - zkx * I[2, 2] - (I[1, 0] * zky - I[1, 1] * zkx)
            dIw[2, 0] = -zky * I[0, 0] + zkx * I[1, 0] - (I[2, 1] * zkz - I[2, 2] * zky)
            dIw[2, 1] = -zky * I[0, 1] + zkx * I[1, 1] - (-I[2, 0] * zkz + I[2, 2] * zkx)
            dIw[2, 2] = -zky * I[0, 2] + zkx * I[1, 2] - (I[2, 0] * zky - I[2, 1] * zkx)
            mi = masses[i]
            for a in range(i + 1):
                # row vectors for the rotational parts
                ra0 = z[a, 0] * I[0, 0] + z[a, 1] * I[1, 0] + z[a, 2] * I[2, 0]
                ra1 = z[a, 0] * I[0, 1] + z[a, 1] * I[1, 1] + z[a, 2] * I[2, 1]
                ra2 = z[a, 0] * I[0, 2] + z[a, 1] * I[1, 2] + z[a, 2] * I[2, 2]
                da0 = (
                    dJw[0, a] * I[0, 0] + dJw[1, a] * I[1, 0] + dJw[2, a] * I[2, 0]
                )
                da1 = (
                    dJw[0, a] * I[0, 1] + dJw[1, a] * I[1, 1] + dJw[2, a] * I[2, 1]
                )
                da2 = (
                    dJw[0, a] * I[0, 2] + dJw[1, a] * I[1, 2] + dJw[2, a] * I[2, 2]
                )
                ga0 = z[a, 0] * dIw[0, 0] + z[a, 1] * dIw[1, 0] + z[a, 2] * dIw[2, 0]
                ga1 = z[a, 0] * dIw[0, 1] + z[a, 1] * dIw[1, 1] + z[a, 2] * dIw[2, 1]
                ga2 = z[a, 0] * dIw[0, 2] + z[a, 1] * dIw[1, 2] + z[a, 2] * dIw[2, 2]
                for b in range(i + 1):
                    val = mi * (
                        dJv[0, a] * Jv[i, 0, b]
                        + dJv[1, a] * Jv[i, 1, b]
                        + dJv[2, a] * Jv[i, 2, b]
                        + Jv[i, 0, a] * dJv[0, b]
                        + Jv[i, 1, a] * dJv[1, b]
                        + Jv[i, 2, a] * dJv[2, b]
                    )
                    val += da0 * z[b, 0] + da1 * z[b, 1] + da2 * z[b, 2]
                    val += ga0 * z[b, 0] + ga1 * z[b, 1] + ga2 * z[b, 2]
                    val += ra0 * dJw[0, b] + ra1 * dJw[1, b] + ra2 * dJw[2, b]
                    dM[k, a, b] += val
            for m in range(i + 1):
                dJv[0, m] = 0.0
                dJv[1, m] = 0.0
                dJv[2, m] = 0.0
                dJw[0, m] = 0.0
                dJw[1, m] = 0.0
                dJw[2, m] = 0.0
    return dM


@njit(**JIT_OPTS)
def mass_matrix_partials(q, origins, axes, mount_R, mount_p, coms, masses, inertias):
    """Analytic dM/dq as an (n,n,n) tensor, dM[k] = dM/dq_k."""
    n = q.shape[0]
    zero_rot = np.zeros(n)
    z, pj, c, Jv, Iw, M = _dynamics_core(
        q, origins, axes, mount_R, mount_p, coms, masses, inertias, zero_rot
    )
    dM = np.zeros((n, n, n))
    return _partials_core(z, pj, c, Jv, Iw, masses, dM)


@njit(**JIT_OPTS)
def christoffel_matrix(dM, qd):
    """Coriolis/centrifugal matrix from the dM/dq tensor.

    C[a,b] = 1/2 sum_k (dM[k,a,b] + dM[b,a,k] - dM[a,b,k]) qd_k, which makes
    (Mdot - 2C) exactly skew-symmetric.
    """
    n = qd.shape[0]
    C = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for k in range(n):
                acc += (dM[k, a, b] + dM[b, a, k] - dM[a, b, k]) * qd[k]
            C[a, b] = 0.5 * acc
    return C


@njit(**JIT_OPTS)
def full_dynamics(q, qd, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor, g):
    """(M, C, G) in one fused pass over the chain."""
    n = q.shape[0]
    z, pj, c, Jv, Iw, M = _dynamics_core(
        q, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor
    )
    dM = np.zeros((n, n, n))
    _partials_core(z, pj, c, Jv, Iw, masses, dM)
    C = christoffel_matrix(dM, qd)
    G = gravity_from_core(z, pj, c, masses, g)
    return M, C, G


@njit(**JIT_OPTS)
def coriolis_matrix(q, qd, origins, axes, mount_R, mount_p, coms, masses, inertias):
    dM = mass_matrix_partials(q, origins, axes, mount_R, mount_p, coms, masses, inertias)
    return christoffel_matrix(dM, qd)


@njit(**JIT_OPTS)
def friction_torque(qd, viscous, coulomb):
    """Smoothed viscous + Coulomb joint friction (opposes motion)."""
    n = qd.shape[0]
    tau = np.empty(n)
    for i in range(n):
        tau[i] = -(viscous[i] * qd[i] + coulomb[i] * np.tanh(qd[i] / 0.01))
    return tau


@njit(**JIT_OPTS)
def contact_force(p_ee, v_ee, wall_y, stiffness, damping, mu_t):
    """Unilateral spring-damper wall at plane y = wall_y (free side y < wall_y).

    Returns the 3-vector force the wall exerts on the end effector in world
    coordinates.  Normal force never pulls; tangential friction is smoothed
    below 1e-3 m/s.
    """
    f = np.zeros(3)
    pen = p_ee[1] - wall_y
    if pen <= 0.0:
        return f
    fn = stiffness * pen + damping * v_ee[1]
    if fn < 0.0:
        fn = 0.0
    f[1] = -fn
    if mu_t > 0.0 and fn > 0.0:
        vt0 = v_ee[0]
        vt2 = v_ee[2]
        vnorm = np.sqrt(vt0 * vt0 + vt2 * vt2 + 1e-6)
        f[0] = -mu_t * fn * vt0 / vnorm
        f[2] = -mu_t * fn * vt2 / vnorm
    return f


@njit(**JIT_OPTS)
def plant_substeps(
    q,
    qd,
    tau,
    n_sub,
    dt,
    base_R,
    base_p,
    base_v,
    base_w,
    origins,
    axes,
    mount_R,
    mount_p,
    ee_offset,
    coms,
    masses,
    inertias,
    rotor,
    viscous,
    coulomb,
    gravity,
    wall_on,
    wall_y,
    wall_k,
    wall_b,
    wall_mu,
    f_dist,
):
    """Advance the plant n_sub semi-implicit Euler steps under held torque.

    base_* carry the prescribed vehicle motion sampled at the physics rate
    (length n_sub+1; index s is the state at the start of substep s).
    f_dist is a (n_sub, 6) world-frame exogenous wrench at the end effector
    (zero in nominal runs).

    Returns (q, qd, ok) with ok=False when the state leaves finite range.
    """
    n = q.shape[0]
    ok = True
    tau_ext = np.empty(n)
    rhs = np.empty(n)
    for s in range(n_sub):
        Rb = base_R[s]
        z, pj, c, Jv, Iw, M = _dynamics_core(
            q, origins, axes, mount_R, mount_p, coms, masses, inertias, rotor
        )
        # end-effector position along the chain (reuse the frame pass)
        zree, pjee, Rjee, p_ee_b, R_ee = chain_frames(
            q, origins, axes, mount_R, mount_p, ee_offset
        )
        # world end-effector state under the prescribed base motion
        lever = Rb @ p_ee_b
        p_w = base_p[s] + lever
        # v_w = v_base + w x lever + Rb * (Jv_ee qdot)
        vrel = np.zeros(3)
        for i in range(n):
            lx = p_ee_b[0] - pjee[i, 0]
            ly = p_ee_b[1] - pjee[i, 1]
            lz = p_ee_b[2] - pjee[i, 2]
            vrel[0] += (zree[i, 1] * lz - zree[i, 2] * ly) * qd[i]
            vrel[1] += (zree[i, 2] * lx - zree[i, 0] * lz) * qd[i]
            vrel[2] += (zree[i, 0] * ly - zree[i, 1] * lx) * qd[i]
        vrel_w = Rb @ vrel
        wb = base_w[s]
        v_w = np.empty(3)
        v_w[0] = base_v[s, 0] + wb[1] * lever[2] - wb[2] * lever[1] + vrel_w[0]
        v_w[1] = base_v[s, 1] + wb[2] * lever[0] - wb[0] * lever[2] + vrel_w[1]
        v_w[2] = base_v[s, 2] + wb[0] * lever[1] - wb[1] * lever[0] + vrel_w[2]
        # external wrench on the end effector, world frame
        fx = f_dist[s, 0]
        fy = f_dist[s, 1]
        fz = f_dist[s, 2]
        mx = f_dist[s, 3]
        my = f_dist[s, 4]
        mz = f_dist[s, 5]
        if wall_on:
            fc = contact_force(p_w, v_w, wall_y, wall_k, wall_b, wall_mu)
            fx += fc[0]
            fy += fc[1]
            fz += fc[2]
        # rotate into the body frame: fb = Rb^T f
        fbx = Rb[0, 0] * fx + Rb[1, 0] * fy + Rb[2, 0] * fz
        fby = Rb[0, 1] * fx + Rb[1, 1] * fy + Rb[2, 1] * fz
        fbz = Rb[0, 2] * fx + Rb[1, 2] * fy + Rb[2, 2] * fz
        mbx = Rb[0, 0] * mx + Rb[1, 0] * my + Rb[2, 0] * mz
        mby = Rb[0, 1] * mx + Rb[1, 1] * my + Rb[2, 1] * mz
        mbz = Rb[0, 2] * mx + Rb[1, 2] * my + Rb[2, 2] * mz
        for i in range(n):
            lx = p_ee_b[0] - pjee[i, 0]
            ly = p_ee_b[1] - pjee[i, 1]
            lz = p_ee_b[2] - pjee[i, 2]
            jvx = zree[i, 1] * lz - zree[i, 2] * ly
            jvy = zree[i, 2] * lx - zree[i, 0] * lz
            jvz = zree[i, 0] * ly - zree[i, 1] * lx
            tau_ext[i] = (
                jvx * fbx
                + jvy * fby
                + jvz * fbz
                + zree[i, 0] * mbx
                + zree[i, 1] * mby
                + zree[i, 2] * mbz
            )
        # gravity expressed in the body frame
        gbx = Rb[0, 0] * gravity[0] + Rb[1, 0] * gravity[1] + Rb[2, 0] * gravity[2]
        gby = Rb[0, 1] * gravity[0] + Rb[1, 1] * gravity[1] + Rb[2, 1] * gravity[2]
        gbz = Rb[0, 2] * gravity[0] + Rb[1, 2] * gravity[1] + Rb[2, 2] * gravity[2]
        gb = np.empty(3)
        gb[0] = gbx
        gb[1] = gby
        gb[2] = gbz
        dM = np.zeros((n, n, n))
        _partials_core(z, pj, c, Jv, Iw, masses, dM)
        G = gravity_from_core(z, pj, c, masses, gb)
        # rhs = tau + tau_ext + friction - C qd - G
        for a in range(n):
            cqd = 0.0
            for b in range(n):
                acc = 0.0
                for k in range(n):
                    acc += (dM[k, a, b] + dM[b, a, k] - dM[a, b, k]) * qd[k]
                cqd += 0.5 * acc * qd[b]
            fric = -(viscous[a] * qd[a] + coulomb[a] * np.tanh(qd[a] / 0.01))
            rhs[a] = tau[a] + tau_ext[a] + fric - cqd - G[a]
        qdd = np.linalg.solve(M, rhs)
        fin = True
        for i in range(n):
            qd[i] = qd[i] + dt * qdd[i]
            q[i] = q[i] + dt * qd[i]
            if not (np.isfinite(q[i]) and np.isfinite(qd[i])):
                fin = False
        if not fin:
            ok = False
            break
    return q, qd, ok
