# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled planar articulated dynamics kernel.

Same math and call signatures as backend_py.PlanarSim; see that module for
the reference implementation and documentation.  The kernel keeps the whole
substep loop in C to make desk-scale training runs cheap.
"""

import numpy as np

cimport cython
from libc.math cimport cos, sin, sqrt

DEF MAXL = 16      # links
DEF MAXQ = 19      # generalized coordinates (3 + joints)
DEF MAXJ = 16      # actuated joints
DEF MAXD = 8       # angular dofs on any root-to-link chain
DEF MAXC = 10      # jacobian columns per link (x, z, angular dofs)

BACKEND_NAME = "compiled"

TORQUE_PD = 0
TORQUE_PASSIVE = 1
TORQUE_DAMPING = 2

INTEGRATOR_EULER = 0
INTEGRATOR_RK4 = 1


cdef class PlanarSim:
    """Single-robot dynamics stepper bound to one packed model instance."""

    cdef int nl, nj, nq
    cdef double gravity
    cdef double mass[MAXL]
    cdef double inertia[MAXL]
    cdef double com[MAXL][2]
    cdef double anchor[MAXL][2]
    cdef int parent[MAXL]
    cdef int link_dof[MAXL]
    cdef int ang_dofs[MAXL][MAXD]
    cdef int n_ang[MAXL]
    cdef int dof_link[MAXQ]
    cdef double kp[MAXJ]
    cdef double kd[MAXJ]
    cdef double tau_lim[MAXJ]
    cdef double strength[MAXJ]
    cdef int foot_link[2]
    cdef double foot_off[2][2]
    cdef double contact_off[2][2][2]

    # scratch state for one derivative evaluation
    cdef double ang[MAXL]
    cdef double orig[MAXL][2]
    cdef double angvel[MAXL]
    cdef double origvel[MAXL][2]
    cdef double bias[MAXL][2]
    cdef double tau[MAXJ]
    cdef double foot_pos[2][2]
    cdef double foot_vel[2][2]
    cdef double foot_force[2][2]

    backend_name = BACKEND_NAME

    def __init__(self, pack):
        cdef int i, j, k
        self.nl = pack.n_links
        self.nj = pack.n_joints
        self.nq = 3 + self.nj
        if self.nl > MAXL or self.nq > MAXQ:
            raise ValueError("model too large for the compiled kernel")
        self.gravity = pack.gravity
        for i in range(self.nl):
            self.mass[i] = pack.mass[i]
            self.inertia[i] = pack.inertia[i]
            self.com[i][0] = pack.com[i, 0]
            self.com[i][1] = pack.com[i, 1]
            self.anchor[i][0] = pack.anchor[i, 0]
            self.anchor[i][1] = pack.anchor[i, 1]
            self.parent[i] = pack.parent[i]
            self.link_dof[i] = pack.link_dof[i]
            self.n_ang[i] = pack.n_ang[i]
            for j in range(MAXD):
                self.ang_dofs[i][j] = pack.ang_dofs[i, j]
        for i in range(self.nq):
            self.dof_link[i] = pack.dof_link[i]
        for j in range(self.nj):
            self.kp[j] = pack.kp[j]
            self.kd[j] = pack.kd[j]
            self.tau_lim[j] = pack.tau_lim[j]
            self.strength[j] = pack.strength[j]
        for i in range(2):
            self.foot_link[i] = pack.foot_link[i]
            self.foot_off[i][0] = pack.foot_off[i, 0]
            self.foot_off[i][1] = pack.foot_off[i, 1]
            for k in range(2):
                self.contact_off[i][k][0] = pack.contact_off[i, k, 0]
                self.contact_off[i][k][1] = pack.contact_off[i, k, 1]

    # -- internals ----------------------------------------------------------

    cdef void _fk(self, double* q, double* qd) nogil:
        cdef int i, par
        cdef double c, s, ax, az, awx, awz, w
        self.ang[0] = q[2]
        self.orig[0][0] = q[0]
        self.orig[0][1] = q[1]
        self.angvel[0] = qd[2]
        self.origvel[0][0] = qd[0]
        self.origvel[0][1] = qd[1]
        self.bias[0][0] = 0.0
        self.bias[0][1] = 0.0
        for i in range(1, self.nl):
            par = self.parent[i]
            c = cos(self.ang[par])
            s = sin(self.ang[par])
            ax = self.anchor[i][0]
            az = self.anchor[i][1]
            awx = c * ax - s * az
            awz = s * ax + c * az
            w = self.angvel[par]
            self.orig[i][0] = self.orig[par][0] + awx
            self.orig[i][1] = self.orig[par][1] + awz
            self.origvel[i][0] = self.origvel[par][0] - w * awz
            self.origvel[i][1] = self.origvel[par][1] + w * awx
            self.bias[i][0] = self.bias[par][0] - w * w * awx
            self.bias[i][1] = self.bias[par][1] - w * w * awz
            self.ang[i] = self.ang[par] + q[self.link_dof[i]]
            self.angvel[i] = self.angvel[par] + qd[self.link_dof[i]]

    cdef void _torques(self, double* q, double* qd, int mode, double* q_target) nogil:
        cdef int j
        cdef double raw
        for j in range(self.nj):
            if mode == 0:
                raw = self.strength[j] * (self.kp[j] * (q_target[j] - q[3 + j])
                                          - self.kd[j] * qd[3 + j])
            elif mode == 2:
                raw = -self.kd[j] * qd[3 + j]
            else:
                raw = 0.0
            if raw > self.tau_lim[j]:
                raw = self.tau_lim[j]
            elif raw < -self.tau_lim[j]:
                raw = -self.tau_lim[j]
            self.tau[j] = raw

    cdef int _derivs(self, double* q, double* qd, int mode, double* q_target,
                     double k_contact, double c_contact, double mu,
                     double ext_fx, bint fixed_base, double* qdd) nogil:
        cdef double M[MAXQ][MAXQ]
        cdef double Q[MAXQ]
        cdef double colx[MAXC]
        cdef double colz[MAXC]
        cdef int colidx[MAXC]
        cdef int i, a, b, d, fi, ci, li, ncols, n, off
        cdef double c, s, rx, rz, cwx, cwz, cvx, cvz, cbx, cbz, w, m
        cdef double fxv, fzv, dot
        cdef double px, pz, vx, vz, fn, ft, cap
        cdef double apx[MAXQ]
        cdef double apz[MAXQ]

        self._fk(q, qd)
        cdef int nq = self.nq
        for a in range(nq):
            Q[a] = 0.0
            for b in range(nq):
                M[a][b] = 0.0
        for d in range(nq):
            li = self.dof_link[d]
            apx[d] = self.orig[li][0]
            apz[d] = self.orig[li][1]

        for i in range(self.nl):
            c = cos(self.ang[i])
            s = sin(self.ang[i])
            w = self.angvel[i]
            m = self.mass[i]
            rx = c * self.com[i][0] - s * self.com[i][1]
            rz = s * self.com[i][0] + c * self.com[i][1]
            cwx = self.orig[i][0] + rx
            cwz = self.orig[i][1] + rz
            cbx = self.bias[i][0] - w * w * rx
            cbz = self.bias[i][1] - w * w * rz
            # jacobian columns of the COM: x, z translation then angular dofs
            colidx[0] = 0
            colx[0] = 1.0
            colz[0] = 0.0
            colidx[1] = 1
            colx[1] = 0.0
            colz[1] = 1.0
            ncols = 2
            for a in range(self.n_ang[i]):
                d = self.ang_dofs[i][a]
                colidx[ncols] = d
                colx[ncols] = -(cwz - apz[d])
                colz[ncols] = cwx - apx[d]
                ncols += 1
            for a in range(ncols):
                for b in range(a, ncols):
                    dot = m * (colx[a] * colx[b] + colz[a] * colz[b])
                    M[colidx[a]][colidx[b]] += dot
                    if b != a:
                        M[colidx[b]][colidx[a]] += dot
            for a in range(self.n_ang[i]):
                for b in range(self.n_ang[i]):
                    M[self.ang_dofs[i][a]][self.ang_dofs[i][b]] += self.inertia[i]
            fxv = -m * cbx
            fzv = m * (-self.gravity) - m * cbz
            if i == 0:
                fxv += ext_fx
            for a in range(ncols):
                Q[colidx[a]] += colx[a] * fxv + colz[a] * fzv

        self._torques(q, qd, mode, q_target)
        for i in range(self.nj):
            Q[3 + i] += self.tau[i]

        for fi in range(2):
            li = self.foot_link[fi]
            c = cos(self.ang[li])
            s = sin(self.ang[li])
            w = self.angvel[li]
            rx = c * self.foot_off[fi][0] - s * self.foot_off[fi][1]
            rz = s * self.foot_off[fi][0] + c * self.foot_off[fi][1]
            self.foot_pos[fi][0] = self.orig[li][0] + rx
            self.foot_pos[fi][1] = self.orig[li][1] + rz
            self.foot_vel[fi][0] = self.origvel[li][0] - w * rz
            self.foot_vel[fi][1] = self.origvel[li][1] + w * rx
            self.foot_force[fi][0] = 0.0
            self.foot_force[fi][1] = 0.0
            if k_contact <= 0.0:
                continue
            for ci in range(2):
                rx = c * self.contact_off[fi][ci][0] - s * self.contact_off[fi][ci][1]
                rz = s * self.contact_off[fi][ci][0] + c * self.contact_off[fi][ci][1]
                px = self.orig[li][0] + rx
                pz = self.orig[li][1] + rz
                if pz >= 0.0:
                    continue
                vx = self.origvel[li][0] - w * rz
                vz = self.origvel[li][1] + w * rx
                fn = 0.5 * k_contact * (-pz) + 0.5 * c_contact * (-vz)
                if fn < 0.0:
                    fn = 0.0
                ft = -0.5 * c_contact * vx
                cap = mu * fn
                if ft > cap:
                    ft = cap
                elif ft < -cap:
                    ft = -cap
                self.foot_force[fi][0] += ft
                self.foot_force[fi][1] += fn
                Q[0] += ft
                Q[1] += fn
                for a in range(self.n_ang[li]):
                    d = self.ang_dofs[li][a]
                    Q[d] += -(pz - apz[d]) * ft + (px - apx[d]) * fn

        # cholesky solve (full system, or the joint block for a fixed base)
        off = 3 if fixed_base else 0
        n = nq - off
        if fixed_base:
            qdd[0] = 0.0
            qdd[1] = 0.0
            qdd[2] = 0.0
        if self._chol_solve(&M[0][0], &Q[0], n, off) != 0:
            return 1
        for a in range(n):
            qdd[off + a] = Q[off + a]
        return 0

    cdef int _chol_solve(self, double* M, double* rhs, int n, int off) nogil:
        """In-place Cholesky solve of the trailing n x n block of M (row stride
        MAXQ) against rhs[off:off+n]."""
        cdef double L[MAXQ][MAXQ]
        cdef double y[MAXQ]
        cdef int i, j, k
        cdef double acc
        for i in range(n):
            for j in range(i + 1):
                acc = M[(off + i) * MAXQ + off + j]
                for k in range(j):
                    acc -= L[i][k] * L[j][k]
                if i == j:
                    if acc <= 0.0:
                        return 1
                    L[i][i] = sqrt(acc)
                else:
                    L[i][j] = acc / L[j][j]
        for i in range(n):
            acc = rhs[off + i]
            for k in range(i):
                acc -= L[i][k] * y[k]
            y[i] = acc / L[i][i]
        for i in range(n - 1, -1, -1):
            acc = y[i]
            for k in range(i + 1, n):
                acc -= L[k][i] * rhs[off + k]
            rhs[off + i] = acc / L[i][i]
        return 0

    # -- public api (mirrors backend_py.PlanarSim) ---------------------------

    def fk_feet(self, q):
        cdef double qbuf[MAXQ]
        cdef double zbuf[MAXQ]
        cdef int i
        qa = np.ascontiguousarray(q, dtype=np.float64)
        for i in range(self.nq):
            qbuf[i] = qa[i]
            zbuf[i] = 0.0
        self._fk(qbuf, zbuf)
        out = np.empty((2, 2))
        cdef int fi, li
        cdef double c, s
        for fi in range(2):
            li = self.foot_link[fi]
            c = cos(self.ang[li])
            s = sin(self.ang[li])
            out[fi, 0] = self.orig[li][0] + c * self.foot_off[fi][0] - s * self.foot_off[fi][1]
            out[fi, 1] = self.orig[li][1] + s * self.foot_off[fi][0] + c * self.foot_off[fi][1]
        return out

    def mass_matrix(self, q):
        # assemble through a passive derivative call, then read the matrix back
        # via energy identities is wasteful; do a dedicated assembly instead
        cdef double qbuf[MAXQ]
        cdef double zbuf[MAXQ]
        cdef int i, a, b, d, li, ncols
        cdef double colx[MAXC]
        cdef double colz[MAXC]
        cdef int colidx[MAXC]
        cdef double c, s, rx, rz, cwx, cwz, m, dot
        qa = np.ascontiguousarray(q, dtype=np.float64)
        for i in range(self.nq):
            qbuf[i] = qa[i]
            zbuf[i] = 0.0
        self._fk(qbuf, zbuf)
        out = np.zeros((self.nq, self.nq))
        for i in range(self.nl):
            c = cos(self.ang[i])
            s = sin(self.ang[i])
            m = self.mass[i]
            rx = c * self.com[i][0] - s * self.com[i][1]
            rz = s * self.com[i][0] + c * self.com[i][1]
            cwx = self.orig[i][0] + rx
            cwz = self.orig[i][1] + rz
            colidx[0] = 0
            colx[0] = 1.0
            colz[0] = 0.0
            colidx[1] = 1
            colx[1] = 0.0
            colz[1] = 1.0
            ncols = 2
            for a in range(self.n_ang[i]):
                d = self.ang_dofs[i][a]
                li = self.dof_link[d]
                colidx[ncols] = d
                colx[ncols] = -(cwz - self.orig[li][1])
                colz[ncols] = cwx - self.orig[li][0]
                ncols += 1
            for a in range(ncols):
                for b in range(ncols):
                    dot = m * (colx[a] * colx[b] + colz[a] * colz[b])
                    out[colidx[a], colidx[b]] += dot
            for a in range(self.n_ang[i]):
                for b in range(self.n_ang[i]):
                    out[self.ang_dofs[i][a], self.ang_dofs[i][b]] += self.inertia[i]
        return out

    def derivs(self, q, qd, int mode, q_target, double k_contact,
               double c_contact, double mu, double ext_fx=0.0,
               bint fixed_base=False):
        cdef double qbuf[MAXQ]
        cdef double qdbuf[MAXQ]
        cdef double tbuf[MAXJ]
        cdef double qdd[MAXQ]
        cdef int i
        qa = np.ascontiguousarray(q, dtype=np.float64)
        qda = np.ascontiguousarray(qd, dtype=np.float64)
        ta = np.ascontiguousarray(q_target, dtype=np.float64)
        for i in range(self.nq):
            qbuf[i] = qa[i]
            qdbuf[i] = qda[i]
        for i in range(self.nj):
            tbuf[i] = ta[i]
        if self._derivs(qbuf, qdbuf, mode, tbuf, k_contact, c_contact, mu,
                        ext_fx, fixed_base, qdd) != 0:
            raise ArithmeticError("mass matrix not positive definite")
        return (np.array([qdd[i] for i in range(self.nq)]), self._extras())

    cdef _extras(self):
        tau = np.array([self.tau[i] for i in range(self.nj)])
        fp = np.array([[self.foot_pos[0][0], self.foot_pos[0][1]],
                       [self.foot_pos[1][0], self.foot_pos[1][1]]])
        fv = np.array([[self.foot_vel[0][0], self.foot_vel[0][1]],
                       [self.foot_vel[1][0], self.foot_vel[1][1]]])
        ff = np.array([[self.foot_force[0][0], self.foot_force[0][1]],
                       [self.foot_force[1][0], self.foot_force[1][1]]])
        return (tau, fp, fv, ff)

    def substeps(self, q, qd, q_target, int n, double dt, int integrator,
                 double k_contact, double c_contact, double mu,
                 double ext_fx=0.0, int mode=0, bint fixed_base=False):
        cdef double qbuf[MAXQ]
        cdef double qdbuf[MAXQ]
        cdef double tbuf[MAXJ]
        cdef double qdd[MAXQ]
        cdef double k1q[MAXQ]
        cdef double k1v[MAXQ]
        cdef double k2q[MAXQ]
        cdef double k2v[MAXQ]
        cdef double k3q[MAXQ]
        cdef double k3v[MAXQ]
        cdef double k4q[MAXQ]
        cdef double k4v[MAXQ]
        cdef double tmpq[MAXQ]
        cdef double tmpv[MAXQ]
        cdef int i, step, bad
        qa = np.ascontiguousarray(q, dtype=np.float64)
        qda = np.ascontiguousarray(qd, dtype=np.float64)
        ta = np.ascontiguousarray(q_target, dtype=np.float64)
        for i in range(self.nq):
            qbuf[i] = qa[i]
            qdbuf[i] = qda[i]
        for i in range(self.nj):
            tbuf[i] = ta[i]
        bad = 0
        with nogil:
            for step in range(n):
                if integrator == 0:
                    if self._derivs(qbuf, qdbuf, mode, tbuf, k_contact, c_contact,
                                    mu, ext_fx, fixed_base, qdd) != 0:
                        bad = 1
                        break
                    for i in range(self.nq):
                        qdbuf[i] += dt * qdd[i]
                        qbuf[i] += dt * qdbuf[i]
                else:
                    if self._derivs(qbuf, qdbuf, mode, tbuf, k_contact, c_contact,
                                    mu, ext_fx, fixed_base, k1v) != 0:
                        bad = 1
                        break
                    for i in range(self.nq):
                        k1q[i] = qdbuf[i]
                        tmpq[i] = qbuf[i] + 0.5 * dt * k1q[i]
                        tmpv[i] = qdbuf[i] + 0.5 * dt * k1v[i]
                    if self._derivs(tmpq, tmpv, mode, tbuf, k_contact, c_contact,
                                    mu, ext_fx, fixed_base, k2v) != 0:
                        bad = 1
                        break
                    for i in range(self.nq):
                        k2q[i] = qdbuf[i] + 0.5 * dt * k1v[i]
                        tmpq[i] = qbuf[i] + 0.5 * dt * k2q[i]
                        tmpv[i] = qdbuf[i] + 0.5 * dt * k2v[i]
                    if self._derivs(tmpq, tmpv, mode, tbuf, k_contact, c_contact,
                                    mu, ext_fx, fixed_base, k3v) != 0:
                        bad = 1
                        break
                    for i in range(self.nq):
                        k3q[i] = qdbuf[i] + 0.5 * dt * k2v[i]
                        tmpq[i] = qbuf[i] + dt * k3q[i]
                        tmpv[i] = qdbuf[i] + dt * k3v[i]
                    if self._derivs(tmpq, tmpv, mode, tbuf, k_contact, c_contact,
                                    mu, ext_fx, fixed_base, k4v) != 0:
                        bad = 1
                        break
                    for i in range(self.nq):
                        k4q[i] = qdbuf[i] + dt * k3v[i]
                        qbuf[i] += dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i])
                        qdbuf[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            if bad == 0:
                if self._derivs(qbuf, qdbuf, mode, tbuf, k_contact, c_contact,
                                mu, ext_fx, fixed_base, qdd) != 0:
                    bad = 1
        if bad:
            raise ArithmeticError("mass matrix not positive definite")
        q_out = np.array([qbuf[i] for i in range(self.nq)])
        qd_out = np.array([qdbuf[i] for i in range(self.nq)])
        tau, fp, fv, ff = self._extras()
        return q_out, qd_out, tau, fp, fv, ff

    def energy(self, q, qd, double k_contact=0.0):
        cdef int i, fi, ci, li
        cdef double c, s, pz, pen
        qa = np.ascontiguousarray(q, dtype=np.float64)
        qda = np.ascontiguousarray(qd, dtype=np.float64)
        M = self.mass_matrix(qa)
        ke = 0.5 * float(qda @ M @ qda)
        pe = 0.0
        for i in range(self.nl):
            c = cos(self.ang[i])
            s = sin(self.ang[i])
            pe += self.mass[i] * self.gravity * (
                self.orig[i][1] + s * self.com[i][0] + c * self.com[i][1])
        spring = 0.0
        if k_contact > 0.0:
            for fi in range(2):
                li = self.foot_link[fi]
                c = cos(self.ang[li])
                s = sin(self.ang[li])
                for ci in range(2):
                    pz = self.orig[li][1] + s * self.contact_off[fi][ci][0] \
                        + c * self.contact_off[fi][ci][1]
                    pen = -pz if pz < 0.0 else 0.0
                    spring += 0.25 * k_contact * pen * pen
        return ke + pe + spring


def make_sim(pack):
    return PlanarSim(pack)
