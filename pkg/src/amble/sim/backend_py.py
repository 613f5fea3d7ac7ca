"""Pure-python planar articulated dynamics (reference backend).

Mirrors the compiled kernel operation for operation: composite mass matrix
from link Jacobians, velocity-product and gravity terms from the kinematics
recursion, penalty ground contact with a Coulomb friction cap, PD actuation,
and semi-implicit Euler / classic Runge-Kutta integration.  Used whenever the
compiled extension is unavailable and as the comparison point in tests and
the benchmark.

Torque modes: 0 = PD servo on the held target, 1 = passive (zero torque),
2 = joint viscous damping only.
"""

from __future__ import annotations

import numpy as np

from .modelpack import ModelPack

BACKEND_NAME = "python"

TORQUE_PD = 0
TORQUE_PASSIVE = 1
TORQUE_DAMPING = 2

INTEGRATOR_EULER = 0
INTEGRATOR_RK4 = 1


class PlanarSim:
    """Single-robot dynamics stepper bound to one packed model instance."""

    backend_name = BACKEND_NAME

    def __init__(self, pack: ModelPack):
        self.pack = pack
        self.nq = pack.nq

    # -- kinematics ---------------------------------------------------------

    def _fk(self, q: np.ndarray, qd: np.ndarray):
        """Per-link angle, origin, angular velocity, origin velocity and the
        origin acceleration with all generalized accelerations frozen at 0."""
        p = self.pack
        L = p.n_links
        ang = np.empty(L)
        orig = np.empty((L, 2))
        angvel = np.empty(L)
        origvel = np.empty((L, 2))
        bias = np.empty((L, 2))
        ang[0] = q[2]
        orig[0] = q[0:2]
        angvel[0] = qd[2]
        origvel[0] = qd[0:2]
        bias[0] = 0.0
        for i in range(1, L):
            par = p.parent[i]
            c, s = np.cos(ang[par]), np.sin(ang[par])
            ax, az = p.anchor[i]
            aw = np.array([c * ax - s * az, s * ax + c * az])
            orig[i] = orig[par] + aw
            origvel[i] = origvel[par] + angvel[par] * np.array([-aw[1], aw[0]])
            bias[i] = bias[par] - angvel[par] ** 2 * aw
            ang[i] = ang[par] + q[p.link_dof[i]]
            angvel[i] = angvel[par] + qd[p.link_dof[i]]
        return ang, orig, angvel, origvel, bias

    def fk_feet(self, q: np.ndarray) -> np.ndarray:
        """(2, 2) world positions of the foot frames."""
        p = self.pack
        ang, orig, _, _, _ = self._fk(q, np.zeros(self.nq))
        out = np.empty((2, 2))
        for fi in range(2):
            li = p.foot_link[fi]
            c, s = np.cos(ang[li]), np.sin(ang[li])
            ox, oz = p.foot_off[fi]
            out[fi] = orig[li] + np.array([c * ox - s * oz, s * ox + c * oz])
        return out

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        M, _, _ = self._assemble(q, np.zeros(self.nq), TORQUE_PASSIVE,
                                 np.zeros(self.pack.n_joints), 0.0, 0.0, 0.0, 0.0)
        return M

    # -- dynamics -----------------------------------------------------------

    def _torques(self, q, qd, mode, q_target):
        p = self.pack
        qj = q[3:]
        qdj = qd[3:]
        if mode == TORQUE_PD:
            raw = p.strength * (p.kp * (q_target - qj) - p.kd * qdj)
        elif mode == TORQUE_DAMPING:
            raw = -p.kd * qdj
        else:
            raw = np.zeros(p.n_joints)
        return np.clip(raw, -p.tau_lim, p.tau_lim)

    def _assemble(self, q, qd, mode, q_target, k_contact, c_contact, mu, ext_fx):
        p = self.pack
        nq = self.nq
        ang, orig, angvel, origvel, bias = self._fk(q, qd)
        cosang, sinang = np.cos(ang), np.sin(ang)
        # world COM position / velocity / frozen-acceleration per link
        com_w = orig.copy()
        com_v = origvel.copy()
        com_b = bias.copy()
        for i in range(p.n_links):
            cx, cz = p.com[i]
            r = np.array([cosang[i] * cx - sinang[i] * cz,
                          sinang[i] * cx + cosang[i] * cz])
            com_w[i] += r
            com_v[i] += angvel[i] * np.array([-r[1], r[0]])
            com_b[i] += -angvel[i] ** 2 * r
        anchor_pt = orig[p.dof_link]  # anchor origin for each angular dof

        M = np.zeros((nq, nq))
        Q = np.zeros(nq)
        g_vec = np.array([0.0, -p.gravity])
        for i in range(p.n_links):
            J = np.zeros((2, nq))
            J[0, 0] = 1.0
            J[1, 1] = 1.0
            dofs = p.ang_dofs[i, :p.n_ang[i]]
            r = com_w[i] - anchor_pt[dofs]
            J[0, dofs] = -r[:, 1]
            J[1, dofs] = r[:, 0]
            M += p.mass[i] * (J.T @ J)
            M[np.ix_(dofs, dofs)] += p.inertia[i]
            force = p.mass[i] * (g_vec - com_b[i])
            if i == 0 and ext_fx != 0.0:
                force = force + np.array([ext_fx, 0.0])
            Q += J.T @ force

        tau = self._torques(q, qd, mode, q_target)
        Q[3:] += tau

        foot_pos = np.empty((2, 2))
        foot_vel = np.empty((2, 2))
        foot_force = np.zeros((2, 2))
        for fi in range(2):
            li = p.foot_link[fi]
            ox, oz = p.foot_off[fi]
            r = np.array([cosang[li] * ox - sinang[li] * oz,
                          sinang[li] * ox + cosang[li] * oz])
            fp = orig[li] + r
            foot_pos[fi] = fp
            foot_vel[fi] = origvel[li] + angvel[li] * np.array([-r[1], r[0]])
            if k_contact <= 0.0:
                continue
            # heel/toe points carry half the foot's stiffness and damping each
            for ci in range(2):
                cx, cz = p.contact_off[fi, ci]
                rc = np.array([cosang[li] * cx - sinang[li] * cz,
                               sinang[li] * cx + cosang[li] * cz])
                cp = orig[li] + rc
                if cp[1] >= 0.0:
                    continue
                cv = origvel[li] + angvel[li] * np.array([-rc[1], rc[0]])
                fn = 0.5 * k_contact * (-cp[1]) + 0.5 * c_contact * (-cv[1])
                fn = max(fn, 0.0)
                ft = float(np.clip(-0.5 * c_contact * cv[0], -mu * fn, mu * fn))
                foot_force[fi] += (ft, fn)
                Jf = np.zeros((2, nq))
                Jf[0, 0] = 1.0
                Jf[1, 1] = 1.0
                dofs = p.ang_dofs[li, :p.n_ang[li]]
                rr = cp - anchor_pt[dofs]
                Jf[0, dofs] = -rr[:, 1]
                Jf[1, dofs] = rr[:, 0]
                Q += Jf.T @ np.array([ft, fn])
        return M, Q, (tau, foot_pos, foot_vel, foot_force)

    def derivs(self, q, qd, mode, q_target, k_contact, c_contact, mu,
               ext_fx=0.0, fixed_base=False):
        M, Q, extras = self._assemble(q, qd, mode, q_target,
                                      k_contact, c_contact, mu, ext_fx)
        qdd = np.zeros(self.nq)
        if fixed_base:
            qdd[3:] = np.linalg.solve(M[3:, 3:], Q[3:])
        else:
            qdd = np.linalg.solve(M, Q)
        return qdd, extras

    def substeps(self, q, qd, q_target, n, dt, integrator, k_contact,
                 c_contact, mu, ext_fx=0.0, mode=TORQUE_PD, fixed_base=False):
        """Integrate n physics substeps with the joint target held constant.

        Returns the new state plus torque, foot position/velocity and contact
        force evaluated at the final state.
        """
        q = np.array(q, dtype=np.float64)
        qd = np.array(qd, dtype=np.float64)
        args = (mode, q_target, k_contact, c_contact, mu, ext_fx, fixed_base)
        for _ in range(n):
            if integrator == INTEGRATOR_EULER:
                qdd, _ = self.derivs(q, qd, *args)
                qd = qd + dt * qdd
                q = q + dt * qd
            else:
                k1v, _ = self.derivs(q, qd, *args)
                k1q = qd
                k2v, _ = self.derivs(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v, *args)
                k2q = qd + 0.5 * dt * k1v
                k3v, _ = self.derivs(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v, *args)
                k3q = qd + 0.5 * dt * k2v
                k4v, _ = self.derivs(q + dt * k3q, qd + dt * k3v, *args)
                k4q = qd + dt * k3v
                q = q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
                qd = qd + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        _, (tau, foot_pos, foot_vel, foot_force) = self.derivs(q, qd, *args)
        return q, qd, tau, foot_pos, foot_vel, foot_force

    # -- diagnostics --------------------------------------------------------

    def energy(self, q, qd, k_contact=0.0) -> float:
        """Kinetic + gravitational + contact-spring energy."""
        p = self.pack
        M = self.mass_matrix(q)
        ke = 0.5 * float(qd @ M @ qd)
        ang, orig, _, _, _ = self._fk(q, qd)
        pe = 0.0
        for i in range(p.n_links):
            c, s = np.cos(ang[i]), np.sin(ang[i])
            cx, cz = p.com[i]
            pe += p.mass[i] * p.gravity * (orig[i, 1] + s * cx + c * cz)
        spring = 0.0
        if k_contact > 0.0:
            for fi in range(2):
                li = p.foot_link[fi]
                c, s = np.cos(ang[li]), np.sin(ang[li])
                for ci in range(2):
                    cx, cz = p.contact_off[fi, ci]
                    z = orig[li, 1] + s * cx + c * cz
                    pen = max(0.0, -z)
                    spring += 0.25 * k_contact * pen * pen
        return ke + pe + spring


def make_sim(pack: ModelPack) -> PlanarSim:
    return PlanarSim(pack)
