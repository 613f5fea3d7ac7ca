"""Flat array form of a RobotModel consumed by the dynamics backends.

Links are re-ordered topologically (parent before child) and the per-link
ancestor lists of angular generalized coordinates are precomputed, so both
backends can run the kinematics recursion with plain index arithmetic.

Generalized coordinates: ``[root_x, root_z, pitch, joint_0 .. joint_{J-1}]``
in the model's joint order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError
from ..model import RobotModel

MAX_DEPTH = 8  # angular dofs along any root-to-link chain (pitch + joints)


@dataclass
class ModelPack:
    n_links: int
    n_joints: int
    mass: np.ndarray        # (L,)
    inertia: np.ndarray     # (L,)
    com: np.ndarray         # (L, 2) in link frame
    parent: np.ndarray      # (L,) int, -1 for the root
    anchor: np.ndarray      # (L, 2) joint anchor in the parent frame
    link_dof: np.ndarray    # (L,) int generalized-coordinate index, -1 for root
    ang_dofs: np.ndarray    # (L, MAX_DEPTH) int, padded with -1
    n_ang: np.ndarray       # (L,) int count of valid entries in ang_dofs
    dof_link: np.ndarray    # (3 + J,) int link whose origin anchors the dof
    kp: np.ndarray          # (J,)
    kd: np.ndarray
    tau_lim: np.ndarray
    strength: np.ndarray    # (J,) motor strength multipliers
    foot_link: np.ndarray   # (2,) int, order (left, right)
    foot_off: np.ndarray    # (2, 2) foot frame offset in the link frame
    contact_off: np.ndarray  # (2, 2, 2) heel/toe point offsets, each at half stiffness
    gravity: float

    @property
    def nq(self) -> int:
        return 3 + self.n_joints


def pack_model(model: RobotModel, strength: np.ndarray | None = None) -> ModelPack:
    names = [l.name for l in model.links]
    by_child = {j.child: j for j in model.joints}

    # breadth-first order from the root guarantees parent-before-child
    order = [names[0]]
    remaining = set(names[1:])
    while remaining:
        grew = False
        for joint in model.joints:
            if joint.parent in order and joint.child in remaining:
                order.append(joint.child)
                remaining.discard(joint.child)
                grew = True
        if not grew:
            raise ModelError("link tree is not connected")
    slot = {name: i for i, name in enumerate(order)}

    L = len(model.links)
    J = len(model.joints)
    mass = np.empty(L)
    inertia = np.empty(L)
    com = np.empty((L, 2))
    parent = np.full(L, -1, dtype=np.int64)
    anchor = np.zeros((L, 2))
    link_dof = np.full(L, -1, dtype=np.int64)
    for link in model.links:
        i = slot[link.name]
        mass[i] = link.mass
        inertia[i] = link.inertia
        com[i] = link.com
        if link.name in by_child:
            joint = by_child[link.name]
            parent[i] = slot[joint.parent]
            anchor[i] = joint.anchor
            link_dof[i] = 3 + model.joint_index(joint.name)

    ang_dofs = np.full((L, MAX_DEPTH), -1, dtype=np.int64)
    n_ang = np.zeros(L, dtype=np.int64)
    for i in range(L):
        dofs = []
        k = i
        while k >= 0:
            if link_dof[k] >= 0:
                dofs.append(int(link_dof[k]))
            k = int(parent[k])
        dofs.append(2)  # base pitch rotates every link
        dofs.reverse()
        if len(dofs) > MAX_DEPTH:
            raise ModelError("kinematic chain deeper than supported")
        ang_dofs[i, :len(dofs)] = dofs
        n_ang[i] = len(dofs)

    dof_link = np.zeros(3 + J, dtype=np.int64)
    for i in range(L):
        if link_dof[i] >= 0:
            dof_link[link_dof[i]] = i
    dof_link[2] = 0  # pitch pivots about the root origin

    foot_link = np.empty(2, dtype=np.int64)
    foot_off = np.empty((2, 2))
    contact_off = np.empty((2, 2, 2))
    for fi, side in enumerate(("left", "right")):
        frame = model.foot_frame(side)
        foot_link[fi] = slot[frame.link]
        foot_off[fi] = frame.offset
        half = frame.contact_half_extent
        contact_off[fi, 0] = (frame.offset[0] - half, frame.offset[1])
        contact_off[fi, 1] = (frame.offset[0] + half, frame.offset[1])

    if strength is None:
        strength = np.ones(J)
    return ModelPack(
        n_links=L, n_joints=J,
        mass=mass, inertia=inertia, com=com, parent=parent, anchor=anchor,
        link_dof=link_dof, ang_dofs=ang_dofs, n_ang=n_ang, dof_link=dof_link,
        kp=model.joint_array("kp"), kd=model.joint_array("kd"),
        tau_lim=model.joint_array("torque_limit"),
        strength=np.asarray(strength, dtype=np.float64),
        foot_link=foot_link, foot_off=foot_off, contact_off=contact_off,
        gravity=model.gravity,
    )
