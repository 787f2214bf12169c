"""
Force evaluation, time stepping and settling.

Cables are one-sided spring-dampers, the ground is a penalty surface with
regularized Coulomb friction, and rigid groups are enforced by projecting their
nodes onto the best-fit rigid motion of their reference shape after every step.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .exceptions import ConfigError, DivergenceError, SettleTimeout, StructureError, config_key
from .structure import DEGENERATE_LENGTH, SimState

logger = logging.getLogger(__name__)

_degenerate_warned = set()


@dataclass(frozen=True)
class Obstacle:
    """Box standing on the ground; raises the contact surface over its footprint."""

    center: Tuple[float, float]
    half_size: Tuple[float, float]
    height: float

    def __post_init__(self):
        if self.height < 0 or min(self.half_size) <= 0:
            raise ConfigError("obstacle needs a positive footprint and a non-negative height", key="obstacle")

    def covers(self, xy):
        offset = np.abs(np.asarray(xy, dtype=float) - self.center)
        return np.all(offset <= self.half_size, axis=-1)


@dataclass(frozen=True)
class SimParams:
    dt: float = 1e-4
    gravity: float = 9.81
    ground_stiffness: float = 2e4
    ground_damping: float = 50.0
    friction_coefficient: float = 0.6
    friction_regularization_velocity: float = 1e-3
    settle_kinetic_tol: float = 1e-5
    settle_window: float = 0.25
    settle_t_max: float = 10.0
    max_velocity: float = 100.0
    obstacle: Optional[Obstacle] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("time step must be positive", key="sim.dt")
        for name in ("ground_stiffness", "ground_damping", "friction_coefficient", "settle_window"):
            if getattr(self, name) < 0:
                raise ConfigError("must not be negative", key=f"sim.{config_key(name)}")
        for name in ("friction_regularization_velocity", "settle_kinetic_tol", "settle_t_max", "max_velocity"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be positive", key=f"sim.{config_key(name)}")


@dataclass(frozen=True)
class CableForce:
    tension: float
    force_a: np.ndarray
    force_b: np.ndarray


def _warn_degenerate(cable_id):
    if cable_id not in _degenerate_warned:
        _degenerate_warned.add(cable_id)
        logger.warning(f"cable {cable_id} has coincident endpoints, applying no force")


def cable_force(cable, state, rest_length=None):
    """
    Tension of one cable and the forces it applies to its endpoints.

    ``T = k (x - r) - c v`` while the cable is stretched, where ``v`` is the speed at
    which the endpoints approach each other. Tension is clamped at zero: a slack
    cable (``x <= r``) exerts nothing and damping never pushes.
    """
    a, b = (state.index[e] for e in cable.endpoints)
    vector = state.positions[b] - state.positions[a]
    length = np.linalg.norm(vector)
    zero = np.zeros(3)
    if length < DEGENERATE_LENGTH:
        _warn_degenerate(cable.id)
        return CableForce(0.0, zero, zero)
    direction = vector / length
    rest = cable.rest_length if rest_length is None else rest_length
    elastic = cable.k * (length - rest)
    if elastic <= 0:
        return CableForce(0.0, zero, zero)
    closing = direction @ (state.velocities[a] - state.velocities[b])
    tension = max(0.0, elastic - cable.c * closing)
    return CableForce(float(tension), tension * direction, -tension * direction)


def cable_tensions(graph, state):
    """Tensions of every cable (aligned with ``graph.cables``) and their unit directions."""
    topo = graph.topology
    vector = state.positions[topo.cable_b] - state.positions[topo.cable_a]
    length = np.linalg.norm(vector, axis=1)
    valid = length >= DEGENERATE_LENGTH
    direction = np.zeros_like(vector)
    direction[valid] = vector[valid] / length[valid, None]
    if not valid.all():
        for i in np.flatnonzero(~valid):
            _warn_degenerate(graph.cables[i].id)
    closing = np.einsum("ij,ij->i", direction, state.velocities[topo.cable_a] - state.velocities[topo.cable_b])
    elastic = topo.k * (length - state.rest_lengths)
    tension = np.where(elastic > 0, np.maximum(elastic - topo.c * closing, 0.0), 0.0)
    tension[~valid] = 0.0
    return tension, direction


def ground_level(xy, params):
    xy = np.asarray(xy, dtype=float)
    level = np.zeros(xy.shape[:-1])
    if params.obstacle is not None:
        level = np.where(params.obstacle.covers(xy), params.obstacle.height, level)
    return level


def ground_contact_forces(positions, velocities, params, friction=True):
    """
    Penalty normal force plus regularized Coulomb friction for every node.

    Returns the ``(N, 3)`` contact forces and the ``(N,)`` normal force magnitudes;
    with ``friction`` off the tangential components stay zero.
    """
    penetration = ground_level(positions[:, :2], params) - positions[:, 2]
    normal = np.zeros(len(positions))
    touching = penetration > 0
    normal[touching] = np.maximum(
        params.ground_stiffness * penetration[touching] - params.ground_damping * velocities[touching, 2], 0.0
    )
    forces = np.zeros_like(positions)
    forces[:, 2] = normal
    if not friction:
        return forces, normal
    tangential = velocities[:, :2]
    speed = np.linalg.norm(tangential, axis=1)
    sliding = touching & (speed > 0)
    if sliding.any():
        limit = params.friction_coefficient * normal[sliding]
        magnitude = limit * np.minimum(speed[sliding] / params.friction_regularization_velocity, 1.0)
        forces[sliding, :2] = -magnitude[:, None] * tangential[sliding] / speed[sliding, None]
    return forces, normal


def ground_contact_force(node_id, state, params):
    row = state.index[node_id]
    forces, _ = ground_contact_forces(state.positions[row : row + 1], state.velocities[row : row + 1], params)
    return forces[0]


def _accumulate(graph, state, params, friction=True):
    topo = graph.topology
    tension, direction = cable_tensions(graph, state)
    forces = np.asarray(topo.incidence @ (tension[:, None] * direction))
    forces[:, 2] -= topo.masses * params.gravity
    contact, normal = ground_contact_forces(state.positions, state.velocities, params, friction=friction)
    forces += contact
    if not np.isfinite(forces).all():
        bad = state.node_ids[int(np.flatnonzero(~np.isfinite(forces).all(axis=1))[0])]
        raise DivergenceError(f"non-finite force on node {bad} at t={state.time:.4f} s")
    return forces, normal


def net_forces(graph, state, params):
    """
    Gravity, cable and ground forces summed per node, shape ``(N, 3)``.

    Forces on anchored nodes are reported here; the integrator never applies them.
    """
    forces, _ = _accumulate(graph, state, params)
    return forces


def kinetic_energy(graph, state):
    topo = graph.topology
    movable = topo.inv_mass > 0
    return float(0.5 * np.sum(topo.masses[movable] * np.sum(state.velocities[movable] ** 2, axis=1)))


def equilibrium_residual(graph, state, params):
    """
    Largest unbalanced force (N) on any body or free node.

    Constraint forces inside a rigid body cancel, so bodies are judged by the sum
    of the forces on their members.
    """
    topo = graph.topology
    forces = net_forces(graph, state, params)
    residuals = [np.linalg.norm(forces[topo.free_rows], axis=1)]
    if topo.body_count:
        per_body = topo.aggregate @ forces[topo.body_rows]
        residuals.append(np.linalg.norm(per_body, axis=1))
    values = np.concatenate(residuals)
    return float(values.max()) if values.size else 0.0


def _project_bodies(topo, predicted, theta):
    local = topo.local_reference(theta)
    points = predicted[topo.body_rows]
    weights = topo.row_mass[:, None]
    centroid = (topo.aggregate @ (weights * points)) / topo.body_mass[:, None]
    offset = points - centroid[topo.body_of_row]
    outer = (weights[:, :, None] * offset[:, :, None] * local[:, None, :]).reshape(-1, 9)
    covariance = np.asarray(topo.aggregate @ outer).reshape(-1, 3, 3)
    u, _, vt = np.linalg.svd(covariance)
    u[:, :, 2] *= np.sign(np.linalg.det(u @ vt))[:, None]
    rotation = u @ vt
    goal = centroid[topo.body_of_row] + np.einsum("nij,nj->ni", rotation[topo.body_of_row], local)
    return goal, centroid


def _apply_friction(topo, positions, velocities, normal, centroid, params):
    """
    Friction impulses, integrated implicitly against the effective mass at each contact.

    The regularized Coulomb law is the one :func:`ground_contact_forces` evaluates;
    solving it implicitly keeps stiff sticking friction stable at the default step.
    """
    dt = params.dt
    contacts = np.flatnonzero((normal > 0) & (topo.inv_mass > 0))
    if contacts.size == 0 or params.friction_coefficient == 0:
        return
    tangential = velocities[contacts, :2]
    speed = np.linalg.norm(tangential, axis=1)
    moving = speed > 0
    contacts, tangential, speed = contacts[moving], tangential[moving], speed[moving]
    if contacts.size == 0:
        return
    direction = np.zeros((len(contacts), 3))
    direction[:, :2] = tangential / speed[:, None]

    body = topo.body_of_node[contacts]
    effective = topo.masses[contacts].copy()
    in_body = body >= 0
    if in_body.any():
        inverse_inertia = _inverse_inertia(topo, positions, centroid, np.unique(body[in_body]))
        lever = positions[contacts[in_body]] - centroid[body[in_body]]
        arm = np.cross(lever, direction[in_body])
        angular = np.einsum("ni,nij,nj->n", arm, inverse_inertia[body[in_body]], arm)
        effective[in_body] = 1.0 / (1.0 / topo.body_mass[body[in_body]] + angular)
        share = np.bincount(body[in_body], minlength=topo.body_count)
        effective[in_body] /= share[body[in_body]]

    damping = params.friction_coefficient * normal[contacts] / params.friction_regularization_velocity
    magnitude = np.minimum(
        effective * speed * damping * dt / (effective + damping * dt),
        params.friction_coefficient * normal[contacts] * dt,
    )
    impulse = -magnitude[:, None] * direction

    free = ~in_body
    if free.any():
        delta = impulse[free] / topo.masses[contacts[free], None]
        velocities[contacts[free]] += delta
        positions[contacts[free]] += dt * delta
    if in_body.any():
        linear = np.zeros((topo.body_count, 3))
        torque = np.zeros((topo.body_count, 3))
        np.add.at(linear, body[in_body], impulse[in_body])
        np.add.at(torque, body[in_body], np.cross(lever, impulse[in_body]))
        spin = np.einsum("bij,bj->bi", inverse_inertia, torque)
        rows = topo.body_rows
        arm_rows = positions[rows] - centroid[topo.body_of_row]
        delta = linear[topo.body_of_row] / topo.body_mass[topo.body_of_row, None]
        delta += np.cross(spin[topo.body_of_row], arm_rows)
        velocities[rows] += delta
        positions[rows] += dt * delta


def _inverse_inertia(topo, positions, centroid, bodies):
    """Inverse inertia tensors about the centroids; zero for bodies not in ``bodies``."""
    member = np.isin(topo.body_of_row, bodies)
    offset = positions[topo.body_rows[member]] - centroid[topo.body_of_row[member]]
    squared = np.einsum("ni,ni->n", offset, offset)
    inertia = squared[:, None, None] * np.eye(3) - offset[:, :, None] * offset[:, None, :]
    inertia *= topo.row_mass[member, None, None]
    per_body = (topo.aggregate[:, member] @ inertia.reshape(-1, 9)).reshape(-1, 3, 3)
    inverse = np.zeros_like(per_body)
    inverse[bodies] = np.linalg.pinv(per_body[bodies])
    return inverse


def step_dynamics(graph, state, params, command=None):
    """
    Advance ``state`` by one semi-implicit Euler step.

    ``command`` is an optional callable ``command(t) -> (rest_lengths, theta)``;
    either value may be ``None`` to leave it unchanged. It is evaluated at the end
    of the step so the returned state carries the commands for ``t + dt``.
    """
    topo = graph.topology
    dt = params.dt
    forces, normal = _accumulate(graph, state, params, friction=False)

    t_next = state.time + dt
    rest_lengths, theta = state.rest_lengths, state.theta
    if command is not None:
        commanded_lengths, commanded_theta = command(t_next)
        if commanded_lengths is not None:
            rest_lengths = np.maximum(np.asarray(commanded_lengths, dtype=float), 0.0)
        if commanded_theta is not None:
            theta = float(commanded_theta)

    velocities = state.velocities + dt * forces * topo.inv_mass[:, None]
    velocities[topo.inv_mass == 0] = 0.0
    positions = state.positions + dt * velocities
    centroid = None
    if topo.body_count:
        goal, centroid = _project_bodies(topo, positions, theta)
        rows = topo.body_rows
        velocities[rows] = (goal - state.positions[rows]) / dt
        positions[rows] = goal
    _apply_friction(topo, positions, velocities, normal, centroid, params)

    _check_divergence(state.node_ids, positions, velocities, t_next, params)
    return SimState(
        node_ids=state.node_ids,
        positions=positions,
        velocities=velocities,
        time=t_next,
        rest_lengths=rest_lengths,
        theta=theta,
    )


def _check_divergence(node_ids, positions, velocities, time, params):
    finite = np.isfinite(positions).all(axis=1) & np.isfinite(velocities).all(axis=1)
    if not finite.all():
        node = node_ids[int(np.flatnonzero(~finite)[0])]
        raise DivergenceError(f"non-finite state at node {node}, t={time:.4f} s")
    speed = np.linalg.norm(velocities, axis=1)
    fastest = int(np.argmax(speed)) if speed.size else 0
    if speed.size and speed[fastest] > params.max_velocity:
        raise DivergenceError(
            f"node {node_ids[fastest]} reached {speed[fastest]:.1f} m/s at t={time:.4f} s; "
            f"reduce dt or stiffen damping"
        )


def settle(graph, state, params, command=None, t_max=None):
    """
    Step until the kinetic energy stays below ``settle_kinetic_tol`` for ``settle_window``.

    Raises :class:`SettleTimeout` if that does not happen within ``t_max`` simulated
    seconds (``params.settle_t_max`` by default).
    """
    t_max = params.settle_t_max if t_max is None else t_max
    if not t_max > 0:
        raise ConfigError("settle time limit must be positive", key="sim.settleTMax")
    start = state.time
    quiet_since = None
    energy = kinetic_energy(graph, state)
    while True:
        previous = state.time
        state = step_dynamics(graph, state, params, command)
        energy = kinetic_energy(graph, state)
        if energy < params.settle_kinetic_tol:
            if quiet_since is None:
                quiet_since = previous
            if state.time - quiet_since >= params.settle_window - 1e-12:
                logger.info(f"settled after {state.time - start:.3f} s (kinetic energy {energy:.2e} J)")
                return state
        else:
            quiet_since = None
        if state.time - start >= t_max:
            raise SettleTimeout(
                f"structure still moving after {t_max:.2f} s (kinetic energy {energy:.3e} J, "
                f"tolerance {params.settle_kinetic_tol:.1e} J)"
            )


def fit_rigid(reference, current, weights=None):
    """
    Best-fit rigid motion taking ``reference`` points onto ``current`` points.

    Returns ``(rotation, reference_centroid, current_centroid)`` so that
    ``current ~ rotation.apply(reference - reference_centroid) + current_centroid``.
    """
    reference = np.asarray(reference, dtype=float)
    current = np.asarray(current, dtype=float)
    weights = np.ones(len(reference)) if weights is None else np.asarray(weights, dtype=float)
    reference_centroid = weights @ reference / weights.sum()
    current_centroid = weights @ current / weights.sum()
    rotation, _ = Rotation.align_vectors(current - current_centroid, reference - reference_centroid, weights)
    return rotation, reference_centroid, current_centroid


def _group_rotation(graph, state, label):
    rows = [graph.index[m] for m in graph.group(label).members]
    topo = graph.topology
    rotation, _, _ = fit_rigid(topo.reference[rows], state.positions[rows], topo.masses[rows])
    return rotation


def relative_hinge_angle(graph, state):
    """Angle (rad) of the driven half relative to the driving half, read back from positions."""
    hinge = graph.hinge
    if hinge is None:
        raise StructureError("structure has no rotating vertebra")
    driving = _group_rotation(graph, state, hinge.driving)
    driven = _group_rotation(graph, state, hinge.driven)
    relative = (driving.inv() * driven).as_rotvec()
    axis = np.asarray(hinge.axis_direction, dtype=float)
    return float(relative @ axis / np.linalg.norm(axis))
