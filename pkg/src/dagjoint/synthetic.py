'''
Seeded synthetic driving scenes whose sparse interaction graph is known by
construction:

    crossing_pass_yield    pairs of agents on perpendicular paths; the
                           passer reaches the conflict point 1.2-1.8 s
                           before the yielder (one edge per pair)
    leader_follower_chain  a convoy on one lane, followers replaying the
                           leader's speed profile with a delay (path DAG)
    merge                  an agent joining a lane behind the lane's agent
    non_interactive        agents on parallel lanes at least 10 m apart
    congested              two crossing convoys, >= 10 agents (no graph
                           enforced)

Scenes are built in a local frame (conflict point at the origin) and then
placed with a random world rotation and translation. Every scene with an
enforced graph is checked against the sparse labeler and regenerated on a
mismatch.
'''

import logging

import numpy as np

from .config import ScenarioKind, SyntheticSpec
from .errors import ConfigError
from .labeling import Heuristic, build_ground_truth_graph
from .scene import (
    AGENT_TYPES, STATE_WIDTH, AgentTrack, AgentType, RigidTransform, Scene,
    transform_scene, wrap_angle,
)

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 100
CONVOY_SPEED = (5.0, 6.5)
CONVOY_SPACING = (12.0, 14.0)
PAIR_SEPARATION = 150.0
BYSTANDER_OFFSET = 40.0
MIN_CONGESTED_AGENTS = 10

# plausible cruising speeds (m/s) per type on parallel lanes
TYPE_SPEEDS = {
    AgentType.VEHICLE: (3.0, 12.0),
    AgentType.PEDESTRIAN: (0.5, 1.8),
    AgentType.BICYCLIST: (2.0, 6.0),
    AgentType.MOTORCYCLIST: (4.0, 12.0),
    AgentType.BUS: (3.0, 10.0),
}


def speed_profile(tau, v0, phases=()):
    '''
    Speed and travelled distance at times `tau` (seconds, may be negative)
    for a start speed v0 and piecewise-constant accelerations
    [(t_start, t_end, a), ...]; constant speed outside the phases.
    '''
    tau = np.asarray(tau, dtype=np.float64)
    v = np.full_like(tau, v0)
    s = v0 * tau
    for t0, t1, a in phases:
        inside = np.clip(tau - t0, 0.0, t1 - t0)
        v = v + a * inside
        s = s + 0.5 * a * inside ** 2 + a * (t1 - t0) * np.maximum(tau - t1, 0.0)
    return v, s


def along_polyline(vertices, s):
    '''
    Positions and unit headings at arc lengths `s` along a polyline,
    extrapolating the first and last segments.
    '''
    vertices = np.asarray(vertices, dtype=np.float64)
    seg = np.diff(vertices, axis=0)
    lengths = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    heading = seg[idx] / lengths[idx, None]
    return vertices[idx] + (s - cum[idx])[:, None] * heading, heading


class _Track:
    """Kinematic track in the local frame before noise and id assignment."""

    def __init__(self, positions, headings, speeds, agent_type=AgentType.VEHICLE, evaluate=True):
        self.positions = positions
        self.headings = headings
        self.speeds = speeds
        self.agent_type = agent_type
        self.evaluate = evaluate

    def states(self, rng, position_noise, velocity_noise):
        n = len(self.positions)
        states = np.zeros((n, STATE_WIDTH))
        states[:, 0:2] = self.positions + rng.normal(0.0, position_noise, (n, 2)) if position_noise else self.positions
        velocity = self.speeds[:, None] * self.headings
        states[:, 2:4] = velocity + rng.normal(0.0, velocity_noise, (n, 2)) if velocity_noise else velocity
        states[:, 4] = wrap_angle(np.arctan2(self.headings[:, 1], self.headings[:, 0]))
        states[:, 5] = 1.0
        return states


def _straight(tau, origin, heading_angle, v0, phases=(), s_ref=0.0):
    '''Agent on a line through `origin`, at `origin` when travelled distance equals s_ref.'''
    direction = np.array([np.cos(heading_angle), np.sin(heading_angle)])
    v, s = speed_profile(tau, v0, phases)
    positions = np.asarray(origin) + (s - s_ref)[:, None] * direction
    return _Track(positions, np.tile(direction, (len(tau), 1)), v)


def _time_axis(spec):
    # present (last observed step) at tau = 0
    return (np.arange(spec.t_obs + spec.t_fut) - (spec.t_obs - 1)) * spec.dt


def _bystander(rng, tau, spec, slot, evaluate=True):
    '''Agent on a lane parallel to the local x axis, far from every conflict.'''
    agent_type = AGENT_TYPES[rng.integers(len(AGENT_TYPES))]
    lo, hi = TYPE_SPEEDS[agent_type]
    heading = 0.0 if rng.random() < 0.5 else -np.pi
    y = -BYSTANDER_OFFSET - 12.0 * slot
    track = _straight(tau, (rng.uniform(-30.0, 30.0), y), heading, rng.uniform(lo, hi))
    track.agent_type = agent_type
    track.evaluate = evaluate
    return track


def _crossing(rng, tau, spec, n_agents):
    tracks, edges = [], []
    for pair in range(max(1, n_agents // 2)):
        centre = np.array([pair * PAIR_SEPARATION, 0.0])
        psi = rng.uniform(-np.pi, np.pi)
        tau_pass = rng.integers(8, 13) * spec.dt
        v_pass = rng.uniform(6.0, 8.0)
        passer = _straight(tau, centre, psi, v_pass, s_ref=v_pass * tau_pass)
        # yielder brakes from the present on, then holds its speed
        v_yield = rng.uniform(5.5, 7.0)
        phases = ((0.0, rng.uniform(0.5, 1.0), -rng.uniform(1.0, 1.5)),)
        tau_yield = tau_pass + rng.uniform(1.2, 1.8)
        _, s_at = speed_profile(np.array([tau_yield]), v_yield, phases)
        side = 1.0 if rng.random() < 0.5 else -1.0
        yielder = _straight(tau, centre, psi + side * np.pi / 2, v_yield, phases, s_ref=s_at[0])
        edges.append((len(tracks), len(tracks) + 1))
        tracks += [passer, yielder]
    if n_agents > 2 * len(edges):
        tracks.append(_bystander(rng, tau, spec, 0))
    return tracks, edges


def _convoy(rng, tau, origin, heading, n, mild_accel=True):
    v0 = rng.uniform(*CONVOY_SPEED)
    spacing = rng.uniform(*CONVOY_SPACING)
    delay = spacing / v0
    phases = ()
    if mild_accel:
        start = rng.uniform(0.0, 1.5)
        phases = ((start, start + 1.0, rng.uniform(-0.8, 0.8)),)
    offset = rng.uniform(-5.0, 5.0)
    return [
        _straight(tau - i * delay, origin, heading, v0, phases, s_ref=offset)
        for i in range(n)
    ]


def _chain(rng, tau, spec, n_agents):
    n = max(2, n_agents)
    tracks = _convoy(rng, tau, (0.0, 0.0), rng.uniform(-np.pi, np.pi), n)
    return tracks, [(i, i + 1) for i in range(n - 1)]


def _merge(rng, tau, spec, n_agents):
    v = rng.uniform(*CONVOY_SPEED)
    tau_main = rng.uniform(0.5, 1.0)
    main = _straight(tau, (0.0, 0.0), 0.0, v, s_ref=v * tau_main)
    theta = np.deg2rad(rng.uniform(15.0, 30.0))
    approach = 100.0
    vertices = [
        (-approach * np.cos(theta), -approach * np.sin(theta)),
        (0.0, 0.0),
        (approach, 0.0),
    ]
    lag = rng.uniform(1.6, 2.1)
    s = approach + v * (tau - tau_main - lag)
    positions, headings = along_polyline(vertices, s)
    merger = _Track(positions, headings, np.full(len(tau), v))
    tracks = [main, merger]
    for slot in range(max(0, n_agents - 2)):
        tracks.append(_bystander(rng, tau, spec, slot))
    return tracks, [(0, 1)]


def _non_interactive(rng, tau, spec, n_agents):
    tracks = []
    y = 0.0
    for _ in range(max(1, n_agents)):
        agent_type = AGENT_TYPES[rng.integers(len(AGENT_TYPES))]
        lo, hi = TYPE_SPEEDS[agent_type]
        heading = 0.0 if rng.random() < 0.5 else -np.pi
        track = _straight(tau, (rng.uniform(-30.0, 30.0), y), heading, rng.uniform(lo, hi))
        track.agent_type = agent_type
        tracks.append(track)
        y += rng.uniform(10.0, 15.0)
    return tracks, []


def _congested(rng, tau, spec, n_agents):
    n = max(MIN_CONGESTED_AGENTS, n_agents)
    n_a = n // 2
    psi = rng.uniform(-np.pi, np.pi)
    tracks = _convoy(rng, tau, (0.0, 0.0), psi, n_a, mild_accel=False)
    tracks += _convoy(rng, tau, (0.0, 0.0), psi + np.pi / 2, n - n_a, mild_accel=False)
    return tracks, None


BUILDERS = {
    ScenarioKind.CROSSING_PASS_YIELD: _crossing,
    ScenarioKind.LEADER_FOLLOWER_CHAIN: _chain,
    ScenarioKind.MERGE: _merge,
    ScenarioKind.NON_INTERACTIVE: _non_interactive,
    ScenarioKind.CONGESTED: _congested,
}


def _assemble(rng, spec, kind, index, tracks, edges):
    tau = _time_axis(spec)
    for slot in range(spec.context_agents):
        tracks.append(_bystander(rng, tau, spec, slot + spec.max_agents, evaluate=False))
    perm = rng.permutation(len(tracks))
    agents = []
    for local, track in enumerate(tracks):
        states = track.states(rng, spec.position_noise, spec.velocity_noise)
        agents.append(AgentTrack(
            agent_id=int(perm[local]),
            agent_type=track.agent_type,
            past=states[:spec.t_obs],
            future=states[spec.t_obs:],
            evaluate=track.evaluate,
        ))
    local = Scene(f"{kind.value}-{spec.seed}-{index:05d}", agents, spec.t_obs, spec.t_fut, spec.dt)
    placement = RigidTransform((rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0)), rng.uniform(-np.pi, np.pi))
    scene = transform_scene(local, placement, inverse=True)
    expected = None if edges is None else {(int(perm[s]), int(perm[d])) for s, d in edges}
    return scene, expected


def generate_scene(spec, index):
    kind = spec.kind_for(index)
    rng = np.random.default_rng([spec.seed, index])
    tau = _time_axis(spec)
    for attempt in range(MAX_ATTEMPTS):
        n_agents = int(rng.integers(spec.min_agents, spec.max_agents + 1))
        tracks, edges = BUILDERS[kind](rng, tau, spec, n_agents)
        scene, expected = _assemble(rng, spec, kind, index, tracks, edges)
        if expected is None:
            return scene
        labelled = set(build_ground_truth_graph(scene, Heuristic.SPARSE, spec.eps_i).edges())
        if labelled == expected:
            return scene
        logger.warning(
            "scene %s attempt %d: labeler found %s, construction intended %s; regenerating",
            scene.scene_id, attempt, sorted(labelled), sorted(expected),
        )
    raise ConfigError(f"could not build a {kind.value} scene matching its intended graph in {MAX_ATTEMPTS} attempts")


def generate_corpus(spec, count):
    if not isinstance(spec, SyntheticSpec):
        raise ConfigError("generate_corpus needs a SyntheticSpec")
    return [generate_scene(spec, i) for i in range(count)]


def random_scene(seed, n_agents, t_obs=4, t_fut=3, dt=0.1, spread=20.0, scene_id=None):
    '''
    Unstructured scene of constant-acceleration agents with random types,
    placed uniformly in a square of side `spread`. No interaction graph is
    implied; used for gradient checks and small fixtures.
    '''
    rng = np.random.default_rng(seed)
    tau = (np.arange(t_obs + t_fut) - (t_obs - 1)) * dt
    agents = []
    for agent_id in range(n_agents):
        agent_type = AGENT_TYPES[rng.integers(len(AGENT_TYPES))]
        v0 = rng.uniform(*TYPE_SPEEDS[agent_type])
        track = _straight(
            tau, rng.uniform(-spread / 2, spread / 2, 2), rng.uniform(-np.pi, np.pi), v0,
            ((tau[0], tau[-1], rng.uniform(-1.0, 1.0)),),
        )
        states = track.states(rng, 0.0, 0.0)
        agents.append(AgentTrack(agent_id, agent_type, states[:t_obs], states[t_obs:]))
    return Scene(scene_id or f"random-{seed}", agents, t_obs, t_fut, dt)
