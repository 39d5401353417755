"""Shared fixture builders for the test suite."""

import numpy as np

from kdpe import DEFAULT_BANDWIDTHS, Action, Population, Trajectory

import oracles


def random_action(rng, pos_scale=0.3):
    return Action(position=rng.standard_normal(3) * pos_scale,
                  rotation=oracles.random_rotation(rng),
                  gripper=float(rng.standard_normal()))


def random_trajectory(rng, t, payload=b""):
    return Trajectory(actions=tuple(random_action(rng) for _ in range(t)),
                      payload=payload)


def random_population(rng, n, t, with_payloads=False):
    trajectories = tuple(
        random_trajectory(rng, t,
                          payload=rng.bytes(int(rng.integers(0, 40)))
                          if with_payloads else b"")
        for _ in range(n))
    return Population(trajectories=trajectories, observation_id="test")


def jittered_action(rng, base, pos_sigma, rot_sigma, grip_sigma):
    omega = rot_sigma * rng.standard_normal(3)
    return Action(position=base.position + pos_sigma * rng.standard_normal(3),
                  rotation=base.rotation @ oracles.expmap(omega),
                  gripper=base.gripper + grip_sigma * rng.standard_normal())


def outlier_population(seed, h=DEFAULT_BANDWIDTHS):
    """A clustered population with one far outlier at every step.

    3 to 6 trajectories hug a common random pose (position jitter well under
    one position bandwidth); one extra trajectory, at a random index, sits at
    least 10 position bandwidths away. Returns (population, outlier_index).
    """
    rng = np.random.default_rng(seed)
    n_cluster = int(rng.integers(3, 7))
    t = int(rng.integers(1, 4))
    base = random_action(rng)
    offset_dir = rng.standard_normal(3)
    offset_dir /= np.linalg.norm(offset_dir)
    mahalanobis = 10.0 + 10.0 * rng.random()
    far = Action(position=base.position + mahalanobis * h.sigma_pos * offset_dir,
                 rotation=base.rotation, gripper=base.gripper)

    cluster = [
        Trajectory(actions=tuple(
            jittered_action(rng, base, 0.3 * h.sigma_pos, 0.05, 0.02)
            for _ in range(t)))
        for _ in range(n_cluster)
    ]
    outlier = Trajectory(actions=tuple(
        jittered_action(rng, far, 0.1 * h.sigma_pos, 0.02, 0.01)
        for _ in range(t)))

    outlier_index = int(rng.integers(0, n_cluster + 1))
    trajectories = cluster[:outlier_index] + [outlier] + cluster[outlier_index:]
    pop = Population(trajectories=tuple(trajectories),
                     observation_id=f"outlier-{seed}")
    return pop, outlier_index


def as_triples(pop):
    """Population -> list of trajectories of (position, rotation, gripper)."""
    return [[(a.position, a.rotation, a.gripper) for a in traj.actions]
            for traj in pop.trajectories]
