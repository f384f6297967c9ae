"""Planar revolute-door model: sampling, action execution, and reward.

A door is a segment hinged at `hinge_pos`, opening in direction `open_sign`
with its handle at radius `handle_radius` from the hinge. An action commands
a gripper to grab the closed handle and sweep a circular arc of its own
(guessed) center and radius. The reward is the arc length actually travelled
by the handle before the grip slips or the sweep ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..diffcore.rng import RngStream

# Step-simulation constants: angular step, grip tolerance (meters), and the
# per-step catch-up bound on door-angle growth. The tolerance is sized so a
# pool of 100 random candidate actions usually contains a near-optimal one,
# which keeps regret curves informative.
STEP_RAD = math.pi / 360.0
GRIP_TOL = 0.10
MAX_CATCH_UP = 4.0 * STEP_RAD

HINGE_RANGE = (-0.1, 0.1)
WIDTH_RANGE = (0.6, 1.1)
HANDLE_FRAC_RANGE = (0.8, 0.95)

# Candidate-action sampling ranges; also the normalization bounds used by
# the reward model.
CAND_CENTER_RANGE = (-0.5, 0.5)
CAND_RADIUS_RANGE = (0.3, 1.2)
CAND_ANGLE_RANGE = (math.pi / 6.0, math.pi)


@dataclass(frozen=True)
class DoorKinematics:
    hinge_pos: tuple[float, float]
    open_sign: int           # +1 or -1
    width: float
    handle_radius: float

    def __post_init__(self):
        if self.open_sign not in (-1, 1):
            raise ValueError(f"open_sign must be +/-1, got {self.open_sign}")
        if not 0.0 < self.handle_radius < self.width:
            raise ValueError(
                f"handle_radius {self.handle_radius} must lie in (0, width={self.width})"
            )


@dataclass(frozen=True)
class Action:
    hinge_guess: tuple[float, float]
    radius_guess: float
    goal_angle: float        # signed radians; sign is the commanded direction

    def __post_init__(self):
        if self.goal_angle == 0.0:
            raise ValueError("goal_angle must be nonzero")
        if not 0.0 < self.radius_guess <= 2.0:
            raise ValueError(f"radius_guess {self.radius_guess} out of (0, 2]")

    def as_array(self) -> np.ndarray:
        return np.array([self.hinge_guess[0], self.hinge_guess[1], self.radius_guess, self.goal_angle])

    @staticmethod
    def from_array(row: np.ndarray) -> "Action":
        return Action((float(row[0]), float(row[1])), float(row[2]), float(row[3]))


def sample_door(stream: RngStream) -> DoorKinematics:
    hx = float(stream.uniform(*HINGE_RANGE))
    hy = float(stream.uniform(*HINGE_RANGE))
    sign = stream.sign()
    width = float(stream.uniform(*WIDTH_RANGE))
    frac = float(stream.uniform(*HANDLE_FRAC_RANGE))
    return DoorKinematics((hx, hy), sign, width, width * frac)


def sample_candidate_actions(stream: RngStream, count: int) -> list[Action]:
    """Random grab-and-sweep actions over the full plausible parameter box."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    actions = []
    for _ in range(count):
        px = float(stream.uniform(*CAND_CENTER_RANGE))
        py = float(stream.uniform(*CAND_CENTER_RANGE))
        rho = float(stream.uniform(*CAND_RADIUS_RANGE))
        mag = float(stream.uniform(*CAND_ANGLE_RANGE))
        actions.append(Action((px, py), rho, stream.sign() * mag))
    return actions


def optimal_reward(door: DoorKinematics) -> float:
    """Best achievable handle travel: a full half-turn on the true circle."""
    return door.handle_radius * math.pi


def optimal_action(door: DoorKinematics) -> Action:
    return Action(door.hinge_pos, door.handle_radius, door.open_sign * math.pi)


def execute_action(door: DoorKinematics, action: Action) -> float:
    """Run the grip/slip step simulation and return the handle arc length.

    The gripper grabs at the closed handle bearing and sweeps `goal_angle`
    around its guessed center. Each step the door angle may advance to the
    gripper's bearing about the true hinge if that stays monotone (within
    the catch-up bound) and the gripper sits on the true handle circle
    within the grip tolerance; the episode ends early if the gripper drifts
    more than the tolerance away from the handle.
    """
    hx, hy = door.hinge_pos
    rho = door.handle_radius
    sign = door.open_sign
    # Closed handle position (door lies along +x from the hinge).
    h0x, h0y = hx + rho, hy

    pax, pay = action.hinge_guess
    rho_a = action.radius_guess
    sweep = abs(action.goal_angle)
    sdir = 1.0 if action.goal_angle > 0 else -1.0

    dx, dy = h0x - pax, h0y - pay
    grasp_gap = abs(math.hypot(dx, dy) - rho_a)
    if grasp_gap > GRIP_TOL:
        return 0.0
    beta0 = math.atan2(dy, dx)

    n_steps = max(1, math.ceil(sweep / STEP_RAD))
    # Gripper positions for the full commanded sweep, precomputed.
    thetas = np.minimum(np.arange(n_steps + 1) * STEP_RAD, sweep)
    angles = beta0 + sdir * thetas
    gx = pax + rho_a * np.cos(angles)
    gy = pay + rho_a * np.sin(angles)

    phi = 0.0
    for k in range(n_steps + 1):
        rx, ry = gx[k] - hx, gy[k] - hy
        radial_err = abs(math.hypot(rx, ry) - rho)
        cand = sign * math.atan2(ry, rx)
        if phi <= cand <= phi + MAX_CATCH_UP and radial_err <= GRIP_TOL:
            phi = min(cand, math.pi)
        # Slip: gripper left the handle's neighborhood.
        hx_k = hx + rho * math.cos(sign * phi)
        hy_k = hy + rho * math.sin(sign * phi)
        if math.hypot(gx[k] - hx_k, gy[k] - hy_k) > GRIP_TOL:
            break
    # Off-center guesses can make the hinge bearing lead the commanded
    # sweep slightly; the door never opens past the commanded goal.
    phi = min(phi, sweep, math.pi)
    return rho * phi
