"""Ground-truth motion of the mobile node.

Time is divided into equal segments of length ``delta_t``. Within a
segment the node moves at a constant velocity; at each segment boundary a
fresh speed is drawn uniformly from [v_min, v_max] and, in the default
``"resample"`` heading mode, a fresh heading uniformly from (-pi, pi].
Per-step position noise is isotropic zero-mean Gaussian.

All randomness flows through an explicit ``numpy.random.Generator`` so a
trajectory is bit-reproducible from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measurement import _as_position, wrap_angle

__all__ = [
    "MobilityConfig",
    "NodeState",
    "Trajectory",
    "sample_velocity",
    "propagate",
    "generate_trajectory",
]

HEADING_MODES = ("resample", "fixed")


@dataclass(frozen=True)
class MobilityConfig:
    """Parameters of the piecewise-constant-velocity motion model.

    ``process_noise_std`` is the per-axis standard deviation (meters) of
    the additive position noise applied at every step. ``heading_mode``
    selects how direction evolves: ``"resample"`` draws a new uniform
    heading each segment, ``"fixed"`` keeps ``fixed_heading`` throughout.
    """

    v_min: float
    v_max: float
    delta_t: float = 1.0
    process_noise_std: float = 0.0
    num_steps: int = 50
    initial_position: tuple[float, float] | np.ndarray = (0.0, 0.0)
    heading_mode: str = "resample"
    fixed_heading: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.v_min <= self.v_max:
            raise ValueError(f"need 0 <= v_min <= v_max, got [{self.v_min}, {self.v_max}]")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if self.process_noise_std < 0:
            raise ValueError("process_noise_std must be non-negative")
        if self.num_steps < 0:
            raise ValueError("num_steps must be non-negative")
        if self.heading_mode not in HEADING_MODES:
            raise ValueError(f"heading_mode must be one of {HEADING_MODES}")
        pos = _as_position(self.initial_position, "initial_position")
        pos.setflags(write=False)
        object.__setattr__(self, "initial_position", pos)


@dataclass(frozen=True)
class NodeState:
    """Mobile-node state at one time step.

    ``speed``/``heading`` describe the velocity the node moves with during
    the segment that starts at this state.
    """

    position: np.ndarray
    speed: float
    heading: float
    step_index: int = 0

    def __post_init__(self):
        pos = _as_position(self.position, "position")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)

    @property
    def velocity_vector(self) -> np.ndarray:
        return self.speed * np.array([np.cos(self.heading), np.sin(self.heading)])


@dataclass(frozen=True)
class Trajectory:
    """Ordered node states; index 0 is the initial state."""

    states: tuple[NodeState, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def num_steps(self) -> int:
        return len(self.states) - 1

    @property
    def positions(self) -> np.ndarray:
        """(T+1, 2) array of positions."""
        return np.array([s.position for s in self.states])

    def segment_controls(self) -> list[tuple[float, float]]:
        """(speed, heading) commands, one per segment; entry k moves state k to k+1."""
        return [(s.speed, s.heading) for s in self.states[:-1]]

    def to_csv(self, fileobj) -> None:
        """Write columns step,x,y,speed,heading (floats via repr for round-trip)."""
        fileobj.write("step,x,y,speed,heading\n")
        for s in self.states:
            fileobj.write(
                f"{s.step_index},{float(s.position[0])!r},{float(s.position[1])!r},"
                f"{float(s.speed)!r},{float(s.heading)!r}\n"
            )


def sample_velocity(config: MobilityConfig, rng: np.random.Generator) -> tuple[float, float]:
    """Draw a segment velocity: speed ~ U[v_min, v_max], heading per mode."""
    speed = float(rng.uniform(config.v_min, config.v_max))
    if config.heading_mode == "fixed":
        heading = wrap_angle(config.fixed_heading)
    else:
        heading = wrap_angle(float(rng.uniform(-np.pi, np.pi)))
    return speed, heading


def propagate(state: NodeState, config: MobilityConfig, rng: np.random.Generator) -> NodeState:
    """Advance one time segment.

    The new position is the old one moved by the state's velocity for
    ``delta_t`` plus isotropic Gaussian noise; a fresh velocity is drawn
    for the next segment. Turning between segments is instantaneous.
    """
    displacement = state.speed * config.delta_t * np.array(
        [np.cos(state.heading), np.sin(state.heading)]
    )
    noise = rng.standard_normal(2) * config.process_noise_std
    speed, heading = sample_velocity(config, rng)
    return NodeState(
        position=state.position + displacement + noise,
        speed=speed,
        heading=heading,
        step_index=state.step_index + 1,
    )


def generate_trajectory(config: MobilityConfig, rng: np.random.Generator) -> Trajectory:
    """Generate the full T+1-state trajectory from the initial position."""
    speed, heading = sample_velocity(config, rng)
    state = NodeState(
        position=config.initial_position, speed=speed, heading=heading, step_index=0
    )
    states = [state]
    for _ in range(config.num_steps):
        state = propagate(state, config, rng)
        states.append(state)
    return Trajectory(states=tuple(states))
