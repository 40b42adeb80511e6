"""Next-view selection: edge alignment plus an angle-spacing regularizer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .edges import EdgeParams, edge_alignment_table
from .errors import ExhaustedCandidatesError, InvalidInputError

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0
GOLDEN_ANGLE = 180.0 / GOLDEN_RATIO


def angular_distance(a, b):
    """``min(|a-b|, 180-|a-b|)`` for angles in [0, 180); works on arrays."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    out = np.minimum(d, 180.0 - d)
    return float(out) if out.ndim == 0 else out


def candidate_grid(step=1.0):
    n = int(round(180.0 / step))
    if n < 1 or abs(n * step - 180.0) > 1e-9:
        raise InvalidInputError(f"grid step must divide 180 degrees, got {step}")
    return np.arange(n, dtype=np.float64) * step


def snap_to_grid(angle, step=1.0):
    return (round(float(angle) / step) * step) % 180.0


@dataclass
class AngleState:
    """Selected views and the candidate grid they are drawn from."""

    grid: np.ndarray
    selected: list[float] = field(default_factory=list)

    @classmethod
    def with_step(cls, step=1.0, selected=()):
        state = cls(candidate_grid(step))
        for a in selected:
            state.add(a)
        return state

    def add(self, angle):
        angle = float(angle)
        if not 0.0 <= angle < 180.0:
            raise InvalidInputError(f"view angle {angle} outside [0, 180)")
        if any(abs(angle - s) < 1e-9 for s in self.selected):
            raise InvalidInputError(f"view angle {angle} already selected")
        self.selected.append(angle)

    def remaining(self):
        """Candidates not yet measured, ascending."""
        if not self.selected:
            return self.grid.copy()
        taken = np.asarray(self.selected)
        close = np.abs(self.grid[:, None] - taken[None, :]) < 1e-9
        return self.grid[~close.any(axis=1)]


@dataclass
class ScoreTable:
    angles: np.ndarray
    f: np.ndarray
    h: np.ndarray
    gamma: float
    alpha: float

    @property
    def total(self):
        return self.f + self.gamma * self.h

    def best(self):
        # np.argmax returns the first maximum; angles are ascending
        return float(self.angles[int(np.argmax(self.total))])

    def rows(self):
        return zip(self.angles, self.f, self.h, self.total)


def repulsion(candidates, selected):
    """``sum_j 1/d(theta, theta_j)``; infinite where a candidate was already selected."""
    cand = np.asarray(candidates, dtype=np.float64).reshape(-1)
    sel = np.asarray(selected, dtype=np.float64).reshape(-1)
    d = np.abs(cand[:, None] - sel[None, :])
    d = np.minimum(d, 180.0 - d)
    with np.errstate(divide="ignore"):
        return (1.0 / d).sum(axis=1)


def angle_spacing_table(candidates, selected, alpha=1.0, normalize=True):
    """Angle-spacing score ``h = exp(-alpha * sum_j 1/d)`` for each candidate.

    With ``normalize`` the table is rescaled so its maximum is 1 (computed in
    the log domain, so large repulsion sums do not underflow to all zeros).
    Candidates that coincide with a selected angle score 0.
    """
    if len(np.atleast_1d(selected)) == 0:
        raise InvalidInputError("angle spacing needs at least one selected angle")
    s = repulsion(candidates, selected)
    if not normalize:
        return np.exp(-alpha * s)
    finite = np.isfinite(s)
    if not finite.any():
        return np.zeros_like(s)
    return np.where(finite, np.exp(-alpha * (s - s[finite].min())), 0.0)


def score_candidates(recon, state: AngleState, gamma=1.0, alpha=1.0,
                     edge_params: EdgeParams | None = None) -> ScoreTable:
    cand = state.remaining()
    if cand.size == 0:
        raise ExhaustedCandidatesError("every candidate angle has been measured")
    f = edge_alignment_table(recon, cand, edge_params)
    if state.selected:
        h = angle_spacing_table(cand, state.selected, alpha)
    else:
        h = np.ones_like(cand)
    return ScoreTable(cand, f, h, float(gamma), float(alpha))


def select_next_angle(recon, state: AngleState, gamma=1.0, alpha=1.0,
                      edge_params: EdgeParams | None = None) -> float:
    """Argmax of ``f + gamma * h`` over the unmeasured candidates (smallest angle on ties)."""
    return score_candidates(recon, state, gamma, alpha, edge_params).best()


def golden_ratio_angle(n: int) -> float:
    if n < 0:
        raise InvalidInputError("golden-ratio index must be >= 0")
    return math.fmod(n * GOLDEN_ANGLE, 180.0)


def next_golden(state: AngleState, n=0):
    """First golden-ratio angle from index ``n`` on, snapped to the grid and not yet measured.

    Returns ``(index, angle)``; raises when the grid is exhausted.
    """
    if state.remaining().size == 0:
        raise ExhaustedCandidatesError("every candidate angle has been measured")
    step = float(state.grid[1] - state.grid[0]) if state.grid.size > 1 else 180.0
    while True:
        a = snap_to_grid(golden_ratio_angle(n), step)
        if not any(abs(a - s) < 1e-9 for s in state.selected):
            return n, a
        n += 1
