"""Pursuit-evasion benchmark: a kinematic intruder crossing surveilled squares.

A chain of watcher vehicles, one per square of side ``square_side``, each
tracks a circular reference orbit of radius ``orbit_radius`` through the
second-order dynamics

    pos'' = gain^2 * (reference(t, phase) - pos),

with a random phase angle drawn from a small finite support.  An integer
gain makes every trajectory periodic with period 2*pi, so the set of
reachable states at the checkpoint times T_i = 2*pi*i never changes.

The intruder crosses each square along the x axis with a piecewise-constant
speed profile, collecting a few exact position samples of the local watcher
on the way.  Phase-conditioned dynamics are linear-affine, which makes
state recovery from three position fixes a one-dimensional search over the
phase (``reconstruct_red_state``).  The recovered states feed a
distributionally robust program: maximize, over feasible speed profiles,
the worst-case expected squared clearance from the next (unseen) watcher,
where the expectation ranges over a Wasserstein ball around the empirical
state distribution.  The inner infimum restricted to a finite candidate
support is an exact linear program solved in closed form by a budgeted
exchange argument (``constrained_min_expectation``); the outer supremum is
multi-start pairwise coordinate ascent over the profile polytope.

``run_experiment`` assembles the full seeded comparison between the
cumulative ambiguity ball (all recovered states, shrinking radius) and the
static one (latest state only, fixed radius).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ambiflow.concentration import calibrated_radius
from ambiflow.distribution import DiscreteDistribution

__all__ = [
    "ScenarioConfig",
    "AmbiguityBall",
    "ExperimentRow",
    "ExperimentReport",
    "default_config",
    "initial_red_state",
    "red_uav_flow",
    "red_position_path",
    "reconstruct_red_state",
    "blue_path",
    "dro_objective",
    "candidate_support",
    "constrained_min_expectation",
    "solve_inner_inf",
    "solve_dro",
    "run_experiment",
]

TWO_PI = 2.0 * math.pi

# Default phase support: three angles strictly inside the second/third
# quadrant of the orbit, sampled uniformly unless the config says otherwise.
DEFAULT_THETA_SUPPORT = (2.8 * math.pi / 4.0, 3.5 * math.pi / 4.0, 4.6 * math.pi / 4.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry, vehicle limits, ambiguity calibration, and the seed."""

    orbit_radius: float = 1.0
    square_side: float = 2.5
    tracking_gain: float = 4.0
    v_min: float = 0.3 * 2.5 / TWO_PI
    v_max: float = 1.5 * 2.5 / TWO_PI
    n_segments: int = 4
    theta_support: tuple[float, ...] = DEFAULT_THETA_SUPPORT
    theta_probabilities: tuple[float, ...] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    eps_ref: float = 0.17
    n_ref: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.orbit_radius <= 0.0:
            raise ValueError(f"orbit_radius must be positive, got {self.orbit_radius}")
        if self.square_side <= 0.0:
            raise ValueError(f"square_side must be positive, got {self.square_side}")
        g = self.tracking_gain
        if g < 2.0 or g != int(g):
            raise ValueError(
                f"tracking_gain must be an integer >= 2 for periodic orbits, got {g}"
            )
        if not 0.0 < self.v_min <= self.v_max:
            raise ValueError(f"need 0 < v_min <= v_max, got ({self.v_min}, {self.v_max})")
        if self.n_segments < 1:
            raise ValueError(f"n_segments must be >= 1, got {self.n_segments}")
        mean_speed = self.square_side / TWO_PI
        if not self.v_min <= mean_speed + 1e-12 or not mean_speed <= self.v_max + 1e-12:
            raise ValueError(
                f"profile set empty: required mean speed {mean_speed:.6g} outside "
                f"[{self.v_min:.6g}, {self.v_max:.6g}]"
            )
        if len(self.theta_probabilities) != len(self.theta_support):
            raise ValueError("theta support and probabilities differ in length")
        probs = np.asarray(self.theta_probabilities, dtype=float)
        if probs.min() < 0.0 or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("theta probabilities must be nonnegative and sum to 1")
        if self.eps_ref <= 0.0 or self.n_ref < 1:
            raise ValueError("calibration anchor needs eps_ref > 0 and n_ref >= 1")
        object.__setattr__(self, "theta_support", tuple(float(t) for t in self.theta_support))
        object.__setattr__(
            self, "theta_probabilities", tuple(float(p) for p in self.theta_probabilities)
        )

    @property
    def profile_sum(self) -> float:
        """The speed profile must integrate to one square side per period."""
        return self.square_side * self.n_segments / TWO_PI

    def to_json(self) -> dict:
        return {
            "orbit_radius": self.orbit_radius,
            "square_side": self.square_side,
            "tracking_gain": self.tracking_gain,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "n_segments": self.n_segments,
            "theta_support": list(self.theta_support),
            "theta_probabilities": list(self.theta_probabilities),
            "eps_ref": self.eps_ref,
            "n_ref": self.n_ref,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown scenario config fields: {sorted(unknown)}")
        kwargs = dict(payload)
        for key in ("theta_support", "theta_probabilities"):
            if key in kwargs:
                kwargs[key] = tuple(float(v) for v in kwargs[key])
        return cls(**kwargs)


def default_config(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(seed=seed)


# --- red vehicle dynamics --------------------------------------------------------


def _forced_amplitude(cfg_gain: float, orbit_radius: float) -> float:
    # Particular solution of pos'' = g^2 (r cos(t + phase) - pos) is
    # amp * cos(t + phase) with amp = g^2 r / (g^2 - 1).
    g2 = cfg_gain * cfg_gain
    return g2 * orbit_radius / (g2 - 1.0)


def initial_red_state(theta: float, orbit_radius: float = 1.0) -> np.ndarray:
    """Launch state on the reference circle with zero velocity, phase appended."""
    return np.array(
        [orbit_radius * math.cos(theta), orbit_radius * math.sin(theta), 0.0, 0.0, theta]
    )


def red_uav_flow(
    theta: float,
    xi0: Sequence[float],
    t: float,
    t_start: float = 0.0,
    gain: float = 4.0,
    orbit_radius: float = 1.0,
) -> np.ndarray:
    """Closed-form tracker state (pos, vel) at time t, given the state at t_start.

    Variation of constants for the forced oscillator: the particular
    solution rides the reference circle with amplitude g^2 r / (g^2 - 1),
    the homogeneous part oscillates at the tracking gain's frequency.
    Valid for any gain with gain^2 != 1, forward or backward in time.
    """
    if gain * gain == 1.0:
        raise ValueError("gain^2 = 1 is resonant; the closed form does not apply")
    x0, y0, vx0, vy0 = (float(v) for v in xi0)
    amp = _forced_amplitude(gain, orbit_radius)
    dt = t - t_start
    ck, sk = math.cos(gain * dt), math.sin(gain * dt)
    cs, ss = math.cos(t_start + theta), math.sin(t_start + theta)
    ct, st = math.cos(t + theta), math.sin(t + theta)
    ax = x0 - amp * cs
    bx = (vx0 + amp * ss) / gain
    ay = y0 - amp * ss
    by = (vy0 - amp * cs) / gain
    return np.array(
        [
            amp * ct + ax * ck + bx * sk,
            amp * st + ay * ck + by * sk,
            -amp * st - ax * gain * sk + bx * gain * ck,
            amp * ct - ay * gain * sk + by * gain * ck,
        ]
    )


def red_position_path(
    states: np.ndarray, tau_grid: np.ndarray, cfg: ScenarioConfig
) -> np.ndarray:
    """Positions of flowed 5-d states over a time grid, vectorized.

    ``states`` is (J, 5) rows (x, y, vx, vy, phase) at relative time 0;
    returns (J, len(tau_grid), 2).
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    g = cfg.tracking_gain
    amp = _forced_amplitude(g, cfg.orbit_radius)
    theta = states[:, 4:5]
    tau = np.asarray(tau_grid, dtype=float)[None, :]
    ck, sk = np.cos(g * tau), np.sin(g * tau)
    cs, ss = np.cos(theta), np.sin(theta)
    ax = states[:, 0:1] - amp * cs
    bx = (states[:, 2:3] + amp * ss) / g
    ay = states[:, 1:2] - amp * ss
    by = (states[:, 3:4] - amp * cs) / g
    x = amp * np.cos(tau + theta) + ax * ck + bx * sk
    y = amp * np.sin(tau + theta) + ay * ck + by * sk
    return np.stack([x, y], axis=-1)


# --- state recovery from position fixes ----------------------------------------


def reconstruct_red_state(
    times: Sequence[float],
    positions: np.ndarray,
    cfg: ScenarioConfig,
    n_phase_grid: int = 720,
    residual_tol: float = 1e-8,
) -> np.ndarray:
    """Recover (pos, vel, phase) at the last sample time from position fixes.

    Conditioned on the phase, positions are affine in the state at the last
    sample time with a phase-independent design matrix, so each candidate
    phase costs one projection.  The residual is scanned on a grid over
    [0, 2*pi), every basin below a loose threshold is polished by bounded
    scalar minimization, and the fit must reach ``residual_tol``.  Two
    distinct phases fitting equally well, or sample spacings that alias the
    tracking frequency, are reported as errors rather than silently picked.
    """
    ts = np.asarray(times, dtype=float)
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if ts.ndim != 1 or len(ts) < 3:
        raise ValueError(f"need at least three sample times, got {len(ts)}")
    if pos.shape != (len(ts), 2):
        raise ValueError(f"positions shape {pos.shape} does not match {len(ts)} times")
    if np.any(np.diff(ts) <= 0.0):
        raise ValueError("sample times must be strictly increasing")
    g = cfg.tracking_gain
    amp = _forced_amplitude(g, cfg.orbit_radius)
    t_last = float(ts[-1])
    dt = ts - t_last
    design = np.column_stack([np.cos(g * dt), np.sin(g * dt) / g])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-8 * sv[0]:
        raise ArithmeticError(
            "sample spacing aliases the tracking frequency; velocity is "
            "not identifiable from these times"
        )
    q, _ = np.linalg.qr(design)

    def residual_batch(thetas: np.ndarray) -> np.ndarray:
        th = thetas[:, None]
        ck = np.cos(g * dt)[None, :]
        sk = (np.sin(g * dt) / g)[None, :]
        ct, st = np.cos(ts[None, :] + th), np.sin(ts[None, :] + th)
        c_last, s_last = np.cos(t_last + th), np.sin(t_last + th)
        off_x = amp * (ct - c_last * ck + s_last * sk)
        off_y = amp * (st - s_last * ck - c_last * sk)
        bx = pos[None, :, 0] - off_x
        by = pos[None, :, 1] - off_y
        rx = bx - (bx @ q) @ q.T
        ry = by - (by @ q) @ q.T
        return np.einsum("ij,ij->i", rx, rx) + np.einsum("ij,ij->i", ry, ry)

    grid = np.linspace(0.0, TWO_PI, n_phase_grid, endpoint=False)
    res = residual_batch(grid)
    # Polish every basin that is plausibly a perfect fit.
    floor = max(residual_tol, res.min() * 10.0, 1e-6)
    candidates: list[tuple[float, float]] = []
    step = TWO_PI / n_phase_grid
    for i in np.nonzero(res <= floor)[0]:
        left, right = grid[i] - step, grid[i] + step
        if res[(i - 1) % n_phase_grid] < res[i] or res[(i + 1) % n_phase_grid] < res[i]:
            # Not a local minimum on the grid; its basin is polished from
            # the neighbor instead.
            continue
        opt = minimize_scalar(
            lambda th: float(residual_batch(np.array([th]))[0]),
            bounds=(left, right),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if opt.fun < residual_tol:
            candidates.append((float(opt.x) % TWO_PI, float(opt.fun)))
    if not candidates:
        raise ArithmeticError(
            f"no phase fits the samples (best residual {res.min():.3e}); the "
            "data is not a noiseless trajectory of the tracker dynamics"
        )
    clusters: list[tuple[float, float]] = []
    for th, r in sorted(candidates, key=lambda c: c[1]):
        if all(
            min(abs(th - c[0]), TWO_PI - abs(th - c[0])) > 1e-3 for c in clusters
        ):
            clusters.append((th, r))
    if len(clusters) > 1:
        angles = ", ".join(f"{c[0]:.6g}" for c in clusters)
        raise ArithmeticError(f"ambiguous fit: phases {{{angles}}} all reach the tolerance")
    theta = clusters[0][0]
    ck = np.cos(g * dt)
    sk = np.sin(g * dt) / g
    ct, st = np.cos(ts + theta), np.sin(ts + theta)
    c_last, s_last = math.cos(t_last + theta), math.sin(t_last + theta)
    off_x = amp * (ct - c_last * ck + s_last * sk)
    off_y = amp * (st - s_last * ck - c_last * sk)
    sol_x, *_ = np.linalg.lstsq(design, pos[:, 0] - off_x, rcond=None)
    sol_y, *_ = np.linalg.lstsq(design, pos[:, 1] - off_y, rcond=None)
    return np.array([sol_x[0], sol_y[0], sol_x[1], sol_y[1], theta])


# --- intruder path and objective -------------------------------------------------


def _segment_coverage(tau_grid: np.ndarray, n_segments: int) -> np.ndarray:
    """(n_t, n) matrix: time each profile segment contributes up to tau."""
    h = TWO_PI / n_segments
    starts = np.arange(n_segments) * h
    return np.clip(tau_grid[:, None] - starts[None, :], 0.0, h)


def blue_path(
    profile: Sequence[float], cfg: ScenarioConfig, tau_grid: np.ndarray
) -> np.ndarray:
    """Intruder positions along the x axis: integral of the speed profile."""
    x = _validated_profile(profile, cfg)
    cov = _segment_coverage(np.asarray(tau_grid, dtype=float), cfg.n_segments)
    out = np.zeros((len(tau_grid), 2))
    out[:, 0] = cov @ x
    return out


def _validated_profile(profile: Sequence[float], cfg: ScenarioConfig) -> np.ndarray:
    x = np.asarray(profile, dtype=float)
    if x.shape != (cfg.n_segments,):
        raise ValueError(f"profile infeasible: expected {cfg.n_segments} segments")
    if x.min() < cfg.v_min - 1e-9 or x.max() > cfg.v_max + 1e-9:
        raise ValueError("profile infeasible: speed bounds violated")
    if abs(x.sum() - cfg.profile_sum) > 1e-9 * max(1.0, cfg.profile_sum):
        raise ValueError(
            f"profile infeasible: sums to {x.sum():.9g}, needs {cfg.profile_sum:.9g}"
        )
    return x


def dro_objective(
    profile: Sequence[float],
    xi: Sequence[float],
    known_state: Sequence[float],
    cfg: ScenarioConfig,
    t_start: float = 0.0,
    n_t: int = 200,
) -> float:
    """Worst-moment squared clearance for one candidate next-watcher state.

    Minimum over a uniform time grid of the squared distance from the
    intruder to either the already-observed watcher (state ``known_state``
    at ``t_start``, orbiting the current square) or the candidate state
    ``xi`` (orbiting the next square, one side over along +x).
    """
    tau = np.linspace(0.0, TWO_PI, n_t)
    blue = blue_path(profile, cfg, tau)
    known = np.asarray(known_state, dtype=float).reshape(1, 5)
    cand = np.asarray(xi, dtype=float).reshape(1, 5)
    if t_start != 0.0:
        # Re-anchor: flow formulas take states at relative time zero with the
        # reference phase developed to t_start.
        known = _shift_anchor(known, t_start, cfg)
        cand = _shift_anchor(cand, t_start, cfg)
    known_xy = red_position_path(known, tau, cfg)[0]
    cand_xy = red_position_path(cand, tau, cfg)[0] + np.array([cfg.square_side, 0.0])
    d_known = ((known_xy - blue) ** 2).sum(axis=1)
    d_cand = ((cand_xy - blue) ** 2).sum(axis=1)
    return float(np.minimum(d_known, d_cand).min())


def _shift_anchor(states: np.ndarray, t_start: float, cfg: ScenarioConfig) -> np.ndarray:
    out = states.copy()
    out[:, 4] = out[:, 4] + t_start
    return out


# --- ambiguity balls and the inner linear program ---------------------------------


@dataclass(frozen=True)
class AmbiguityBall:
    """Wasserstein ball: center distribution, radius, transport order."""

    center: DiscreteDistribution
    radius: float
    order: float = 1.0

    def __post_init__(self) -> None:
        if self.radius < 0.0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")
        if self.order < 1.0:
            raise ValueError(f"order must be >= 1, got {self.order}")


def _merged_center(dist: DiscreteDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Collapse bit-identical atoms, summing weights.

    Transport from co-located atoms is interchangeable, so the constrained
    expectation program is unchanged; the solver just loops over far fewer
    sources when many samples recovered the same state.
    """
    points, inverse = np.unique(dist.points, axis=0, return_inverse=True)
    weights = np.zeros(len(points))
    np.add.at(weights, inverse, dist.weights)
    return points, weights


def candidate_support(ball: AmbiguityBall, star_steps: int = 10) -> np.ndarray:
    """Finite support for the inner adversary.

    The exact-deduplicated center atoms, plus an axis-aligned star around
    each: ``star_steps`` offsets per direction per coordinate, extending to
    the ball radius with resolution radius / star_steps.  Zero radius keeps
    just the atoms.
    """
    atoms = np.unique(ball.center.points, axis=0)
    pieces = [atoms]
    if ball.radius > 0.0:
        d = atoms.shape[1]
        offsets = []
        for axis in range(d):
            for k in range(1, star_steps + 1):
                delta = np.zeros(d)
                delta[axis] = ball.radius * k / star_steps
                offsets.append(delta)
                offsets.append(-delta)
        offsets = np.array(offsets)
        pieces.append((atoms[:, None, :] + offsets[None, :, :]).reshape(-1, atoms.shape[1]))
    return np.unique(np.vstack(pieces), axis=0)


def constrained_min_expectation(
    weights: np.ndarray, costs: np.ndarray, values: np.ndarray, budget: float
) -> float:
    """Exact optimum of the transport-constrained expectation program:

        minimize    sum_ij plan_ij * values_j
        subject to  sum_j plan_ij = weights_i,   plan >= 0,
                    sum_ij plan_ij * costs_ij <= budget.

    Solved by an exchange argument: per source atom, admissible (cost,
    value) trade-offs form the decreasing lower convex hull of its candidate
    points, and the budget is spent greedily on hull segments in order of
    steepest value decrease.  Exactness holds because the per-atom value
    functions are convex piecewise-linear, making the aggregate a classic
    budget allocation.  Each atom needs a zero-cost candidate (itself).
    """
    w = np.asarray(weights, dtype=float)
    c = np.atleast_2d(np.asarray(costs, dtype=float))
    f = np.asarray(values, dtype=float)
    if c.shape != (len(w), len(f)):
        raise ValueError(f"cost matrix {c.shape} does not match {len(w)}x{len(f)}")
    if budget < 0.0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    total = 0.0
    segments: list[tuple[float, float]] = []  # (slope, budget length)
    for i in range(len(w)):
        if w[i] == 0.0:
            continue
        order = np.argsort(c[i], kind="stable")
        cs, fs = c[i][order], f[order]
        if cs[0] > 1e-12:
            raise ValueError(
                f"source atom {i} has no zero-cost candidate (closest is "
                f"{cs[0]:.3e}); include the center's support"
            )
        # Dominated candidates (some cheaper point is at least as good) can
        # never enter the hull; dropping them first keeps the hull loop short.
        keep = np.empty(len(fs), dtype=bool)
        keep[0] = True
        keep[1:] = fs[1:] < np.minimum.accumulate(fs)[:-1]
        cs, fs = cs[keep], fs[keep]
        # Decreasing lower convex hull over (cost, value).
        hull: list[tuple[float, float]] = []
        for cj, fj in zip(cs, fs):
            pt = (float(cj), float(fj))
            if hull and pt[1] >= hull[-1][1]:
                continue
            while len(hull) >= 2:
                (c1, f1), (c2, f2) = hull[-2], hull[-1]
                # Drop the middle point when the new segment undercuts it.
                if (f2 - f1) * (pt[0] - c1) >= (pt[1] - f1) * (c2 - c1):
                    hull.pop()
                else:
                    break
            if hull and pt[0] <= hull[-1][0] + 1e-15:
                hull.pop()
            hull.append(pt)
        total += w[i] * hull[0][1]
        for (c1, f1), (c2, f2) in zip(hull, hull[1:]):
            slope = (f2 - f1) / (c2 - c1)
            segments.append((slope, w[i] * (c2 - c1)))
    remaining = budget
    for slope, length in sorted(segments, key=lambda s: s[0]):
        if remaining <= 0.0 or slope >= 0.0:
            break
        used = min(length, remaining)
        total += slope * used
        remaining -= used
    return total


def solve_inner_inf(
    ball: AmbiguityBall,
    profile: Sequence[float],
    candidates: np.ndarray,
    known_state: Sequence[float],
    cfg: ScenarioConfig,
    n_t: int = 200,
) -> float:
    """Worst-case expected clearance over the ball, on a finite support."""
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    center_pts, center_w = _merged_center(ball.center)
    costs = np.linalg.norm(center_pts[:, None, :] - cand[None, :, :], axis=2)
    if np.any(costs.min(axis=1) > 1e-12):
        raise ValueError("candidate support must include the ball center's support")
    tau = np.linspace(0.0, TWO_PI, n_t)
    blue = blue_path(profile, cfg, tau)
    known_xy = red_position_path(
        np.asarray(known_state, dtype=float).reshape(1, 5), tau, cfg
    )[0]
    cand_xy = red_position_path(cand, tau, cfg) + np.array([cfg.square_side, 0.0])
    best_known = float(((known_xy - blue) ** 2).sum(axis=1).min())
    d_cand = ((cand_xy - blue[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    f_vals = np.minimum(best_known, d_cand)
    return constrained_min_expectation(
        center_w, costs**ball.order, f_vals, ball.radius**ball.order
    )


# --- outer solver -----------------------------------------------------------------


def solve_dro(
    known_state: Sequence[float],
    ball: AmbiguityBall,
    cfg: ScenarioConfig,
    rng: np.random.Generator | None = None,
    n_t: int = 200,
    n_starts: int = 20,
    tol: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Best speed profile and its worst-case expected squared clearance.

    Multi-start pairwise coordinate ascent on the profile polytope (box
    constraints plus the fixed crossing-time sum).  Mass transfers between
    coordinate pairs preserve the sum; each pair is line-searched on a
    coarse grid and polished.  Local optimality only; the returned value is
    a certified lower bound of the restricted sup-inf.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = cfg.n_segments
    target = cfg.profile_sum
    cand = candidate_support(ball)
    center_pts, weights = _merged_center(ball.center)
    costs = (
        np.linalg.norm(center_pts[:, None, :] - cand[None, :, :], axis=2) ** ball.order
    )
    budget = ball.radius**ball.order
    tau = np.linspace(0.0, TWO_PI, n_t)
    coverage = _segment_coverage(tau, n)
    known_xy = red_position_path(
        np.asarray(known_state, dtype=float).reshape(1, 5), tau, cfg
    )[0]
    cand_xy = red_position_path(cand, tau, cfg) + np.array([cfg.square_side, 0.0])
    cand_x = cand_xy[:, :, 0]
    cand_y2 = cand_xy[:, :, 1] ** 2
    known_y2 = known_xy[:, 1] ** 2

    def evaluate_many(xs: np.ndarray) -> list[float]:
        bx = xs @ coverage.T  # (B, n_t)
        best_known = ((known_xy[:, 0][None, :] - bx) ** 2 + known_y2[None, :]).min(axis=1)
        dc = ((cand_x[None, :, :] - bx[:, None, :]) ** 2 + cand_y2[None, :, :]).min(axis=2)
        f_vals = np.minimum(best_known[:, None], dc)
        return [
            constrained_min_expectation(weights, costs, row, budget) for row in f_vals
        ]

    def evaluate(x: np.ndarray) -> float:
        return evaluate_many(x[None, :])[0]

    def feasible_start() -> np.ndarray:
        x = rng.uniform(cfg.v_min, cfg.v_max, size=n)
        for _ in range(50):
            x += (target - x.sum()) / n
            x = np.clip(x, cfg.v_min, cfg.v_max)
            if abs(x.sum() - target) <= 1e-12 * max(1.0, target):
                break
        x[0] += target - x.sum()
        return x

    if cfg.v_min == cfg.v_max:
        x = np.full(n, cfg.v_min)
        return x, evaluate(x)

    best_x: np.ndarray | None = None
    best_val = -math.inf
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    for _ in range(max(1, n_starts)):
        x = feasible_start()
        val = evaluate(x)
        for _sweep in range(30):
            improved = 0.0
            for k, l in pairs:
                lo = max(cfg.v_min - x[k], x[l] - cfg.v_max)
                hi = min(cfg.v_max - x[k], x[l] - cfg.v_min)
                if hi - lo <= 1e-12:
                    continue

                def shifted(t: float) -> np.ndarray:
                    y = x.copy()
                    y[k] += t
                    y[l] -= t
                    return y

                probes = np.linspace(lo, hi, 9)
                probe_vals = evaluate_many(np.stack([shifted(t) for t in probes]))
                j = int(np.argmax(probe_vals))
                span = probes[1] - probes[0]
                left = max(lo, probes[j] - span)
                right = min(hi, probes[j] + span)
                opt = minimize_scalar(
                    lambda t: -evaluate(shifted(t)),
                    bounds=(left, right),
                    method="bounded",
                    options={"xatol": 1e-6},
                )
                cand_t, cand_val = float(opt.x), -float(opt.fun)
                if probe_vals[j] > cand_val:
                    cand_t, cand_val = float(probes[j]), float(probe_vals[j])
                if cand_val > val + 1e-15:
                    improved += cand_val - val
                    x = shifted(cand_t)
                    val = cand_val
            if improved < tol:
                break
        if val > best_val:
            best_val = val
            best_x = x
    assert best_x is not None
    return best_x, best_val


# --- the seeded experiment ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRow:
    realization: int
    checkpoint: int
    mode: str
    radius: float
    dro_value: float
    min_true_distance: float


@dataclass(frozen=True)
class ExperimentReport:
    """All rows of a comparison run plus per-checkpoint means."""

    rows: tuple[ExperimentRow, ...]
    config: ScenarioConfig
    checkpoints: tuple[int, ...]

    def summary(self) -> dict:
        out: dict = {"checkpoints": {}}
        for cp in self.checkpoints:
            entry = {}
            for mode in ("dynamic", "static"):
                vals = [
                    r.dro_value
                    for r in self.rows
                    if r.checkpoint == cp and r.mode == mode
                ]
                entry[f"{mode}_mean"] = sum(vals) / len(vals) if vals else None
            entry["dynamic_minus_static"] = (
                entry["dynamic_mean"] - entry["static_mean"]
                if entry["dynamic_mean"] is not None
                else None
            )
            out["checkpoints"][str(cp)] = entry
        return out


SAMPLE_OFFSETS = (-0.2, -0.1, 0.0)  # position fixes collected just before each checkpoint


def _observe_and_reconstruct(theta: float, cfg: ScenarioConfig) -> np.ndarray:
    """Sample one watcher near its checkpoint and invert the samples.

    Checkpoint times are multiples of the period, so the canonical window
    around time zero produces bit-identical samples for every checkpoint.
    """
    xi0 = initial_red_state(theta, cfg.orbit_radius)
    times = [t for t in SAMPLE_OFFSETS]
    positions = np.array(
        [
            red_uav_flow(theta, xi0[:4], t, 0.0, cfg.tracking_gain, cfg.orbit_radius)[:2]
            for t in times
        ]
    )
    return reconstruct_red_state(times, positions, cfg)


def run_single_realization(
    cfg: ScenarioConfig,
    realization: int,
    checkpoints: Sequence[int],
    n_t: int = 200,
    n_starts: int = 20,
) -> list[ExperimentRow]:
    """One seeded pass: draw watcher phases, recover states, solve both DROs."""
    cps = sorted(int(c) for c in checkpoints)
    if not cps or cps[0] < 1:
        raise ValueError(f"checkpoints must be positive integers, got {checkpoints}")
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, realization)))
    n_watchers = cps[-1] + 1  # one beyond the last checkpoint: the unseen vehicle
    support = np.array(cfg.theta_support)
    thetas = rng.choice(support, size=n_watchers, p=np.array(cfg.theta_probabilities))
    cache: dict[float, np.ndarray] = {}
    recovered = []
    for theta in thetas[:-1]:
        key = float(theta)
        if key not in cache:
            cache[key] = _observe_and_reconstruct(key, cfg)
        recovered.append(cache[key])
    recovered = np.array(recovered)

    rows: list[ExperimentRow] = []
    for cp in cps:
        known = recovered[cp - 1]
        true_next = initial_red_state(float(thetas[cp]), cfg.orbit_radius)
        for mode in ("dynamic", "static"):
            if mode == "dynamic":
                center = DiscreteDistribution.empirical(recovered[:cp])
                radius = calibrated_radius(cfg.eps_ref, cfg.n_ref, cp)
            else:
                center = DiscreteDistribution.empirical(recovered[cp - 1 : cp])
                radius = calibrated_radius(cfg.eps_ref, cfg.n_ref, 1)
            ball = AmbiguityBall(center=center, radius=radius)
            # Both modes share one start sequence (common random numbers):
            # identical balls then produce identical values, and the paired
            # comparison has lower variance.
            solver_rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, realization, cp))
            )
            profile, value = solve_dro(
                known, ball, cfg, rng=solver_rng, n_t=n_t, n_starts=n_starts
            )
            true_d2 = dro_objective(profile, true_next, known, cfg, n_t=n_t)
            rows.append(
                ExperimentRow(
                    realization=realization,
                    checkpoint=cp,
                    mode=mode,
                    radius=radius,
                    dro_value=value,
                    min_true_distance=math.sqrt(true_d2),
                )
            )
    return rows


def _realization_args(args: tuple) -> list[ExperimentRow]:
    return run_single_realization(*args)


def run_experiment(
    cfg: ScenarioConfig,
    n_realizations: int,
    checkpoints: Sequence[int],
    n_t: int = 200,
    n_starts: int = 20,
    jobs: int = 1,
) -> ExperimentReport:
    """Seeded dynamic-vs-static comparison across independent realizations.

    Realizations are independent; with ``jobs`` > 1 they run in separate
    processes.  Row order and content depend only on the config and
    arguments, never on the worker count.
    """
    if n_realizations < 1:
        raise ValueError(f"n_realizations must be >= 1, got {n_realizations}")
    tasks = [(cfg, r, tuple(checkpoints), n_t, n_starts) for r in range(1, n_realizations + 1)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_realization_args, tasks))
    else:
        chunks = [_realization_args(t) for t in tasks]
    rows = tuple(row for chunk in chunks for row in chunk)
    return ExperimentReport(
        rows=rows, config=cfg, checkpoints=tuple(sorted(int(c) for c in checkpoints))
    )
