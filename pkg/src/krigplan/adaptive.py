"""Sequential measurement planning.

Each iteration refits the variogram, kriges the whole grid, and scores
every unmeasured combination by the total uncertainty that would remain
if it were measured next: the sum, over grid points whose confidence
interval still straddles the threshold, of the hypothetical kriging
variance conditional on the augmented measurement set (variogram held
fixed).  The candidate minimizing that remaining-uncertainty score is
measured next.  The run stops naturally once no interval straddles the
threshold, or on budget after max_iterations adaptive measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DuplicateLocationError, OracleMissError
from .grid import (
    Combination,
    GridSpec,
    Measurement,
    build_grid,
    ensure_unique_locations,
    scaled_coords,
)
from .kriging import assemble_system, solve_grid, z_quantile
from .variogram import VariogramModel, empirical_variogram, eval_model, select_model

STOP_NATURAL = "natural"
STOP_BUDGET = "budget"

# Candidates whose scores differ by less than this are tied; the earliest in
# row-major grid order wins.  Keeps the argmin stable under float noise.
TIE_TOL = 1e-12

# Below this current variance the rank-one update divides by almost zero;
# such candidates are rescored by full re-assembly instead.
FAST_PATH_VARIANCE_MIN = 1e-10


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    threshold: float
    initial_design: tuple[Combination, ...]
    alpha: float = 0.1
    max_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.threshold) or self.threshold <= 0:
            raise ConfigurationError(f"threshold must be positive, got {self.threshold}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must be in (0, 1), got {self.alpha}")
        z_quantile(self.alpha)
        if self.max_iterations < 0:
            raise ConfigurationError(f"max_iterations must be >= 0, got {self.max_iterations}")
        object.__setattr__(self, "initial_design", tuple(self.initial_design))
        seen = set()
        for c in self.initial_design:
            if not self.grid.contains(c):
                raise ConfigurationError(f"initial design point ({c.m}, {c.k}) is not on the grid")
            if c in seen:
                raise DuplicateLocationError(f"duplicate initial design point ({c.m}, {c.k})")
            seen.add(c)


@dataclass(frozen=True)
class IterationRecord:
    """Audit record for one adopted measurement."""

    iteration: int
    location: Combination
    rc_score: float
    model: VariogramModel
    n_uncertain: int


@dataclass(frozen=True)
class PendingSuggestion:
    """A suggestion produced by one fit+selection step, awaiting its measurement."""

    location: Combination
    phase: str  # "initial" or "adaptive"
    rc_score: float | None = None
    model: VariogramModel | None = None
    n_uncertain: int | None = None


@dataclass
class ExperimentState:
    config: ExperimentConfig
    measurements: list[Measurement] = field(default_factory=list)
    model: VariogramModel | None = None
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)
    stop_reason: str | None = None
    pending: PendingSuggestion | None = None

    def __post_init__(self):
        ensure_unique_locations(self.measurements)
        if self.iteration < 0 or len(self.history) != self.iteration:
            raise ConfigurationError(
                f"history length {len(self.history)} does not match iteration {self.iteration}"
            )

    def measured_locations(self) -> set[Combination]:
        return {m.location for m in self.measurements}


def weight_indicator(prediction, threshold: float) -> int:
    """1 while the CI straddles the threshold, 0 once it falls entirely on
    one side (an upper bound exactly at the threshold counts as below)."""
    if prediction.ci_lower > threshold or prediction.ci_upper <= threshold:
        return 0
    return 1


def _current_model(state: ExperimentState) -> VariogramModel:
    if state.model is not None:
        return state.model
    emp = empirical_variogram(state.measurements, state.config.grid)
    return select_model(emp)


@dataclass
class _Evaluation:
    """One fit's view of the grid: predictions plus straddle indicators."""

    model: VariogramModel
    grid: list[Combination]
    means: np.ndarray
    variances: np.ndarray
    rhs: np.ndarray | None
    solution: np.ndarray | None
    unmeasured_idx: np.ndarray
    indicators: np.ndarray  # bool, aligned with unmeasured_idx

    @property
    def n_uncertain(self) -> int:
        return int(self.indicators.sum())


def _evaluate_grid(state: ExperimentState, model: VariogramModel) -> _Evaluation:
    config = state.config
    grid = build_grid(config.grid)
    measured = state.measured_locations()
    unmeasured_idx = np.array([i for i, p in enumerate(grid) if p not in measured], dtype=int)

    if model.is_degenerate:
        mean = float(np.mean([m.response for m in state.measurements]))
        means = np.full(len(grid), mean)
        observed = {m.location: m.response for m in state.measurements}
        for i, p in enumerate(grid):
            if p in observed:
                means[i] = observed[p]
        variances = np.zeros(len(grid))
        indicators = np.zeros(len(unmeasured_idx), dtype=bool)
        return _Evaluation(model, grid, means, variances, None, None, unmeasured_idx, indicators)

    system = assemble_system(state.measurements, model, config.grid)
    sol = solve_grid(system, grid)
    z = z_quantile(config.alpha)
    half = z * np.sqrt(sol.variances[unmeasured_idx])
    mu = sol.means[unmeasured_idx]
    lower, upper = mu - half, mu + half
    indicators = ~((lower > config.threshold) | (upper <= config.threshold))
    return _Evaluation(model, grid, sol.means, sol.variances, sol.rhs, sol.solution,
                       unmeasured_idx, indicators)


def _fast_scores(state: ExperimentState, ev: _Evaluation, indicators: np.ndarray) -> np.ndarray:
    """Scores for every unmeasured candidate via the bordered-system identity.

    Appending candidate x to the measurement set extends the solved system by
    one row whose border column is exactly the right-hand side of x under the
    current system.  Block elimination then gives the conditional variance at
    target t in closed form:

        var(t | S + x) = var(t | S) - (q - g)^2 / var(x | S)

    with q the cross-solve term rhs(x) . solve(rhs(t)) and g = gamma(x, t).
    Everything needed is already in the batch grid solution, so all candidate
    scores come out of two matrix products.  Candidates with vanishing
    current variance fall back to full re-assembly (rc_score).
    """
    idx = ev.unmeasured_idx
    variances = ev.variances[idx]
    X = ev.solution[:, idx]
    D = ev.rhs[:, idx]
    q = X.T @ D
    pts = scaled_coords([ev.grid[i] for i in idx], state.config.grid)
    g = eval_model(ev.model, cdist(pts, pts))
    np.fill_diagonal(g, 0.0)

    safe = variances >= FAST_PATH_VARIANCE_MIN
    denom = np.where(safe, variances, 1.0)
    updated = variances[None, :] - (q - g) ** 2 / denom[:, None]
    updated = np.maximum(updated, 0.0)
    np.fill_diagonal(updated, 0.0)  # the candidate itself is not a target

    weights = indicators.astype(float)
    scores = updated @ weights
    for pos in np.nonzero(~safe)[0]:
        scores[pos] = _score_by_reassembly(state, ev, indicators, int(pos))
    return scores


def _score_by_reassembly(state: ExperimentState, ev: _Evaluation,
                         indicators: np.ndarray, pos: int) -> float:
    """Reference score: rebuild the augmented system and solve it afresh."""
    idx = ev.unmeasured_idx
    candidate = ev.grid[idx[pos]]
    target_pos = [p for p in range(len(idx)) if p != pos and indicators[p]]
    if not target_pos:
        return 0.0
    targets = [ev.grid[idx[p]] for p in target_pos]
    hyp = list(state.measurements) + [Measurement(candidate, 0.0)]
    hyp_system = assemble_system(hyp, ev.model, state.config.grid)
    hyp_sol = solve_grid(hyp_system, targets)
    return float(hyp_sol.variances.sum())


def rc_score(candidate: Combination, state: ExperimentState, indicators=None) -> float:
    """Remaining-uncertainty score for one candidate, by full re-assembly.

    This is the reference implementation the batched fast path must agree
    with; select_next uses the fast path, tests and callers that only need
    one score use this.  The indicator set comes from the current fit unless
    an explicit boolean array (aligned with the unmeasured grid points in
    row-major order) is supplied.
    """
    model = _current_model(state)
    ev = _evaluate_grid(state, model)
    idx_list = list(ev.unmeasured_idx)
    positions = {ev.grid[i]: p for p, i in enumerate(idx_list)}
    if candidate not in positions:
        raise ConfigurationError(
            f"candidate ({candidate.m}, {candidate.k}) is measured or off-grid"
        )
    ind = ev.indicators if indicators is None else np.asarray(indicators, dtype=bool)
    if model.is_degenerate:
        return 0.0
    return _score_by_reassembly(state, ev, ind, positions[candidate])


def candidate_scores(state: ExperimentState, indicators=None):
    """(candidates, scores) for every unmeasured grid point, row-major.

    indicators defaults to the straddle set of the current fit; tests pass
    explicit arrays (e.g. all ones) to probe the pure variance objective.
    """
    model = _current_model(state)
    ev = _evaluate_grid(state, model)
    candidates = [ev.grid[i] for i in ev.unmeasured_idx]
    ind = ev.indicators if indicators is None else np.asarray(indicators, dtype=bool)
    if len(ind) != len(candidates):
        raise ConfigurationError(
            f"indicator array length {len(ind)} does not match {len(candidates)} unmeasured points"
        )
    if model.is_degenerate or not candidates:
        return candidates, np.zeros(len(candidates))
    return candidates, _fast_scores(state, ev, ind)


def _argmin_tied(scores: np.ndarray) -> int:
    smin = float(scores.min())
    tol = TIE_TOL * max(1.0, abs(smin))
    return int(np.argmax(scores <= smin + tol))


def select_next(state: ExperimentState) -> Combination | None:
    """Next combination to measure, or None when nothing is left to learn.

    None means the natural stop: every unmeasured point's CI already falls
    entirely on one side of the threshold (or the grid is fully measured).
    Score ties break toward the earliest point in row-major grid order.
    """
    model = _current_model(state)
    ev = _evaluate_grid(state, model)
    if len(ev.unmeasured_idx) == 0 or ev.n_uncertain == 0:
        return None
    scores = _fast_scores(state, ev, ev.indicators)
    pos = _argmin_tied(scores)
    return ev.grid[ev.unmeasured_idx[pos]]


def check_stop(state: ExperimentState) -> str | None:
    """STOP_NATURAL, STOP_BUDGET, or None to continue.

    The natural condition is evaluated first, so a run that exhausts its
    budget on the same pass that resolves all uncertainty reports natural.
    """
    model = _current_model(state)
    ev = _evaluate_grid(state, model)
    if len(ev.unmeasured_idx) == 0 or ev.n_uncertain == 0:
        return STOP_NATURAL
    if state.iteration >= state.config.max_iterations:
        return STOP_BUDGET
    return None


def _oracle_value(oracle, location: Combination, state: ExperimentState) -> float:
    try:
        return oracle.evaluate(location)
    except OracleMissError as exc:
        exc.state = state
        raise


def _notify(on_update, state: ExperimentState) -> None:
    if on_update is not None:
        on_update(state)


def run_experiment(config: ExperimentConfig, oracle, state: ExperimentState | None = None,
                   on_update=None) -> ExperimentState:
    """Run (or resume) the measure-fit-select loop to a stop.

    The loop is deterministic given the config and oracle: refits depend only
    on the measurement set, selection ties break by grid order, and oracle
    noise is keyed by location.  A run interrupted at any point can therefore
    be resumed from its persisted state and will reproduce exactly the
    history an uninterrupted run would have produced.  on_update (when given)
    is called after every appended measurement, which is the persistence
    hook the CLI uses.  An oracle miss aborts with the partial state attached
    to the exception.
    """
    if state is None:
        state = ExperimentState(config=config)
    elif state.config != config:
        raise ConfigurationError("state was created under a different config")

    state.stop_reason = None
    state.pending = None
    measured = state.measured_locations()

    for point in config.initial_design:
        if point in measured:
            continue
        value = _oracle_value(oracle, point, state)
        state.measurements.append(Measurement(point, value))
        measured.add(point)
        _notify(on_update, state)

    while True:
        emp = empirical_variogram(state.measurements, config.grid)
        model = select_model(emp)
        state.model = model
        ev = _evaluate_grid(state, model)
        if len(ev.unmeasured_idx) == 0 or ev.n_uncertain == 0:
            state.stop_reason = STOP_NATURAL
            break
        if state.iteration >= config.max_iterations:
            state.stop_reason = STOP_BUDGET
            break
        scores = _fast_scores(state, ev, ev.indicators)
        pos = _argmin_tied(scores)
        chosen = ev.grid[ev.unmeasured_idx[pos]]
        value = _oracle_value(oracle, chosen, state)
        state.measurements.append(Measurement(chosen, value))
        measured.add(chosen)
        state.iteration += 1
        state.history.append(IterationRecord(
            iteration=state.iteration,
            location=chosen,
            rc_score=float(scores[pos]),
            model=model,
            n_uncertain=ev.n_uncertain,
        ))
        _notify(on_update, state)

    _notify(on_update, state)
    return state


def suggest_next(state: ExperimentState) -> tuple[PendingSuggestion | None, str | None]:
    """One fit + selection without measuring: the interactive-mode step.

    Returns (suggestion, stop_reason); exactly one of the two is set.  While
    the initial design is incomplete the suggestion is its first unmeasured
    point, after that it is the score argmin.  The suggestion is also stored
    on state.pending so the completing append can record the audit entry.
    """
    measured = state.measured_locations()
    for point in state.config.initial_design:
        if point not in measured:
            suggestion = PendingSuggestion(location=point, phase="initial")
            state.pending = suggestion
            return suggestion, None

    emp = empirical_variogram(state.measurements, state.config.grid)
    model = select_model(emp)
    state.model = model
    ev = _evaluate_grid(state, model)
    if len(ev.unmeasured_idx) == 0 or ev.n_uncertain == 0:
        state.stop_reason = STOP_NATURAL
        state.pending = None
        return None, STOP_NATURAL
    if state.iteration >= state.config.max_iterations:
        state.stop_reason = STOP_BUDGET
        state.pending = None
        return None, STOP_BUDGET
    scores = _fast_scores(state, ev, ev.indicators)
    pos = _argmin_tied(scores)
    suggestion = PendingSuggestion(
        location=ev.grid[ev.unmeasured_idx[pos]],
        phase="adaptive",
        rc_score=float(scores[pos]),
        model=model,
        n_uncertain=ev.n_uncertain,
    )
    state.stop_reason = None
    state.pending = suggestion
    return suggestion, None


def record_appended_measurement(state: ExperimentState, measurement: Measurement) -> None:
    """Append a measurement produced outside the loop (interactive mode).

    Only two kinds of appends keep the audit history meaningful: completing
    the pending suggestion, or supplying an unmeasured initial-design point.
    Anything else is rejected.
    """
    loc = measurement.location
    if loc in state.measured_locations():
        raise DuplicateLocationError(f"location ({loc.m}, {loc.k}) is already measured")
    pending = state.pending
    if pending is not None and pending.location == loc:
        state.measurements.append(measurement)
        if pending.phase == "adaptive":
            state.iteration += 1
            state.history.append(IterationRecord(
                iteration=state.iteration,
                location=loc,
                rc_score=float(pending.rc_score),
                model=pending.model,
                n_uncertain=int(pending.n_uncertain),
            ))
        state.pending = None
        state.stop_reason = None
        return
    if loc in set(state.config.initial_design):
        state.measurements.append(measurement)
        state.stop_reason = None
        return
    raise ConfigurationError(
        f"location ({loc.m}, {loc.k}) is neither the pending suggestion nor an "
        "unmeasured initial-design point; run `step` first to get a suggestion"
    )
