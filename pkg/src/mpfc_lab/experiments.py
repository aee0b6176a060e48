"""Scripted numerical experiments: relaxation-time continuation, the
rescaling isometry, boundary-layer windows, and dissipativity sweeps.

All cross-beta distances are taken after mapping states through
:func:`rescale` into the common product space tagged with beta0, where the
map (u, v) -> (u, sqrt(beta/beta0) v) is an exact isometry between the
beta-weighted norms.  Initial data for a run at relaxation time beta is
prepared as (phi0, sqrt(beta0/beta) phi1), and (phi0, 0) for beta = 0, so
every member of a sweep starts from the same point of the common space.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .integrators import StepKind, StepScheme, step
from .model import ModelParams, State
from .spectral import Field, Grid, hm_norm, x_norm, zero_mean

DEFAULT_BETA_VALUES = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.0)
LATE_WINDOW_START = 1.0
EARLY_WINDOW_END = 0.1
ENVELOPE_SLACK = 2.0


def max_workers(n_jobs: int) -> int:
    """Worker count for sweep members, capped by the MPFC_THREADS env var."""
    cap = os.environ.get("MPFC_THREADS", "")
    limit = os.cpu_count() or 1
    if cap.strip():
        limit = max(1, int(cap))
    return max(1, min(n_jobs, limit))


def _map_jobs(fn, items):
    workers = max_workers(len(items))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def band_limited_field(
    grid: Grid,
    rng: np.random.Generator,
    kmax: int = 8,
    amplitude: float = 0.1,
    mean_value: float = 0.0,
) -> Field:
    """mean + seeded random zero-mean perturbation supported on |kappa_j| <= kmax.

    The perturbation is white noise truncated to the band and renormalised so
    its max-norm equals ``amplitude``.
    """
    if kmax < 1 or kmax > grid.n_points / 3.0:
        raise ValueError(
            f"kmax must be in [1, n_points/3], got {kmax} for n={grid.n_points}"
        )
    noise = rng.standard_normal(grid.shape)
    spec = np.fft.fftn(noise, norm="forward")
    band = np.ones(grid.shape, dtype=bool)
    for a in grid.freqs:
        band &= np.abs(a) <= kmax
    band[grid.zero_index] = False
    spec *= band
    vals = np.fft.ifftn(spec, norm="forward").real
    peak = float(np.max(np.abs(vals)))
    if amplitude > 0.0 and peak > 0.0:
        vals *= amplitude / peak
    else:
        vals = np.zeros(grid.shape)
    return Field(grid, values=vals + mean_value)


def rescale(state: State, beta0: float) -> State:
    """Map (u, v) -> (u, sqrt(beta/beta0) v), tagged with beta0.

    Preserves every product-space norm: the level-i norm of the image at
    beta0 equals the level-i norm of the input at its own beta.
    """
    if state.beta == 0.0:
        raise ValueError("rescale requires beta > 0 (beta=0 uses (u, 0) as is)")
    if not 0.0 < state.beta <= beta0:
        raise ValueError(f"rescale needs 0 < beta <= beta0, got {state.beta}, {beta0}")
    scale = np.sqrt(state.beta / beta0)
    return State(
        phi=state.phi, phi_t=state.phi_t * scale, beta=beta0, time=state.time
    )


def rescale_inverse(state: State, beta: float) -> State:
    """Inverse of :func:`rescale`: send a beta0-tagged state to beta."""
    if not 0.0 < beta <= state.beta:
        raise ValueError(f"need 0 < beta <= beta0={state.beta}, got {beta}")
    scale = np.sqrt(state.beta / beta)
    return State(phi=state.phi, phi_t=state.phi_t * scale, beta=beta, time=state.time)


@dataclass(frozen=True)
class BetaSweep:
    """A family of runs sharing initial data across relaxation times.

    beta_values must be strictly descending, nonnegative, with an optional
    terminal 0; sample_times must be monotone in (0, horizon] and at least 1
    (the continuation estimates only hold from t = 1 on).
    """

    beta_values: tuple
    shared_phi0: Field
    shared_phi1: Field
    horizon: float
    sample_times: tuple

    def __post_init__(self):
        bv = tuple(float(b) for b in self.beta_values)
        if any(b2 >= b1 for b1, b2 in zip(bv, bv[1:])):
            raise ValueError("unsorted sweep: beta_values must be strictly descending")
        if any(b < 0 for b in bv):
            raise ValueError("beta_values must be nonnegative")
        st = tuple(float(t) for t in self.sample_times)
        if any(t2 <= t1 for t1, t2 in zip(st, st[1:])):
            raise ValueError("sample_times must be strictly increasing")
        if not st or st[0] <= 0 or st[-1] > self.horizon:
            raise ValueError("sample_times must lie in (0, horizon]")
        object.__setattr__(self, "beta_values", bv)
        object.__setattr__(self, "sample_times", st)


def default_sweep(grid: Grid, seed: int = 0, mean_phi0: float = 0.1,
                  mean_phi1: float = 0.2, amplitude: float = 0.1,
                  kmax: int = 8) -> BetaSweep:
    """The stock continuation sweep: two decades of beta plus the limit 0."""
    rng = np.random.default_rng(seed)
    phi0 = band_limited_field(grid, rng, kmax, amplitude, mean_phi0)
    phi1 = band_limited_field(grid, rng, kmax, amplitude, mean_phi1)
    return BetaSweep(
        beta_values=DEFAULT_BETA_VALUES,
        shared_phi0=phi0,
        shared_phi1=phi1,
        horizon=4.0,
        sample_times=(1.0, 2.0, 4.0),
    )


@dataclass(frozen=True)
class DistanceRecord:
    t: float
    beta_pair: tuple
    dist: float

    def __post_init__(self):
        if self.dist < 0:
            raise ValueError("dist must be >= 0")


@dataclass
class BetaScanResult:
    records: list           # DistanceRecord, ordered by (t, pair)
    slopes: dict            # t -> log-log slope of dist(beta, 0) vs beta
    holder_K: dict          # t -> K fitted at the coarsest recorded pair
    holder_ok: dict         # t -> no recorded pair violates K*(gap)^(1/6)
    holder_worst: dict      # t -> max dist / (K*gap^(1/6)) over pairs
    monotone_vs_zero: dict  # t -> dist(beta, 0) nonincreasing as beta drops
                            # (informational flag, never a hard failure)


def _sample_steps(sample_times, dt: float) -> dict:
    out = {}
    for t in sample_times:
        n = int(round(t / dt))
        if abs(n * dt - t) > 1e-9:
            raise ValueError(f"sample time {t} is not a multiple of dt={dt}")
        out[n] = t
    return out


def _run_rescaled(beta, sweep, params, dt):
    """Integrate one sweep member; return {t: rescaled state at beta0}."""
    grid = sweep.shared_phi0.grid
    beta0 = params.beta0
    if beta == 0.0:
        state = State.overdamped(sweep.shared_phi0)
        kind = StepKind.PFC_IMEX1
    else:
        lift = np.sqrt(beta0 / beta)
        state = State(
            phi=sweep.shared_phi0,
            phi_t=sweep.shared_phi1 * lift,
            beta=beta,
            time=0.0,
        )
        kind = StepKind.MPFC_IMEX1
    scheme = StepScheme(kind, dt)
    run_params = replace(params, beta=beta)
    marks = _sample_steps(sweep.sample_times, dt)
    n_final = max(marks)
    out = {}
    for n in range(1, n_final + 1):
        state = step(state, scheme, run_params)
        if n in marks:
            if beta == 0.0:
                out[marks[n]] = State(
                    phi=state.phi,
                    phi_t=Field.zeros(grid),
                    beta=beta0,
                    time=state.time,
                )
            else:
                out[marks[n]] = rescale(state, beta0)
    return out


def beta_distance_scan(
    sweep: BetaSweep, params: ModelParams, dt: float = 1e-3
) -> BetaScanResult:
    """Cross-beta distances in the common space, with slope and Hoelder checks.

    Records, at each sample time, the distance for each adjacent pair of the
    sweep and for each positive beta against the beta = 0 member; emits the
    log-log slope of dist(beta, 0) versus beta at each fixed sample time, and
    checks every recorded distance against K*(beta1-beta2)^(1/6) with K
    fitted at the coarsest (largest-gap) recorded pair.
    """
    betas = sweep.beta_values
    if any(b > params.beta0 for b in betas):
        raise ValueError("sweep betas must not exceed params.beta0")
    if min(sweep.sample_times) < LATE_WINDOW_START:
        raise ValueError("distance scan needs sample_times >= 1")
    states = dict(
        zip(betas, _map_jobs(lambda b: _run_rescaled(b, sweep, params, dt), betas))
    )

    pairs = []
    for b1, b2 in zip(betas, betas[1:]):
        pairs.append((b1, b2))
    if betas[-1] == 0.0:
        for b in betas[:-1]:
            if (b, 0.0) not in pairs:
                pairs.append((b, 0.0))
    pairs.sort(key=lambda p: (-p[0], -p[1]))

    records = []
    slopes, holder_K, holder_ok, holder_worst, monotone = {}, {}, {}, {}, {}
    for t in sweep.sample_times:
        dists = {}
        for b1, b2 in pairs:
            sa, sb = states[b1][t], states[b2][t]
            diff = State(
                phi=sa.phi - sb.phi,
                phi_t=sa.phi_t - sb.phi_t,
                beta=params.beta0,
                time=t,
            )
            d = x_norm(diff, 0)
            dists[(b1, b2)] = d
            records.append(DistanceRecord(t=t, beta_pair=(b1, b2), dist=d))
        if betas[-1] == 0.0 and len(betas) > 2:
            positive = betas[:-1]
            xs = np.log([b for b in positive])
            ys = np.log([max(dists[(b, 0.0)], 1e-300) for b in positive])
            slopes[t] = float(np.polyfit(xs, ys, 1)[0])
            to_zero = [dists[(b, 0.0)] for b in positive]
            monotone[t] = all(
                later <= earlier + 1e-9
                for earlier, later in zip(to_zero, to_zero[1:])
            )
        coarsest = max(pairs, key=lambda p: p[0] - p[1])
        gap0 = coarsest[0] - coarsest[1]
        K = dists[coarsest] / gap0 ** (1.0 / 6.0)
        holder_K[t] = K
        ratios = [
            d / (K * (b1 - b2) ** (1.0 / 6.0)) for (b1, b2), d in dists.items()
        ]
        holder_worst[t] = max(ratios)
        holder_ok[t] = holder_worst[t] <= 1.0 + 1e-9
    return BetaScanResult(
        records, slopes, holder_K, holder_ok, holder_worst, monotone
    )


def boundary_layer_metric(trajectory_states, beta: float) -> list:
    """Time series of ||phi_t(t)||_{-1} along a stored trajectory (beta > 0)."""
    if not beta > 0.0:
        raise ValueError("boundary_layer_metric requires beta > 0")
    return [(s.time, hm_norm(s.phi_t, -1)) for s in trajectory_states]


@dataclass
class BoundaryLayerReport:
    series: dict        # beta -> list of (t, ||phi_t||_{-1})
    early_max: dict     # beta -> max over t in [0, 0.1]
    late_max: dict      # beta -> max over t in [1, horizon]
    envelope: float     # slack * late_max at the largest beta
    within_envelope: dict  # beta -> late_max <= envelope


def boundary_layer_scan(
    betas,
    phi0: Field,
    phi1: Field,
    params: ModelParams,
    dt: float = 1e-3,
    horizon: float = 4.0,
    rescale_phi1: bool = False,
) -> BoundaryLayerReport:
    """Run the sweep's positive betas and windowed maxima of ||phi_t||_{-1}.

    With ``rescale_phi1`` the velocity data is scaled by sqrt(beta0/beta)
    (the initial layer then grows as beta decreases); otherwise phi1 is used
    as is and the t >= 1 window must stay below a beta-independent envelope,
    taken as the largest-beta run's late maximum times a slack factor 2.
    """
    betas = tuple(sorted((float(b) for b in betas), reverse=True))
    if any(b <= 0 for b in betas):
        raise ValueError("boundary layer scan needs positive betas")
    n_steps = int(round(horizon / dt))

    def one(beta):
        scale = np.sqrt(params.beta0 / beta) if rescale_phi1 else 1.0
        state = State(phi=phi0, phi_t=phi1 * scale, beta=beta, time=0.0)
        scheme = StepScheme(StepKind.MPFC_IMEX1, dt)
        run_params = replace(params, beta=beta)
        series = [(0.0, hm_norm(state.phi_t, -1))]
        for n in range(1, n_steps + 1):
            state = step(state, scheme, run_params)
            series.append((state.time, hm_norm(state.phi_t, -1)))
        return series

    all_series = dict(zip(betas, _map_jobs(one, betas)))
    early = {
        b: max(v for t, v in s if t <= EARLY_WINDOW_END)
        for b, s in all_series.items()
    }
    late = {
        b: max(v for t, v in s if t >= LATE_WINDOW_START)
        for b, s in all_series.items()
    }
    envelope = ENVELOPE_SLACK * late[betas[0]]
    within = {b: late[b] <= envelope for b in betas}
    return BoundaryLayerReport(all_series, early, late, envelope, within)


@dataclass
class DissipativityReport:
    series: dict        # label -> list of (t, y)
    terminal: dict      # label -> y at the horizon
    entry_time: dict    # label -> first time y stays within 10% of terminal
    band: tuple         # (min terminal, max terminal)
    spread: float       # (max - min) / max over terminals


def dissipativity_scan(
    initial_family,
    params: ModelParams,
    horizon: float,
    dt: float = 1e-3,
    store_every: int = 10,
) -> DissipativityReport:
    """Track y(t) = ||phi||_2^2 + beta*||zero_mean(phi_t)||_{-1}^2 per run.

    ``initial_family`` is a list of (label, State) with fixed means and
    varying norms; the report shows whether long-time values enter and stay
    in a data-independent band.
    """

    def one(item):
        label, state = item
        scheme = StepScheme(
            StepKind.MPFC_IMEX1 if state.beta > 0 else StepKind.PFC_IMEX1, dt
        )
        run_params = replace(params, beta=state.beta)
        n_steps = int(round(horizon / dt))

        def metric(s):
            y = hm_norm(s.phi, 2) ** 2
            if s.beta > 0:
                y += s.beta * hm_norm(zero_mean(s.phi_t), -1) ** 2
            return y

        series = [(state.time, metric(state))]
        for n in range(1, n_steps + 1):
            state = step(state, scheme, run_params)
            if n % store_every == 0 or n == n_steps:
                series.append((state.time, metric(state)))
        return label, series

    results = _map_jobs(one, list(initial_family))
    series = {label: s for label, s in results}
    terminal = {label: s[-1][1] for label, s in series.items()}
    entry_time = {}
    for label, s in series.items():
        y_end = terminal[label]
        entry = s[-1][0]
        for i in range(len(s)):
            tail_ok = all(
                abs(y - y_end) <= 0.1 * max(abs(y_end), 1e-300) for _, y in s[i:]
            )
            if tail_ok:
                entry = s[i][0]
                break
        entry_time[label] = entry
    values = list(terminal.values())
    band = (min(values), max(values))
    top = max(abs(v) for v in values)
    spread = 0.0 if top == 0.0 else (band[1] - band[0]) / top
    return DissipativityReport(series, terminal, entry_time, band, spread)
