"""Stochastic c-number trajectory ensembles.

Each trajectory follows the Euler-Maruyama discretization of

    da = [ { i ( delta + 2 g Re b + 2 chi |a|^2 ) - kappa } a + E ] dt
         + sqrt(2 kappa) xi_a
    db = [ ( -i - gamma ) b + i g ( |a|^2 - 1/2 ) ] dt
         + sqrt(2 gamma) xi_b

where xi_o is a complex Gaussian increment with E[|xi_o|^2] =
(n_bar_o + 1/2) dt and E[xi_o^2] = 0: the half quantum on top of the
thermal occupation carries the vacuum fluctuations into the classical
equations.

Noise streams are counter-based (Philox) and keyed by
(master seed, trajectory index), so any trajectory is reproducible in
isolation and ensemble statistics are independent of how trajectories
are distributed over workers.  Trajectories are simulated in fixed-size
blocks, vectorized across the block; block partial sums are merged in
block order, which makes the reduction deterministic for a fixed seed
and trajectory count.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, MisuseError, ParameterError
from .meanfield import BLOWUP_BOUND, PhaseState, Trajectory
from .model import DimensionlessParams

_U64 = (1 << 64) - 1
_DIV_CHECK = 8  # steps between blow-up checks
_NOISE_CHUNK = 2048  # time steps of noise drawn per refill


# ---------------------------------------------------------------------------
# configuration and result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    """Thermal occupations, master seed, and the noise on/off switch.

    Over a step dt each complex increment has independent real and
    imaginary parts of variance (n_bar + 1/2) dt / 2, so that the
    correlator <o_in* o_in> integrates to (n_bar + 1/2) delta(t - t').
    """

    n_bar_a: float = 0.0
    n_bar_b: float = 0.0
    seed: int = 0
    noise_enabled: bool = True

    def __post_init__(self):
        if self.n_bar_a < 0.0 or self.n_bar_b < 0.0:
            raise ParameterError("thermal occupations must be non-negative")
        if not 0 <= int(self.seed) <= _U64:
            raise ParameterError("seed must fit in 64 bits")


@dataclass(frozen=True)
class EnsembleConfig:
    """Trajectory count, integration grid, and retention policy."""

    n_traj: int
    t_end: float
    dt: float = 1e-3
    sample_stride: int = 1
    snapshot_times: tuple = ()
    a0: complex = 0j
    b0: complex = 0j
    block_size: int = 1024
    drop_divergent: bool = False
    store_b_snapshots: bool = False

    def __post_init__(self):
        if self.n_traj < 1:
            raise ParameterError("n_traj must be at least 1")
        if self.dt <= 0.0 or self.t_end <= 0.0:
            raise ParameterError("dt and t_end must be positive")
        if self.sample_stride < 1:
            raise ParameterError("sample_stride must be at least 1")
        if self.block_size < 1:
            raise ParameterError("block_size must be at least 1")
        for t in self.snapshot_times:
            self.snapshot_step(t)  # validates membership in the sampled grid

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def snapshot_step(self, t):
        """Step index of a snapshot time; must lie on the sampled grid."""
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"snapshot time {t} is not a multiple of dt")
        if k % self.sample_stride != 0 or not 0 <= k <= self.n_steps:
            raise ParameterError(
                f"snapshot time {t} is not on the sampled grid")
        return k


@dataclass
class Snapshot:
    """Per-trajectory complex amplitudes retained at one instant."""

    time: float
    traj_indices: np.ndarray
    a: np.ndarray
    b: np.ndarray | None = None


@dataclass
class EnsembleResult:
    """Per-time ensemble statistics plus retained snapshots.

    ``mean_intensity`` is the raw c-number average of |a|^2, which
    estimates the symmetrically ordered moment <(ad a + a ad)/2>; the
    ``photon_number`` property subtracts the ordering half quantum.
    Variances are modulus variances <|o|^2> - |<o>|^2; the
    non-conjugated second moments are available through the snapshot
    estimators below.
    """

    times: np.ndarray
    n_traj: int
    n_counted: int
    mean_a: np.ndarray
    mean_b: np.ndarray
    mean_intensity: np.ndarray
    mean_phonons: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    cov_ab: np.ndarray
    cov_conj_ab: np.ndarray
    snapshots: list[Snapshot] = field(default_factory=list)
    divergent: dict[int, float] = field(default_factory=dict)

    @property
    def photon_number(self):
        """<ad a> estimate: symmetric moment minus the ordering 1/2."""
        return self.mean_intensity - 0.5


# ---------------------------------------------------------------------------
# drift and noise primitives
# ---------------------------------------------------------------------------

def langevin_drift(s: PhaseState, d: DimensionlessParams) -> PhaseState:
    """Deterministic part of the c-number equations.

    Differs from the mean-field drift by the -1/2 in the mechanical
    drive, the symmetric-ordering remnant of the radiation-pressure
    force.
    """
    abs_a2 = s.a.real ** 2 + s.a.imag ** 2
    da = (1j * (d.delta + 2.0 * d.coupling * s.b.real + 2.0 * d.kerr * abs_a2)
          - d.kappa) * s.a + d.drive
    db = (-1j - d.gamma) * s.b + 1j * d.coupling * (abs_a2 - 0.5)
    return PhaseState(da, db)


def trajectory_rng(seed, traj_index) -> np.random.Generator:
    """Counter-based stream for one trajectory.

    The 128-bit Philox key packs the master seed in the low word and
    the trajectory index in the high word, so streams never collide and
    any trajectory can be regenerated without touching the others.
    """
    key = (int(seed) & _U64) | ((int(traj_index) & _U64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_noise_increment(rng, dt, n_bar, noise_enabled=True) -> complex:
    """One complex noise increment with E[|xi|^2] = (n_bar + 1/2) dt."""
    if dt <= 0.0:
        raise ParameterError("dt must be positive")
    if not noise_enabled:
        return 0j
    std = math.sqrt((n_bar + 0.5) * dt / 2.0)
    z = rng.standard_normal(2)
    return std * (z[0] + 1j * z[1])


# ---------------------------------------------------------------------------
# ensemble statistics estimators
# ---------------------------------------------------------------------------

def ensemble_mean(samples):
    """Plain average N^-1 sum_j o_j."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise MisuseError("cannot average an empty sample set")
    return samples.mean()


def ensemble_variance(samples):
    """Second-moment estimator N^-1 sum (o_j)^2 - (N^-1 sum o_j)^2.

    Applied literally, so complex samples give the (complex)
    non-conjugated variance.  Real input is clipped at zero against
    rounding.  N = 1 returns 0.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise MisuseError("cannot compute variance of an empty sample set")
    mean = samples.mean()
    var = (samples ** 2).mean() - mean ** 2
    if not np.iscomplexobj(samples):
        return max(float(var), 0.0)
    return complex(var)


def ensemble_abs_variance(samples):
    """Modulus variance <|o|^2> - |<o>|^2 (real, non-negative)."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise MisuseError("cannot compute variance of an empty sample set")
    val = float(np.mean(np.abs(samples) ** 2) - abs(samples.mean()) ** 2)
    return max(val, 0.0)


def ensemble_correlation(samples_1, samples_2):
    """Cross estimator N^-1 sum o1_j o2_j - mean_1 mean_2."""
    x = np.asarray(samples_1)
    y = np.asarray(samples_2)
    if x.size == 0 or x.shape != y.shape:
        raise MisuseError("sample sets must be non-empty and equal length")
    return (x * y).mean() - x.mean() * y.mean()


# ---------------------------------------------------------------------------
# vectorized block engine
# ---------------------------------------------------------------------------

class _BlockResult:
    """Mergeable accumulator output of one simulated block."""

    __slots__ = ("count", "sum_a", "sum_b", "sum_abs2_a", "sum_abs2_b",
                 "sum_ab", "sum_conj_ab", "snapshots", "divergent", "series")

    def __init__(self, n_samples):
        self.count = 0
        self.sum_a = np.zeros(n_samples, dtype=complex)
        self.sum_b = np.zeros(n_samples, dtype=complex)
        self.sum_abs2_a = np.zeros(n_samples)
        self.sum_abs2_b = np.zeros(n_samples)
        self.sum_ab = np.zeros(n_samples, dtype=complex)
        self.sum_conj_ab = np.zeros(n_samples, dtype=complex)
        self.snapshots = {}
        self.divergent = {}
        self.series = None


def _simulate_block(d, noise, cfg, traj_indices, store_series=False,
                    exclude=frozenset()):
    """Advance one block of trajectories; accumulate masked statistics.

    ``exclude`` removes trajectories from every statistic (their noise
    streams are still consumed identically, so the others are
    unaffected).  Returns a _BlockResult; divergences are recorded, not
    raised, so the caller owns the drop-or-fail policy.
    """
    traj_indices = np.asarray(traj_indices, dtype=np.int64)
    n_block = len(traj_indices)
    n_steps = cfg.n_steps
    stride = cfg.sample_stride
    n_samples = n_steps // stride + 1
    dt = cfg.dt

    snapshot_steps = {cfg.snapshot_step(t): t for t in cfg.snapshot_times}

    delta, kappa, gamma = d.delta, d.kappa, d.gamma
    g, chi, drive = d.coupling, d.kerr, d.drive
    two_g, two_chi = 2.0 * g, 2.0 * chi
    b_coeff = -1j - gamma

    use_noise = noise.noise_enabled
    # full increment scale: sqrt(2 kappa) * sqrt((n_bar + 1/2) dt / 2) per part
    ca = math.sqrt(2.0 * kappa * (noise.n_bar_a + 0.5) * dt / 2.0)
    cb = math.sqrt(2.0 * gamma * (noise.n_bar_b + 0.5) * dt / 2.0)

    a = np.full(n_block, complex(cfg.a0), dtype=complex)
    b = np.full(n_block, complex(cfg.b0), dtype=complex)
    acc = np.ones(n_block, dtype=bool)
    for pos, j in enumerate(traj_indices):
        if int(j) in exclude:
            acc[pos] = False
    alive = np.ones(n_block, dtype=bool)

    out = _BlockResult(n_samples)
    out.count = int(acc.sum())
    if store_series:
        out.series = (np.empty((n_samples, n_block), dtype=complex),
                      np.empty((n_samples, n_block), dtype=complex))

    gens = [trajectory_rng(noise.seed, j) for j in traj_indices] if use_noise else None
    draws = np.empty((n_block, _NOISE_CHUNK, 4)) if use_noise else None

    def record(sample_idx, step):
        sel_a = a[acc]
        sel_b = b[acc]
        out.sum_a[sample_idx] = sel_a.sum()
        out.sum_b[sample_idx] = sel_b.sum()
        out.sum_abs2_a[sample_idx] = (sel_a.real ** 2 + sel_a.imag ** 2).sum()
        out.sum_abs2_b[sample_idx] = (sel_b.real ** 2 + sel_b.imag ** 2).sum()
        out.sum_ab[sample_idx] = (sel_a * sel_b).sum()
        out.sum_conj_ab[sample_idx] = (np.conj(sel_a) * sel_b).sum()
        if store_series:
            out.series[0][sample_idx] = a
            out.series[1][sample_idx] = b
        if step in snapshot_steps:
            t = snapshot_steps[step]
            out.snapshots[t] = (traj_indices[acc].copy(), sel_a.copy(),
                                sel_b.copy() if cfg.store_b_snapshots else None)

    record(0, 0)

    sample_idx = 1
    step = 0
    while step < n_steps:
        chunk = min(_NOISE_CHUNK, n_steps - step)
        if use_noise:
            for i, gen in enumerate(gens):
                gen.standard_normal(out=draws[i, :chunk])
            xi_a = np.ascontiguousarray(
                ((draws[:, :chunk, 0] + 1j * draws[:, :chunk, 1]) * ca).T)
            xi_b = np.ascontiguousarray(
                ((draws[:, :chunk, 2] + 1j * draws[:, :chunk, 3]) * cb).T)
        for k in range(chunk):
            abs_a2 = a.real ** 2 + a.imag ** 2
            detune = delta + two_g * b.real + two_chi * abs_a2
            da = ((1j * detune - kappa) * a + drive) * dt
            db = (b_coeff * b + 1j * (g * (abs_a2 - 0.5))) * dt
            if use_noise:
                da += xi_a[k]
                db += xi_b[k]
            a += da
            b += db
            step += 1
            if step % _DIV_CHECK == 0 or step % stride == 0:
                abs_a2 = a.real ** 2 + a.imag ** 2
                abs_b2 = b.real ** 2 + b.imag ** 2
                bad = ~((abs_a2 < BLOWUP_BOUND) & (abs_b2 < BLOWUP_BOUND))
                if bad.any():
                    newly = bad & alive
                    for pos in np.nonzero(newly)[0]:
                        out.divergent[int(traj_indices[pos])] = step * dt
                    alive &= ~bad
                    acc &= ~bad
                    a[bad] = 0j  # keep the arithmetic finite; values unused
                    b[bad] = 0j
            if step % stride == 0:
                record(sample_idx, step)
                sample_idx += 1
    return out


def _block_worker(args):
    d, noise, cfg, traj_indices, exclude = args
    return _simulate_block(d, noise, cfg, traj_indices, exclude=exclude)


def simulate_trajectory(d: DimensionlessParams, noise: NoiseConfig,
                        cfg: EnsembleConfig, traj_index=0) -> Trajectory:
    """Single Euler-Maruyama trajectory, deterministic per (seed, index)."""
    block = _simulate_block(d, noise, cfg, [traj_index], store_series=True)
    if block.divergent and not cfg.drop_divergent:
        j, t = next(iter(block.divergent.items()))
        raise DivergenceError(
            f"trajectory {j} exceeded the blow-up bound at t = {t:.6g}",
            last_valid_time=t)
    n_samples = cfg.n_steps // cfg.sample_stride + 1
    times = np.arange(n_samples) * (cfg.sample_stride * cfg.dt)
    return Trajectory(times, block.series[0][:, 0], block.series[1][:, 0],
                      params=d)


def simulate_ensemble(d: DimensionlessParams, noise: NoiseConfig,
                      cfg: EnsembleConfig, workers=1) -> EnsembleResult:
    """Simulate ``cfg.n_traj`` independent trajectories and reduce.

    Blocks of ``cfg.block_size`` consecutive trajectory indices are
    simulated independently (optionally across processes) and merged in
    block order, so the result depends only on (seed, n_traj,
    block_size), never on the worker count.
    """
    blocks = [np.arange(lo, min(lo + cfg.block_size, cfg.n_traj))
              for lo in range(0, cfg.n_traj, cfg.block_size)]

    def run_pass(exclude):
        jobs = [(d, noise, cfg, idx, exclude) for idx in blocks]
        if workers > 1 and len(blocks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_block_worker, jobs))
        return [_block_worker(job) for job in jobs]

    results = run_pass(frozenset())
    divergent = {}
    for r in results:
        divergent.update(r.divergent)
    if divergent:
        if not cfg.drop_divergent:
            j = min(divergent)
            raise DivergenceError(
                f"trajectory {j} exceeded the blow-up bound at "
                f"t = {divergent[j]:.6g} (set drop_divergent to skip)",
                last_valid_time=divergent[j])
        # rerun with the divergent trajectories excluded from every
        # statistic; their streams are regenerated identically so the
        # surviving trajectories are unchanged
        results = run_pass(frozenset(divergent))
        for r in results:
            r.divergent = {}

    n_steps = cfg.n_steps
    stride = cfg.sample_stride
    n_samples = n_steps // stride + 1
    times = np.arange(n_samples) * (stride * cfg.dt)

    total = _BlockResult(n_samples)
    snapshot_parts = {t: [] for t in cfg.snapshot_times}
    for r in results:
        total.count += r.count
        total.sum_a += r.sum_a
        total.sum_b += r.sum_b
        total.sum_abs2_a += r.sum_abs2_a
        total.sum_abs2_b += r.sum_abs2_b
        total.sum_ab += r.sum_ab
        total.sum_conj_ab += r.sum_conj_ab
        for t, part in r.snapshots.items():
            snapshot_parts[t].append(part)

    n = total.count
    if n == 0:
        raise DivergenceError("all trajectories diverged")
    mean_a = total.sum_a / n
    mean_b = total.sum_b / n
    mean_int = total.sum_abs2_a / n
    mean_ph = total.sum_abs2_b / n
    var_a = np.maximum(mean_int - np.abs(mean_a) ** 2, 0.0)
    var_b = np.maximum(mean_ph - np.abs(mean_b) ** 2, 0.0)
    cov_ab = total.sum_ab / n - mean_a * mean_b
    cov_conj_ab = total.sum_conj_ab / n - np.conj(mean_a) * mean_b

    snapshots = []
    for t in cfg.snapshot_times:
        parts = snapshot_parts[t]
        idx = np.concatenate([p[0] for p in parts])
        a_vals = np.concatenate([p[1] for p in parts])
        b_vals = (np.concatenate([p[2] for p in parts])
                  if cfg.store_b_snapshots else None)
        snapshots.append(Snapshot(time=t, traj_indices=idx, a=a_vals, b=b_vals))

    return EnsembleResult(
        times=times, n_traj=cfg.n_traj, n_counted=n,
        mean_a=mean_a, mean_b=mean_b,
        mean_intensity=mean_int, mean_phonons=mean_ph,
        var_a=var_a, var_b=var_b, cov_ab=cov_ab, cov_conj_ab=cov_conj_ab,
        snapshots=snapshots, divergent=divergent)


# ---------------------------------------------------------------------------
# phase-space histogram
# ---------------------------------------------------------------------------

@dataclass
class PhaseHistogram:
    """Binned phase-space density of complex sample points.

    Binning follows the half-open convention (lo, hi] on both the real
    (x) and imaginary (p) axes.  ``density`` is counts / (N h^2) with N
    the total number of samples offered, so the Riemann sum of the
    density equals the in-range fraction.
    """

    h: float
    x_range: tuple
    p_range: tuple
    counts: np.ndarray
    n_total: int

    @property
    def density(self):
        return self.counts / (self.n_total * self.h ** 2)

    @property
    def x_centers(self):
        n = self.counts.shape[0]
        return self.x_range[0] + (np.arange(n) + 0.5) * self.h

    @property
    def p_centers(self):
        n = self.counts.shape[1]
        return self.p_range[0] + (np.arange(n) + 0.5) * self.h

    @property
    def in_range_fraction(self):
        return self.counts.sum() / self.n_total


def _axis_range(values, h, given):
    if given is not None:
        lo, hi = float(given[0]), float(given[1])
        n = (hi - lo) / h
        if abs(n - round(n)) > 1e-9 * max(1.0, abs(n)) or n < 1:
            raise ParameterError(
                "range must cover a positive integer number of bins")
        return lo, int(round(n))
    lo = values.min() - h
    n = int(np.ceil((values.max() + h - lo) / h))
    return lo, max(n, 1)


def phase_space_histogram(samples, h, x_range=None, p_range=None,
                          n_total=None) -> PhaseHistogram:
    """Bin complex samples on a square phase-space grid of pitch ``h``.

    Ranges default to covering all samples with one bin of margin.
    ``n_total`` overrides the normalizing count (useful when divergent
    trajectories were excluded upstream).
    """
    if h <= 0.0:
        raise ParameterError("bin width h must be positive")
    samples = np.asarray(samples, dtype=complex)
    if samples.size == 0:
        raise MisuseError("cannot histogram an empty sample set")
    x = samples.real
    p = samples.imag
    x_lo, nx = _axis_range(x, h, x_range)
    p_lo, np_ = _axis_range(p, h, p_range)

    # (lo, hi] convention: values exactly on an edge fall in the lower bin
    ix = np.ceil((x - x_lo) / h).astype(np.int64) - 1
    ip = np.ceil((p - p_lo) / h).astype(np.int64) - 1
    ok = (ix >= 0) & (ix < nx) & (ip >= 0) & (ip < np_)
    counts = np.zeros((nx, np_), dtype=np.int64)
    np.add.at(counts, (ix[ok], ip[ok]), 1)

    return PhaseHistogram(
        h=h, x_range=(x_lo, x_lo + nx * h), p_range=(p_lo, p_lo + np_ * h),
        counts=counts, n_total=int(n_total) if n_total else samples.size)


def default_bin_width(samples, bins_per_span=120):
    """Bin width giving at least ~100 bins across the occupied region."""
    samples = np.asarray(samples, dtype=complex)
    span = max(np.ptp(samples.real), np.ptp(samples.imag))
    if span <= 0.0:
        return 1e-3
    return span / bins_per_span


def attractor_overlap(hist: PhaseHistogram, attractor, radius_bins=3.0):
    """Fraction of histogram mass within ``radius_bins`` bin widths of
    the attractor point set (complex array)."""
    from scipy.spatial import cKDTree

    attractor = np.asarray(attractor, dtype=complex)
    if attractor.size == 0:
        raise MisuseError("attractor point set is empty")
    total = hist.counts.sum()
    if total == 0:
        raise MisuseError("histogram is empty")
    occupied = np.nonzero(hist.counts)
    cx = hist.x_range[0] + (occupied[0] + 0.5) * hist.h
    cp = hist.p_range[0] + (occupied[1] + 0.5) * hist.h
    tree = cKDTree(np.column_stack([attractor.real, attractor.imag]))
    dist, _ = tree.query(np.column_stack([cx, cp]))
    near = dist <= radius_bins * hist.h
    return float(hist.counts[occupied][near].sum() / total)
