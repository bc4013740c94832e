"""Truncated two-mode Fock space: Hamiltonian, quantum jumps, Lindblad oracle.

Basis ordering is fixed package-wide: the composite index is
``n_a * dim_b + n_b`` (cavity index outer, mechanical inner).  Every
export and partial trace relies on this layout.

The rotating-frame Hamiltonian (units of the mechanical frequency) is

    H = -delta ad a + bd b - g ad a (bd + b) + i E (ad - a) - chi (ad a)^2

with the sign of the detuning term chosen so the Heisenberg drift of
``a`` carries ``+ i delta a``.  Dissipation enters either through the
non-Hermitian propagation / jump channels of the Monte Carlo
wavefunction method or through the zero-temperature master equation

    drho/dt = -i [H, rho] + kappa D_a[rho] + gamma D_b[rho],
    D_L[rho] = 2 L rho Ld - Ld L rho - rho Ld L

which doubles as a small-dimension oracle for validating the jump
unraveling.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .errors import BudgetError, MisuseError, ParameterError, StepSizeError
from .langevin import trajectory_rng
from .model import DimensionlessParams

DEFAULT_MAX_TOTAL_DIM = 100_000
ORACLE_MAX_TOTAL_DIM = 64
DENSE_PROPAGATOR_MAX_DIM = 512
JUMP_PROB_TARGET = 0.01  # substep so P1 + P2 stays below this
JUMP_PROB_HARD_LIMIT = 0.1  # single-step validity bound
TRUNCATION_WARN_LEVEL = 1e-4
_MAX_SUBSTEPS = 1024


@dataclass(frozen=True)
class FockDims:
    """Truncation levels of the cavity and mechanical Fock spaces."""

    dim_a: int
    dim_b: int
    max_total_dim: int = DEFAULT_MAX_TOTAL_DIM

    def __post_init__(self):
        if self.dim_a < 1 or self.dim_b < 1:
            raise ParameterError("Fock dimensions must be positive")
        if self.total > self.max_total_dim:
            raise BudgetError(
                f"total dimension {self.total} exceeds the budget "
                f"{self.max_total_dim}")

    @property
    def total(self):
        return self.dim_a * self.dim_b


@dataclass(frozen=True)
class FockOperator:
    """Sparse operator on the truncated product space with a role tag."""

    matrix: sp.csr_matrix
    role: str
    dims: FockDims

    @property
    def dagger(self):
        return FockOperator(self.matrix.conj().T.tocsr(),
                            self.role + "_dagger", self.dims)


def _mat(op):
    return op.matrix if isinstance(op, FockOperator) else op


def number_diagonals(dims: FockDims):
    """Diagonals of ad a and bd b in the composite basis."""
    n_a = np.repeat(np.arange(dims.dim_a), dims.dim_b).astype(float)
    n_b = np.tile(np.arange(dims.dim_b), dims.dim_a).astype(float)
    return n_a, n_b


def _destroy(dim):
    return sp.diags(np.sqrt(np.arange(1, dim)), offsets=1, format="csr",
                    dtype=complex)


def annihilation_matrix(dim, which_mode, dims: FockDims) -> FockOperator:
    """Lowering operator of one mode embedded in the product space.

    ``which_mode`` is "a" (cavity) or "b" (mechanics); ``dim`` must
    match the corresponding truncation in ``dims``.
    """
    if dim < 1:
        raise ParameterError("mode dimension must be positive")
    if which_mode == "a":
        if dim != dims.dim_a:
            raise MisuseError("dim does not match dims.dim_a")
        full = sp.kron(_destroy(dim), sp.identity(dims.dim_b, dtype=complex),
                       format="csr")
        return FockOperator(full, "annihilation_a", dims)
    if which_mode == "b":
        if dim != dims.dim_b:
            raise MisuseError("dim does not match dims.dim_b")
        full = sp.kron(sp.identity(dims.dim_a, dtype=complex), _destroy(dim),
                       format="csr")
        return FockOperator(full, "annihilation_b", dims)
    raise MisuseError("which_mode must be 'a' or 'b'")


def build_hamiltonian(d: DimensionlessParams, dims: FockDims) -> FockOperator:
    """Rotating-frame Hamiltonian on the truncated space (see module doc)."""
    n_a, n_b = number_diagonals(dims)
    a_op = annihilation_matrix(dims.dim_a, "a", dims).matrix
    b_op = annihilation_matrix(dims.dim_b, "b", dims).matrix
    na = sp.diags(n_a, dtype=complex)
    h = (-d.delta * na
         + sp.diags(n_b, dtype=complex)
         - d.coupling * (na @ (b_op.conj().T + b_op))
         + 1j * d.drive * (a_op.conj().T - a_op)
         - d.kerr * sp.diags(n_a ** 2, dtype=complex))
    return FockOperator(h.tocsr(), "hamiltonian", dims)


def effective_hamiltonian(h: FockOperator, d: DimensionlessParams,
                          dims: FockDims) -> FockOperator:
    """Non-Hermitian H_eff = H - i kappa ad a - i gamma bd b."""
    n_a, n_b = number_diagonals(dims)
    h_eff = _mat(h) - 1j * sp.diags(d.kappa * n_a + d.gamma * n_b,
                                    dtype=complex)
    return FockOperator(h_eff.tocsr(), "effective_hamiltonian", dims)


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def basis_state(dims: FockDims, n_a=0, n_b=0):
    """Product Fock state |n_a, n_b> as a dense vector."""
    if not (0 <= n_a < dims.dim_a and 0 <= n_b < dims.dim_b):
        raise MisuseError("Fock indices outside the truncation")
    psi = np.zeros(dims.total, dtype=complex)
    psi[n_a * dims.dim_b + n_b] = 1.0
    return psi


def coherent_amplitudes(alpha, dim):
    """Truncated coherent-state amplitudes, renormalized on the cutoff."""
    n = np.arange(dim)
    log_fact = np.cumsum(np.concatenate([[0.0], np.log(np.arange(1, dim))]))
    amps = np.exp(n * np.log(complex(alpha)) - 0.5 * log_fact
                  ) if alpha != 0 else np.where(n == 0, 1.0 + 0j, 0j)
    amps = np.asarray(amps, dtype=complex)
    amps /= np.linalg.norm(amps)
    return amps


def product_coherent_state(dims: FockDims, alpha=0j, beta=0j):
    """|alpha> (x) |beta> on the truncated space, unit norm."""
    psi = np.kron(coherent_amplitudes(alpha, dims.dim_a),
                  coherent_amplitudes(beta, dims.dim_b))
    return psi / np.linalg.norm(psi)


# ---------------------------------------------------------------------------
# density matrices and observables
# ---------------------------------------------------------------------------

def accumulate_density_matrix(states, n=None):
    """rho = N^-1 sum |psi><psi| over the given pure states."""
    states = list(states)
    if not states:
        raise MisuseError("cannot accumulate an empty state set")
    dim = len(states[0])
    rho = np.zeros((dim, dim), dtype=complex)
    for psi in states:
        if len(psi) != dim:
            raise MisuseError("states must share one dimension")
        rho += np.outer(psi, np.conj(psi))
    return rho / (n if n is not None else len(states))


def cavity_density_from_states(states, dims: FockDims, n=None):
    """Reduced cavity rho_a accumulated directly from pure states.

    Equivalent to tracing the full mixture over the mechanical mode but
    never forms the full-space matrix.
    """
    states = list(states)
    if not states:
        raise MisuseError("cannot accumulate an empty state set")
    rho_a = np.zeros((dims.dim_a, dims.dim_a), dtype=complex)
    for psi in states:
        mat = np.reshape(psi, (dims.dim_a, dims.dim_b))
        rho_a += mat @ mat.conj().T
    return rho_a / (n if n is not None else len(states))


def expectation_value(state, op):
    """<op> for a pure state vector or a density matrix."""
    m = _mat(op)
    state = np.asarray(state)
    if state.ndim == 1:
        return complex(np.vdot(state, m @ state))
    return complex(np.trace(m @ state) if not sp.issparse(m)
                   else (m @ state).diagonal().sum())


def partial_trace_cavity(rho, dims: FockDims):
    """Trace out the mechanical mode; preserves the total trace."""
    rho = np.asarray(rho)
    if rho.shape != (dims.total, dims.total):
        raise MisuseError("density matrix does not match dims")
    blocks = rho.reshape(dims.dim_a, dims.dim_b, dims.dim_a, dims.dim_b)
    return np.einsum("ijkj->ik", blocks)


def validate_density_matrix(rho, hermiticity_tol=1e-10, trace_tol=1e-8,
                            eig_tol=1e-8, check_eigs=False):
    """Raise unless rho is Hermitian, unit trace, and (optionally) PSD."""
    rho = np.asarray(rho)
    if np.abs(rho - rho.conj().T).max() > hermiticity_tol:
        raise MisuseError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > trace_tol:
        raise MisuseError("density matrix trace differs from 1")
    if check_eigs:
        if np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() < -eig_tol:
            raise MisuseError("density matrix has a negative eigenvalue")
    return rho


# ---------------------------------------------------------------------------
# no-jump propagation
# ---------------------------------------------------------------------------

def _expm_apply_taylor(a_csr, x, scale, one_norm, tol=1e-12, max_terms=80):
    """exp(scale * A) @ x by substepped Taylor series on sparse matvecs.

    Substeps keep |scale| * ||A||_1 per series below 1/2, where the
    series converges in a dozen terms to full precision.
    """
    m = max(1, int(math.ceil(abs(scale) * one_norm / 0.5)))
    z = scale / m
    y = np.array(x, dtype=complex, copy=True)
    for _ in range(m):
        term = y.copy()
        acc = y
        for k in range(1, max_terms + 1):
            term = (z / k) * (a_csr @ term)
            acc = acc + term
            if np.abs(term).max() <= tol * max(np.abs(acc).max(), 1e-300):
                break
        else:
            raise StepSizeError("matrix exponential series did not converge")
        y = acc
    return y


class NoJumpPropagator:
    """Applies exp(-i H_eff tau) for tau = dt / substeps.

    Small spaces precompute and cache the dense exponential per substep
    count; large spaces fall back to a substepped Taylor expansion on
    sparse matrix-vector products (never a dense exponential).
    """

    def __init__(self, h_eff, dt, dense_max_dim=DENSE_PROPAGATOR_MAX_DIM):
        m = _mat(h_eff).tocsr()
        self.h = m
        self.dt = float(dt)
        self.dim = m.shape[0]
        self.dense = self.dim <= dense_max_dim
        self._cache = {}
        self._one_norm = float(np.abs(m).sum(axis=0).max())

    def _dense_u(self, substeps):
        u = self._cache.get(substeps)
        if u is None:
            u = expm((-1j * self.dt / substeps) * self.h.toarray())
            self._cache[substeps] = u
        return u

    def apply(self, x, substeps=1):
        """Propagate a vector or column block by dt / substeps."""
        if self.dense:
            return self._dense_u(substeps) @ x
        return _expm_apply_taylor(self.h, x, -1j * self.dt / substeps,
                                  self._one_norm)


# ---------------------------------------------------------------------------
# quantum-jump stepping
# ---------------------------------------------------------------------------

def jump_probabilities(psi, n_a_diag, n_b_diag, kappa, gamma, dt):
    """(P0, P1, P2) for one candidate step from the current state."""
    abs2 = np.abs(psi) ** 2
    p1 = 2.0 * kappa * dt * float(n_a_diag @ abs2)
    p2 = 2.0 * gamma * dt * float(n_b_diag @ abs2)
    return 1.0 - p1 - p2, p1, p2


@dataclass
class JumpOperators:
    """Bundle of precomputed pieces shared by all trajectories."""

    dims: FockDims
    a_op: sp.csr_matrix
    b_op: sp.csr_matrix
    n_a_diag: np.ndarray
    n_b_diag: np.ndarray
    propagator: NoJumpPropagator
    kappa: float
    gamma: float
    dt: float

    @classmethod
    def build(cls, d: DimensionlessParams, dims: FockDims, dt,
              dense_max_dim=DENSE_PROPAGATOR_MAX_DIM):
        h = build_hamiltonian(d, dims)
        h_eff = effective_hamiltonian(h, d, dims)
        n_a, n_b = number_diagonals(dims)
        return cls(
            dims=dims,
            a_op=annihilation_matrix(dims.dim_a, "a", dims).matrix,
            b_op=annihilation_matrix(dims.dim_b, "b", dims).matrix,
            n_a_diag=n_a, n_b_diag=n_b,
            propagator=NoJumpPropagator(h_eff, dt, dense_max_dim),
            kappa=d.kappa, gamma=d.gamma, dt=float(dt))


def _normalize(psi):
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise StepSizeError("state collapsed to zero norm")
    return psi / norm


def jump_step(psi, ops: JumpOperators, rng, substeps=1):
    """One Monte Carlo wavefunction step of length dt / substeps.

    A single uniform variate partitioned as [0, P1), [P1, P1+P2),
    [P1+P2, 1) selects the cavity jump, the mechanical jump, or the
    renormalized non-Hermitian propagation.  Returns (psi', event) with
    event in {"a", "b", None}.
    """
    dt = ops.dt / substeps
    _, p1, p2 = jump_probabilities(psi, ops.n_a_diag, ops.n_b_diag,
                                   ops.kappa, ops.gamma, dt)
    if p1 + p2 >= JUMP_PROB_HARD_LIMIT:
        raise StepSizeError(
            f"P1 + P2 = {p1 + p2:.3g} >= {JUMP_PROB_HARD_LIMIT}; reduce dt")
    u = rng.random()
    if u < p1:
        return _normalize(ops.a_op @ psi), "a"
    if u < p1 + p2:
        return _normalize(ops.b_op @ psi), "b"
    return _normalize(ops.propagator.apply(psi, substeps)), None


def required_substeps(psi, ops: JumpOperators, p_target=JUMP_PROB_TARGET):
    """Substep count keeping the per-step jump probability below target."""
    _, p1, p2 = jump_probabilities(psi, ops.n_a_diag, ops.n_b_diag,
                                   ops.kappa, ops.gamma, ops.dt)
    total = p1 + p2
    if total <= p_target:
        return 1
    k = int(math.ceil(total / p_target))
    if k > _MAX_SUBSTEPS:
        raise StepSizeError(f"state requires {k} substeps; reduce dt")
    return k


# ---------------------------------------------------------------------------
# trajectories and ensembles
# ---------------------------------------------------------------------------

@dataclass
class JumpTrajectory:
    """Sampled expectation records of one unraveling."""

    times: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    top_a: np.ndarray
    top_b: np.ndarray
    jumps_a: int
    jumps_b: int
    snapshots: dict = field(default_factory=dict)


@dataclass(frozen=True)
class JumpEnsembleConfig:
    """Grid and retention policy for a quantum-jump ensemble."""

    n_traj: int
    t_end: float
    dt: float
    sample_stride: int = 1
    snapshot_times: tuple = ()
    block_size: int = 256
    p_target: float = JUMP_PROB_TARGET
    store_trajectories: int = 0
    accumulate_full_rho: bool = False
    dense_max_dim: int = DENSE_PROPAGATOR_MAX_DIM

    def __post_init__(self):
        if self.n_traj < 1:
            raise ParameterError("n_traj must be at least 1")
        if self.dt <= 0.0 or self.t_end <= 0.0:
            raise ParameterError("dt and t_end must be positive")
        if self.sample_stride < 1 or self.block_size < 1:
            raise ParameterError("stride and block size must be positive")
        for t in self.snapshot_times:
            self.snapshot_step(t)

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def snapshot_step(self, t):
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ParameterError(f"snapshot time {t} is not a multiple of dt")
        if k % self.sample_stride != 0 or not 0 <= k <= self.n_steps:
            raise ParameterError(f"snapshot time {t} is not on the sampled grid")
        return k


@dataclass
class JumpEnsembleResult:
    """Ensemble averages, Monte Carlo errors, and density snapshots."""

    times: np.ndarray
    n_traj: int
    mean_n_a: np.ndarray
    se_n_a: np.ndarray
    mean_n_b: np.ndarray
    se_n_b: np.ndarray
    truncation_max_a: float
    truncation_max_b: float
    rho_cavity: dict
    rho_full: dict
    sample_trajectories: list
    truncation_warning: bool = False


class _JumpBlockResult:
    __slots__ = ("count", "sum_na", "sum_na2", "sum_nb", "sum_nb2",
                 "top_a", "top_b", "rho_cavity", "rho_full", "series")

    def __init__(self, n_samples, dims, full_dim):
        self.count = 0
        self.sum_na = np.zeros(n_samples)
        self.sum_na2 = np.zeros(n_samples)
        self.sum_nb = np.zeros(n_samples)
        self.sum_nb2 = np.zeros(n_samples)
        self.top_a = 0.0
        self.top_b = 0.0
        self.rho_cavity = {}
        self.rho_full = {}
        self.series = []


class _ColumnUniforms:
    """Lazily refilled per-trajectory uniform buffers (one stream each)."""

    def __init__(self, seed, traj_indices, chunk=4096):
        self.gens = [trajectory_rng(seed, j) for j in traj_indices]
        self.chunk = chunk
        self.buf = np.empty((len(self.gens), chunk))
        for i, g in enumerate(self.gens):
            self.buf[i] = g.random(chunk)
        self.cursor = np.zeros(len(self.gens), dtype=np.int64)

    def take(self, cols):
        cols = np.asarray(cols)
        need = cols[self.cursor[cols] >= self.chunk]
        for i in need:
            self.buf[i] = self.gens[i].random(self.chunk)
            self.cursor[i] = 0
        vals = self.buf[cols, self.cursor[cols]]
        self.cursor[cols] += 1
        return vals

    def take_one(self, col):
        return float(self.take(np.array([col]))[0])


def _evolve_block(psi0, d, dims, cfg: JumpEnsembleConfig, traj_indices, seed):
    """Advance a block of unravelings sharing precomputed operators."""
    ops = JumpOperators.build(d, dims, cfg.dt, cfg.dense_max_dim)
    n_block = len(traj_indices)
    n_steps = cfg.n_steps
    stride = cfg.sample_stride
    n_samples = n_steps // stride + 1
    snapshot_steps = {cfg.snapshot_step(t): t for t in cfg.snapshot_times}
    two_kdt = 2.0 * ops.kappa * cfg.dt
    two_gdt = 2.0 * ops.gamma * cfg.dt

    top_a_mask = (ops.n_a_diag == dims.dim_a - 1).astype(float)
    top_b_mask = (ops.n_b_diag == dims.dim_b - 1).astype(float)

    psi = np.tile(np.asarray(psi0, dtype=complex)[:, None], (1, n_block))
    psi /= np.linalg.norm(psi, axis=0)
    uniforms = _ColumnUniforms(seed, traj_indices)

    out = _JumpBlockResult(n_samples, dims, dims.total)
    out.count = n_block
    retained = [pos for pos, j in enumerate(traj_indices)
                if j < cfg.store_trajectories]
    series = {pos: np.empty(n_samples) for pos in retained}

    def record(idx, step):
        abs2 = psi.real ** 2 + psi.imag ** 2
        na = ops.n_a_diag @ abs2
        nb = ops.n_b_diag @ abs2
        out.sum_na[idx] += na.sum()
        out.sum_na2[idx] += (na ** 2).sum()
        out.sum_nb[idx] += nb.sum()
        out.sum_nb2[idx] += (nb ** 2).sum()
        out.top_a = max(out.top_a, float((top_a_mask @ abs2).max()))
        out.top_b = max(out.top_b, float((top_b_mask @ abs2).max()))
        for pos in retained:
            series[pos][idx] = na[pos]
        if step in snapshot_steps:
            t = snapshot_steps[step]
            mats = psi.reshape(dims.dim_a, dims.dim_b, n_block)
            rho_a = np.einsum("ibk,jbk->ij", mats, mats.conj())
            out.rho_cavity[t] = rho_a
            if cfg.accumulate_full_rho:
                out.rho_full[t] = psi @ psi.conj().T

    record(0, 0)
    sample_idx = 1
    all_cols = np.arange(n_block)
    for step in range(1, n_steps + 1):
        abs2 = psi.real ** 2 + psi.imag ** 2
        na = ops.n_a_diag @ abs2
        nb = ops.n_b_diag @ abs2
        p1 = two_kdt * na
        p2 = two_gdt * nb
        total = p1 + p2
        k_sub = np.ones(n_block, dtype=np.int64)
        heavy = total > cfg.p_target
        if heavy.any():
            k_sub[heavy] = np.ceil(total[heavy] / cfg.p_target).astype(np.int64)
            if k_sub.max() > _MAX_SUBSTEPS:
                raise StepSizeError("a trajectory requires too many substeps; "
                                    "reduce dt")
        easy = ~heavy
        easy_cols = all_cols[easy]
        u = np.full(n_block, 2.0)  # sentinel > 1: never selects a jump
        if easy_cols.size:
            u[easy_cols] = uniforms.take(easy_cols)
        jump_a = easy & (u < p1)
        jump_b = easy & ~jump_a & (u < p1 + p2)
        special = jump_a | jump_b | heavy
        pre = psi[:, special].copy() if special.any() else None

        psi = ops.propagator.apply(psi)
        psi /= np.linalg.norm(psi, axis=0)

        if special.any():
            spec_cols = all_cols[special]
            local = {c: i for i, c in enumerate(spec_cols)}
            a_cols = all_cols[jump_a]
            if a_cols.size:
                sub = ops.a_op @ pre[:, [local[c] for c in a_cols]]
                psi[:, a_cols] = sub / np.linalg.norm(sub, axis=0)
            b_cols = all_cols[jump_b]
            if b_cols.size:
                sub = ops.b_op @ pre[:, [local[c] for c in b_cols]]
                psi[:, b_cols] = sub / np.linalg.norm(sub, axis=0)
            for c in all_cols[heavy]:
                col = pre[:, local[c]]
                k = int(k_sub[c])
                for _ in range(k):
                    dt_sub = ops.dt / k
                    _, q1, q2 = jump_probabilities(
                        col, ops.n_a_diag, ops.n_b_diag, ops.kappa,
                        ops.gamma, dt_sub)
                    if q1 + q2 >= JUMP_PROB_HARD_LIMIT:
                        raise StepSizeError("jump probability still above the "
                                            "hard limit inside a substep")
                    uu = uniforms.take_one(c)
                    if uu < q1:
                        col = _normalize(ops.a_op @ col)
                    elif uu < q1 + q2:
                        col = _normalize(ops.b_op @ col)
                    else:
                        col = _normalize(ops.propagator.apply(col, k))
                psi[:, c] = col

        if step % stride == 0:
            record(sample_idx, step)
            sample_idx += 1

    out.series = [(int(traj_indices[pos]), series[pos]) for pos in retained]
    return out


def _jump_block_worker(args):
    return _evolve_block(*args)


def evolve_trajectory(psi0, d: DimensionlessParams, dims: FockDims, t_end, dt,
                      sample_stride=1, traj_index=0, seed=0,
                      snapshot_times=(), p_target=JUMP_PROB_TARGET,
                      dense_max_dim=DENSE_PROPAGATOR_MAX_DIM) -> JumpTrajectory:
    """One unraveling with per-(seed, index) reproducible jumps.

    Records <ad a>, <bd b> and the top-level Fock populations at every
    sampled time; retains the full state at the requested snapshot
    times.  The step is subdivided whenever the total jump probability
    would exceed ``p_target``.
    """
    ops = JumpOperators.build(d, dims, dt, dense_max_dim)
    n_steps = int(round(t_end / dt))
    n_samples = n_steps // sample_stride + 1
    snapshot_steps = {}
    for t in snapshot_times:
        k = int(round(t / dt))
        if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= k <= n_steps:
            raise ParameterError(f"snapshot time {t} is not on the step grid")
        snapshot_steps[k] = t

    rng = trajectory_rng(seed, traj_index)
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)

    times = np.empty(n_samples)
    rec_na = np.empty(n_samples)
    rec_nb = np.empty(n_samples)
    rec_ta = np.empty(n_samples)
    rec_tb = np.empty(n_samples)
    top_a_mask = (ops.n_a_diag == dims.dim_a - 1).astype(float)
    top_b_mask = (ops.n_b_diag == dims.dim_b - 1).astype(float)
    snapshots = {}
    jumps = {"a": 0, "b": 0, None: 0}

    def record(idx, step):
        abs2 = np.abs(psi) ** 2
        times[idx] = step * dt
        rec_na[idx] = ops.n_a_diag @ abs2
        rec_nb[idx] = ops.n_b_diag @ abs2
        rec_ta[idx] = top_a_mask @ abs2
        rec_tb[idx] = top_b_mask @ abs2
        if step in snapshot_steps:
            snapshots[snapshot_steps[step]] = psi.copy()

    record(0, 0)
    idx = 1
    for step in range(1, n_steps + 1):
        k = required_substeps(psi, ops, p_target)
        for _ in range(k):
            psi, event = jump_step(psi, ops, rng, substeps=k)
            jumps[event] += 1
        if step % sample_stride == 0:
            record(idx, step)
            idx += 1
    return JumpTrajectory(times=times, n_a=rec_na, n_b=rec_nb, top_a=rec_ta,
                          top_b=rec_tb, jumps_a=jumps["a"], jumps_b=jumps["b"],
                          snapshots=snapshots)


def simulate_jump_ensemble(psi0, d: DimensionlessParams, dims: FockDims,
                           cfg: JumpEnsembleConfig, seed=0,
                           workers=1) -> JumpEnsembleResult:
    """Average ``cfg.n_traj`` unravelings into expectation series and
    density-matrix snapshots.

    Blocks of consecutive trajectory indices merge in index order, so
    for a fixed seed and block size the result is independent of the
    worker count.  A truncation warning fires when any top-level Fock
    population exceeds 1e-4.
    """
    blocks = [np.arange(lo, min(lo + cfg.block_size, cfg.n_traj))
              for lo in range(0, cfg.n_traj, cfg.block_size)]
    jobs = [(np.asarray(psi0, dtype=complex), d, dims, cfg, idx, seed)
            for idx in blocks]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_jump_block_worker, jobs))
    else:
        results = [_jump_block_worker(job) for job in jobs]

    n_steps = cfg.n_steps
    n_samples = n_steps // cfg.sample_stride + 1
    times = np.arange(n_samples) * (cfg.sample_stride * cfg.dt)

    total = _JumpBlockResult(n_samples, dims, dims.total)
    rho_cavity = {t: np.zeros((dims.dim_a, dims.dim_a), dtype=complex)
                  for t in cfg.snapshot_times}
    rho_full = ({t: np.zeros((dims.total, dims.total), dtype=complex)
                 for t in cfg.snapshot_times} if cfg.accumulate_full_rho else {})
    series = []
    for r in results:
        total.count += r.count
        total.sum_na += r.sum_na
        total.sum_na2 += r.sum_na2
        total.sum_nb += r.sum_nb
        total.sum_nb2 += r.sum_nb2
        total.top_a = max(total.top_a, r.top_a)
        total.top_b = max(total.top_b, r.top_b)
        for t, part in r.rho_cavity.items():
            rho_cavity[t] += part
        for t, part in r.rho_full.items():
            rho_full[t] += part
        series.extend(r.series)

    n = total.count
    mean_na = total.sum_na / n
    mean_nb = total.sum_nb / n
    var_na = np.maximum(total.sum_na2 / n - mean_na ** 2, 0.0)
    var_nb = np.maximum(total.sum_nb2 / n - mean_nb ** 2, 0.0)
    se_na = np.sqrt(var_na / n)
    se_nb = np.sqrt(var_nb / n)
    for t in rho_cavity:
        rho_cavity[t] /= n
    for t in rho_full:
        rho_full[t] /= n

    warn = bool(max(total.top_a, total.top_b) > TRUNCATION_WARN_LEVEL)
    if warn:
        warnings.warn(
            f"top-level Fock population reached {max(total.top_a, total.top_b):.2e}; "
            "increase the truncation", stacklevel=2)
    return JumpEnsembleResult(
        times=times, n_traj=n, mean_n_a=mean_na, se_n_a=se_na,
        mean_n_b=mean_nb, se_n_b=se_nb,
        truncation_max_a=total.top_a, truncation_max_b=total.top_b,
        rho_cavity=rho_cavity, rho_full=rho_full,
        sample_trajectories=sorted(series, key=lambda x: x[0]),
        truncation_warning=warn)


# ---------------------------------------------------------------------------
# direct master-equation oracle
# ---------------------------------------------------------------------------

def lindblad_rhs(rho, h, a_op, b_op, d: DimensionlessParams):
    """Right-hand side of the zero-temperature master equation."""
    h = _mat(h)
    a = _mat(a_op)
    b = _mat(b_op)
    h = h.toarray() if sp.issparse(h) else h
    a = a.toarray() if sp.issparse(a) else a
    b = b.toarray() if sp.issparse(b) else b
    na = a.conj().T @ a
    nb = b.conj().T @ b
    drho = -1j * (h @ rho - rho @ h)
    drho += d.kappa * (2.0 * a @ rho @ a.conj().T - na @ rho - rho @ na)
    drho += d.gamma * (2.0 * b @ rho @ b.conj().T - nb @ rho - rho @ nb)
    return drho


def integrate_master_oracle(rho0, d: DimensionlessParams, dims: FockDims,
                            t_end, dt, sample_stride=1,
                            max_total_dim=ORACLE_MAX_TOTAL_DIM):
    """RK4 integration of the master equation on a small truncated space.

    Refuses dimensions above ``max_total_dim``: the oracle exists to
    validate the jump unraveling on instances where the full density
    matrix is cheap.  Returns (times, rho_array) with rho_array of
    shape (n_samples, total, total).
    """
    if dims.total > max_total_dim:
        raise BudgetError(
            f"oracle limited to total dimension {max_total_dim}, "
            f"got {dims.total}")
    h = build_hamiltonian(d, dims).matrix.toarray()
    a = annihilation_matrix(dims.dim_a, "a", dims).matrix.toarray()
    b = annihilation_matrix(dims.dim_b, "b", dims).matrix.toarray()
    na = a.conj().T @ a
    nb = b.conj().T @ b

    def rhs(rho):
        drho = -1j * (h @ rho - rho @ h)
        drho += d.kappa * (2.0 * a @ rho @ a.conj().T - na @ rho - rho @ na)
        drho += d.gamma * (2.0 * b @ rho @ b.conj().T - nb @ rho - rho @ nb)
        return drho

    n_steps = int(round(t_end / dt))
    n_samples = n_steps // sample_stride + 1
    times = np.arange(n_samples) * (sample_stride * dt)
    out = np.empty((n_samples, dims.total, dims.total), dtype=complex)
    rho = np.array(rho0, dtype=complex)
    out[0] = rho
    idx = 1
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if step % sample_stride == 0:
            out[idx] = rho
            idx += 1
    return times, out
