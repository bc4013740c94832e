"""Deterministic mean-field dynamics of the driven Kerr optomechanical cavity.

The two complex amplitudes obey (mechanical frequency = 1)

    da/dt = { i [ delta + g (b* + b) + 2 chi |a|^2 ] - kappa } a + E
    db/dt = ( -i - gamma ) b + i g |a|^2

Integration uses fixed-step classical RK4: bit-for-bit reproducible for
identical inputs, which the comparison experiments rely on.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, MisuseError, StabilityError
from .model import DimensionlessParams

BLOWUP_BOUND = 1e16  # on |a|^2 and |b|^2
STABILITY_MARGIN = 0.1  # dt * local rate must stay below this


@dataclass(frozen=True)
class PhaseState:
    """Cavity and mechanical complex amplitudes."""

    a: complex
    b: complex

    def is_finite(self):
        return bool(np.isfinite(self.a) and np.isfinite(self.b))


@dataclass
class Trajectory:
    """Sampled deterministic or stochastic trajectory.

    ``times`` is strictly increasing; ``a`` and ``b`` are complex arrays
    of the same length.
    """

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    params: DimensionlessParams | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=complex)
        if not (len(self.times) == len(self.a) == len(self.b)):
            raise MisuseError("trajectory arrays must have equal length")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise MisuseError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def intensity(self):
        """|a|^2 per sample."""
        return np.abs(self.a) ** 2

    def state_at(self, i) -> PhaseState:
        return PhaseState(complex(self.a[i]), complex(self.b[i]))


def meanfield_rhs(s: PhaseState, d: DimensionlessParams) -> PhaseState:
    """Time derivative of the mean-field amplitudes."""
    abs_a2 = s.a.real ** 2 + s.a.imag ** 2
    da = (1j * (d.delta + d.coupling * 2.0 * s.b.real + 2.0 * d.kerr * abs_a2)
          - d.kappa) * s.a + d.drive
    db = (-1j - d.gamma) * s.b + 1j * d.coupling * abs_a2
    return PhaseState(da, db)


def linear_steady_state(d: DimensionlessParams) -> PhaseState:
    """Fixed point E / (kappa - i delta) of the linear (g = chi = 0) system."""
    if d.coupling != 0.0 or d.kerr != 0.0:
        raise MisuseError("linear steady state requires g = chi = 0")
    return PhaseState(d.drive / (d.kappa - 1j * d.delta), 0j)


def _rk4_loop(f, a0, b0, t_end, dt, stride, check_rate):
    """Fixed-step RK4 over python complex scalars.

    ``f(a, b) -> (da, db)``.  Samples every ``stride`` steps, always
    including the initial state.  Raises on blow-up or when the local
    stability bound is violated.
    """
    n_steps = int(round(t_end / dt))
    if n_steps < 1:
        raise MisuseError("t_end must cover at least one step")
    n_samples = n_steps // stride + 1
    times = np.empty(n_samples)
    a_out = np.empty(n_samples, dtype=complex)
    b_out = np.empty(n_samples, dtype=complex)
    times[0], a_out[0], b_out[0] = 0.0, a0, b0

    a, b = complex(a0), complex(b0)
    half = 0.5 * dt
    sixth = dt / 6.0
    idx = 1
    for k in range(n_steps):
        rate = check_rate(a, b)
        if dt * rate >= STABILITY_MARGIN:
            raise StabilityError(
                f"dt * local rate = {dt * rate:.3g} >= {STABILITY_MARGIN} "
                f"at t = {k * dt:.6g}; reduce dt")
        da1, db1 = f(a, b)
        da2, db2 = f(a + half * da1, b + half * db1)
        da3, db3 = f(a + half * da2, b + half * db2)
        da4, db4 = f(a + dt * da3, b + dt * db3)
        a = a + sixth * (da1 + 2.0 * (da2 + da3) + da4)
        b = b + sixth * (db1 + 2.0 * (db2 + db3) + db4)
        abs_a2 = a.real * a.real + a.imag * a.imag
        abs_b2 = b.real * b.real + b.imag * b.imag
        if not (abs_a2 < BLOWUP_BOUND and abs_b2 < BLOWUP_BOUND):
            raise DivergenceError(
                f"blow-up bound exceeded at t = {(k + 1) * dt:.6g}",
                last_valid_time=k * dt)
        if (k + 1) % stride == 0:
            times[idx] = (k + 1) * dt
            a_out[idx] = a
            b_out[idx] = b
            idx += 1
    return times[:idx], a_out[:idx], b_out[:idx]


def integrate_meanfield(d: DimensionlessParams, s0: PhaseState, t_end, dt,
                        sample_stride=1) -> Trajectory:
    """Integrate the mean-field equations with fixed-step RK4.

    Deterministic bit-for-bit for identical inputs.  The local stability
    bound dt * max(kappa, |delta| + g |b| + 2 chi |a|^2, 1) < 0.1 is
    checked at every step; exceeding the blow-up bound on |a|^2 or |b|^2
    raises a divergence error carrying the last valid time.
    """
    if dt <= 0.0 or t_end <= 0.0:
        raise MisuseError("dt and t_end must be positive")
    if not s0.is_finite():
        raise MisuseError("initial state must be finite")

    delta, kappa, gamma = d.delta, d.kappa, d.gamma
    g, chi, drive = d.coupling, d.kerr, d.drive
    abs_delta = abs(delta)

    def f(a, b):
        abs_a2 = a.real * a.real + a.imag * a.imag
        da = (1j * (delta + g * 2.0 * b.real + 2.0 * chi * abs_a2)
              - kappa) * a + drive
        db = (-1j - gamma) * b + 1j * g * abs_a2
        return da, db

    def rate(a, b):
        abs_a2 = a.real * a.real + a.imag * a.imag
        return max(kappa, abs_delta + g * abs(b) + 2.0 * chi * abs_a2, 1.0)

    times, a_arr, b_arr = _rk4_loop(f, s0.a, s0.b, t_end, dt, sample_stride, rate)
    return Trajectory(times, a_arr, b_arr, params=d)


def integrate_rk4(f, s0: PhaseState, t_end, dt, sample_stride=1) -> Trajectory:
    """RK4 driver for an arbitrary drift ``f(a, b) -> (da, db)``.

    Shares the sampling and blow-up handling of ``integrate_meanfield``
    (no parameter-specific stability bound).  Used as the deterministic
    oracle when comparing against noise-free stochastic integration.
    """
    if dt <= 0.0 or t_end <= 0.0:
        raise MisuseError("dt and t_end must be positive")
    times, a_arr, b_arr = _rk4_loop(
        f, s0.a, s0.b, t_end, dt, sample_stride, check_rate=lambda a, b: 0.0)
    return Trajectory(times, a_arr, b_arr)
