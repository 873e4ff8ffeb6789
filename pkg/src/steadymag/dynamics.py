"""Driven-dissipative two-level dynamics.

Rotating-frame Hamiltonian, master-equation generator, analytic and numeric
steady states, first-order response in the sensed field, and time-domain
propagation. Basis order is (|m_s=+1>, |m_s=0>), so sigma_z = |1><1| - |0><0|
and the amplitude-damping jump operator sends |1> to |0>.

Master-equation convention used throughout:

    drho/dt = -i[H, rho] + sum_j (2 L_j rho L_j^+ - L_j^+ L_j rho - rho L_j^+ L_j)

with L_1 = sqrt(gamma1/2) sigma_- and L_2 = (sqrt(gamma2)/2) sigma_z. Under
this normalization the coherence decays at exactly gamma2 + gamma1/2 = 1/T2
and the excited population at gamma1 = 1/T1, which is what the closed-form
steady state below assumes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    IntegrationError,
    LinearizationWarning,
    ParameterError,
    SingularSystemError,
)
from .model import (
    DerivedRates,
    DriveField,
    HyperfineEnsemble,
    PhysicalConstants,
    SensorParams,
    derive_rates,
)

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

TRACE_TOL = 1e-9
EIGENVALUE_TOL = 1e-9
HERMITICITY_TOL = 1e-9

# vec() stacks columns: index order (rho_00, rho_10, rho_01, rho_11).
_TRACE_ROW = np.array([1.0, 0.0, 0.0, 1.0], dtype=complex)


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization of a 2x2 matrix."""
    return np.asarray(matrix, dtype=complex).reshape(4, order="F")


def unvec(vector: np.ndarray) -> np.ndarray:
    return np.asarray(vector, dtype=complex).reshape((2, 2), order="F")


@dataclass(frozen=True, eq=False)
class SpinState:
    """Two-level density matrix in the (|m_s=+1>, |m_s=0>) basis.

    Construction validates Hermiticity, unit trace (within 1e-9), and
    positivity (eigenvalues >= -1e-9).
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ParameterError(f"density matrix must be 2x2, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
            raise ParameterError("density matrix is not Hermitian")
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ParameterError(f"density matrix trace {tr!r} is not 1")
        eigs = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if eigs.min() < -EIGENVALUE_TOL:
            raise ParameterError(f"density matrix has negative eigenvalue {eigs.min():.3e}")

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "SpinState":
        m = 0.5 * (IDENTITY2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)
        return cls(m)

    @classmethod
    def ground(cls) -> "SpinState":
        """All population in |m_s=0>."""
        return cls.from_bloch(0.0, 0.0, -1.0)

    @classmethod
    def excited(cls) -> "SpinState":
        """All population in |m_s=+1>."""
        return cls.from_bloch(0.0, 0.0, 1.0)

    @classmethod
    def maximally_mixed(cls) -> "SpinState":
        return cls.from_bloch(0.0, 0.0, 0.0)

    @property
    def bloch(self) -> tuple[float, float, float]:
        m = self.matrix
        x = 2.0 * m[0, 1].real
        y = -2.0 * m[0, 1].imag
        z = (m[0, 0] - m[1, 1]).real
        return x, y, z


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """4x4 generator acting on the column-stacked density matrix."""

    matrix: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Return drho/dt for a 2x2 density matrix rho."""
        return unvec(self.matrix @ vec(rho))

    def trace_functional_residual(self) -> float:
        """Norm of vec(I)^T L; zero iff the generator preserves the trace."""
        return float(np.linalg.norm(_TRACE_ROW @ self.matrix))


@dataclass(frozen=True, eq=False)
class LinearResponse:
    """Steady state split rho(b) ~ rho0 + kernel*b for a weak sensed field.

    ``kernel`` is Hermitian, traceless, and carries units of 1/Tesla.
    """

    rho0: SpinState
    kernel: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Propagation result: P0 samples plus optional Bloch-vector history."""

    times: np.ndarray
    p0: np.ndarray
    final_state: SpinState
    bloch: np.ndarray | None = None
    max_bloch_norm: float = 0.0


def hamiltonian(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    b: float = 0.0,
) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/s):
    H = (detuning - gamma_e*b) Sz - gamma_e*B1 Sx, with Sj = sigma_j / 2."""
    g = constants.gyromagnetic_ratio
    return 0.5 * (rates.detuning - g * b) * SIGMA_Z - 0.5 * g * params.drive_amplitude * SIGMA_X


def _dissipator_term(jump: np.ndarray) -> np.ndarray:
    # column-stacked superoperator of 2 L rho L+ - L+L rho - rho L+L
    ldl = jump.conj().T @ jump
    return (
        2.0 * np.kron(jump.conj(), jump)
        - np.kron(IDENTITY2, ldl)
        - np.kron(ldl.T, IDENTITY2)
    )


def build_liouvillian(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    b: float = 0.0,
) -> Liouvillian:
    """Full master-equation generator at an instantaneous field value b."""
    h = hamiltonian(params, rates, constants, b)
    mat = -1.0j * (np.kron(IDENTITY2, h) - np.kron(h.T, IDENTITY2))
    mat += _dissipator_term(math.sqrt(params.gamma1 / 2.0) * SIGMA_MINUS)
    if params.gamma2 > 0.0:
        mat += _dissipator_term(0.5 * math.sqrt(params.gamma2) * SIGMA_Z)
    return Liouvillian(mat)


def steady_state_numeric(liouvillian: Liouvillian) -> SpinState:
    """Null vector of the generator, fixed by the unit-trace constraint.

    The trace functional is a left null vector of any trace-preserving
    generator, so the population rows are linearly dependent; replacing the
    last row with the trace constraint yields a square solvable system
    whenever the null space is one-dimensional.
    """
    mat = np.asarray(liouvillian.matrix, dtype=complex)
    scale = np.linalg.norm(mat)
    if scale == 0.0:
        raise SingularSystemError("zero generator has a degenerate null space")
    system = mat / scale
    system[3, :] = _TRACE_ROW
    rhs = np.array([0.0, 0.0, 0.0, 1.0], dtype=complex)
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"steady-state system is singular: {exc}") from exc
    residual = np.linalg.norm(mat @ solution) / scale
    if residual > 1e-12:
        raise SingularSystemError(
            f"steady-state residual {residual:.3e} exceeds 1e-12; "
            "the null space is degenerate or ill-conditioned"
        )
    rho = unvec(solution)
    rho = 0.5 * (rho + rho.conj().T)
    return SpinState(rho)


def steady_state_analytic(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    b: float = 0.0,
) -> SpinState:
    """Closed-form steady state at effective detuning (detuning - gamma_e*b)."""
    g = constants.gyromagnetic_ratio
    t2 = rates.t2
    s = rates.saturation
    dt = (rates.detuning - g * b) * t2
    denom = 1.0 + s + dt * dt
    rho_ee = 0.5 * s / denom
    rho_eg = 0.5 * (g * params.drive_amplitude * t2) * (dt + 1.0j) / denom
    m = np.array(
        [[rho_ee, rho_eg], [rho_eg.conjugate(), 1.0 - rho_ee]], dtype=complex
    )
    return SpinState(m)


def linear_response(
    params: SensorParams, rates: DerivedRates, constants: PhysicalConstants
) -> LinearResponse:
    """First-order split of the steady state in the sensed field b."""
    g = constants.gyromagnetic_ratio
    t2 = rates.t2
    s = rates.saturation
    x = rates.detuning * t2
    denom = 1.0 + s + x * x
    k_ee = g * rates.detuning * t2 * t2 * s / denom**2
    k_eg = (
        -(g * g) * params.drive_amplitude * t2 * t2
        * ((1.0 + s - x * x) - 2.0j * x)
        / (2.0 * denom**2)
    )
    kernel = np.array([[k_ee, k_eg], [k_eg.conjugate(), -k_ee]], dtype=complex)
    return LinearResponse(
        rho0=steady_state_analytic(params, rates, constants, 0.0), kernel=kernel
    )


def p0_of_state(state: SpinState) -> float:
    """Population of |m_s=0>."""
    return float(state.matrix[1, 1].real)


def steady_state_p0(rates: DerivedRates, constants: PhysicalConstants, b):
    """Closed-form P0 of the steady state; accepts scalar or array b."""
    dt = (rates.detuning - constants.gyromagnetic_ratio * b) * rates.t2
    s = rates.saturation
    return (2.0 + s + 2.0 * dt * dt) / (2.0 * (1.0 + s + dt * dt))


def p0_linear(
    params: SensorParams, rates: DerivedRates, constants: PhysicalConstants, b
):
    """First-order P0(b); warns when |gamma_e*b*T2| > 0.1.

    Equivalent to p0_of_state(rho0 + kernel*b) but cheap and vectorized in b.
    """
    g = constants.gyromagnetic_ratio
    t2 = rates.t2
    s = rates.saturation
    x = rates.detuning * t2
    validity = np.max(np.abs(g * np.asarray(b) * t2))
    if validity > 0.1:
        warnings.warn(
            f"|gamma_e*b*T2| = {validity:.3f} > 0.1: first-order P0 is suspect",
            LinearizationWarning,
            stacklevel=2,
        )
    denom = 1.0 + s + x * x
    offset = (2.0 + s + 2.0 * x * x) / (2.0 * denom)
    slope = -g * rates.detuning * t2 * t2 * s / denom**2
    return offset + slope * b


def p0_slope(rates: DerivedRates, constants: PhysicalConstants) -> float:
    """dP0/db of the steady state at b = 0 (1/Tesla)."""
    g = constants.gyromagnetic_ratio
    x = rates.detuning * rates.t2
    denom = 1.0 + rates.saturation + x * x
    return -g * rates.detuning * rates.t2**2 * rates.saturation / denom**2


def ensemble_p0(
    ensemble: HyperfineEnsemble,
    constants: PhysicalConstants,
    b,
    mode: str = "analytic",
):
    """Weighted P0 over the nuclear-spin mixture; scalar or array b.

    mode "analytic" evaluates the full steady-state P0 per member; "linear"
    uses the first-order expansion instead.
    """
    if mode not in ("analytic", "linear"):
        raise ParameterError(f"mode must be 'analytic' or 'linear', got {mode!r}")
    total = 0.0
    for weight, member in ensemble.members():
        if weight == 0.0:
            continue
        rates = derive_rates(member, constants)
        if mode == "analytic":
            total = total + weight * steady_state_p0(rates, constants, b)
        else:
            total = total + weight * p0_linear(member, rates, constants, b)
    return total


@njit(cache=True)
def _rk4_bloch(
    x, y, z, delta, rabi, inv_t2, gamma1, g_bac, omega, phase,
    t0, dt, n_steps, out_p0, out_bloch, store_bloch,
):
    """Classic one-step 4th-order propagation of the Bloch vector.

    The trace is held at 1 by construction; returns the final Bloch vector
    and the maximum squared Bloch norm seen along the way (positivity check).
    """
    out_p0[0] = 0.5 * (1.0 - z)
    if store_bloch:
        out_bloch[0, 0] = x
        out_bloch[0, 1] = y
        out_bloch[0, 2] = z
    max_r2 = x * x + y * y + z * z
    for i in range(n_steps):
        t = t0 + i * dt

        de = delta - g_bac * np.cos(omega * t + phase)
        k1x = -de * y - inv_t2 * x
        k1y = de * x + rabi * z - inv_t2 * y
        k1z = -rabi * y - gamma1 * (1.0 + z)

        th = t + 0.5 * dt
        de = delta - g_bac * np.cos(omega * th + phase)
        x2 = x + 0.5 * dt * k1x
        y2 = y + 0.5 * dt * k1y
        z2 = z + 0.5 * dt * k1z
        k2x = -de * y2 - inv_t2 * x2
        k2y = de * x2 + rabi * z2 - inv_t2 * y2
        k2z = -rabi * y2 - gamma1 * (1.0 + z2)

        x3 = x + 0.5 * dt * k2x
        y3 = y + 0.5 * dt * k2y
        z3 = z + 0.5 * dt * k2z
        k3x = -de * y3 - inv_t2 * x3
        k3y = de * x3 + rabi * z3 - inv_t2 * y3
        k3z = -rabi * y3 - gamma1 * (1.0 + z3)

        te = t + dt
        de = delta - g_bac * np.cos(omega * te + phase)
        x4 = x + dt * k3x
        y4 = y + dt * k3y
        z4 = z + dt * k3z
        k4x = -de * y4 - inv_t2 * x4
        k4y = de * x4 + rabi * z4 - inv_t2 * y4
        k4z = -rabi * y4 - gamma1 * (1.0 + z4)

        x += dt * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
        y += dt * (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
        z += dt * (k1z + 2.0 * k2z + 2.0 * k3z + k4z) / 6.0

        out_p0[i + 1] = 0.5 * (1.0 - z)
        if store_bloch:
            out_bloch[i + 1, 0] = x
            out_bloch[i + 1, 1] = y
            out_bloch[i + 1, 2] = z
        r2 = x * x + y * y + z * z
        if r2 > max_r2:
            max_r2 = r2
    return x, y, z, max_r2


def quasi_static_limit(rates: DerivedRates) -> float:
    """Highest signal frequency (Hz) treated as quasi-static.

    Below 1/(20 * 2*pi * max(T1, T2)) the sensor tracks the instantaneous
    steady state to well under a percent and pointwise evaluation replaces
    time integration.
    """
    return 1.0 / (40.0 * math.pi * max(rates.t1, rates.t2))


def required_time_step(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    drive: DriveField,
) -> float:
    """Largest step the propagator accepts: the fastest timescale / 20."""
    scales = [rates.t2]
    if drive.angular_frequency != 0.0:
        scales.append(2.0 * math.pi / abs(drive.angular_frequency))
    rabi = abs(constants.gyromagnetic_ratio * params.drive_amplitude)
    if rabi != 0.0:
        scales.append(2.0 * math.pi / rabi)
    if rates.detuning != 0.0:
        scales.append(2.0 * math.pi / abs(rates.detuning))
    return min(scales) / 20.0


def integrate_trajectory(
    params: SensorParams,
    rates: DerivedRates,
    constants: PhysicalConstants,
    drive: DriveField,
    times: np.ndarray,
    initial_state: SpinState,
    store_bloch: bool = False,
) -> Trajectory:
    """Propagate the master equation over a uniform time grid.

    Returns P0 at every grid point (and the Bloch history when
    ``store_bloch``). Refuses grids coarser than ``required_time_step``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise DataError("time grid must be a 1-d array with at least two points")
    dt = times[1] - times[0]
    if dt <= 0.0:
        raise DataError("time grid must be strictly increasing")
    steps = np.diff(times)
    # rounding of t = i*dt grows with |t|; allow for it before calling a grid
    # non-uniform
    tol = max(1e-9 * dt, 8.0 * np.finfo(float).eps * float(np.max(np.abs(times))))
    if np.max(np.abs(steps - dt)) > tol:
        raise DataError("time grid must be uniform")
    dt_max = required_time_step(params, rates, constants, drive)
    if dt > dt_max * (1.0 + 1e-12):
        raise ParameterError(
            f"time step {dt:.3e} s too coarse for these parameters; "
            f"integration requires dt <= {dt_max:.3e} s"
        )

    x, y, z = initial_state.bloch
    n_steps = times.size - 1
    out_p0 = np.empty(times.size)
    out_bloch = np.empty((times.size if store_bloch else 1, 3))
    x, y, z, max_r2 = _rk4_bloch(
        x, y, z,
        rates.detuning,
        constants.gyromagnetic_ratio * params.drive_amplitude,
        1.0 / rates.t2,
        params.gamma1,
        constants.gyromagnetic_ratio * drive.amplitude,
        drive.angular_frequency,
        drive.phase,
        times[0],
        dt,
        n_steps,
        out_p0,
        out_bloch,
        store_bloch,
    )
    max_norm = math.sqrt(max_r2)
    if max_norm > 1.0 + 2.0 * EIGENVALUE_TOL:
        raise IntegrationError(
            f"propagated state left the Bloch ball (|r| = {max_norm:.12f}); "
            "reduce the time step"
        )
    final = SpinState.from_bloch(x, y, z)
    return Trajectory(
        times=times,
        p0=out_p0,
        final_state=final,
        bloch=out_bloch if store_bloch else None,
        max_bloch_norm=max_norm,
    )
