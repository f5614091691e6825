"""Parameterized ODE systems, trajectory integration, and forward
parameter sensitivities.

The sensitivity matrix Z(t) = dX/dt-parameters obeys the variational system

    Z'(t) = df/dx(X, a) Z(t) + df/da(X, a),   Z(0) = 0,

which is integrated jointly with the state as one augmented system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import DEFAULTS, Tolerances
from .errors import (
    DimensionError,
    DivergenceError,
    DomainError,
    InputFormatError,
    IntegrationError,
)

_EPS = float(np.finfo(float).eps)


# ---------------------------------------------------------------------------
# polynomial maps R^k -> R^k


class PolyMap:
    """Polynomial map R^k -> R^k given as monomial lists.

    ``components[r]`` is a list of ``(coeff, exponents)`` pairs for output
    coordinate r, with ``exponents`` a length-k tuple of non-negative ints.
    """

    def __init__(self, state_dim: int, components: Sequence[Sequence[tuple]]):
        if state_dim < 1:
            raise DimensionError("state_dim must be >= 1")
        if len(components) != state_dim:
            raise DimensionError(
                f"expected {state_dim} components, got {len(components)}"
            )
        self.state_dim = int(state_dim)
        comps = []
        for r, comp in enumerate(components):
            terms = []
            for coeff, exps in comp:
                exps = tuple(int(e) for e in exps)
                if len(exps) != state_dim or any(e < 0 for e in exps):
                    raise DimensionError(
                        f"component {r}: exponent multi-index {exps} invalid"
                    )
                if not math.isfinite(float(coeff)):
                    raise DomainError("monomial coefficient must be finite")
                if coeff != 0.0:
                    terms.append((float(coeff), exps))
            comps.append(tuple(terms))
        self.components = tuple(comps)

    @property
    def is_zero(self) -> bool:
        return all(len(c) == 0 for c in self.components)

    def value(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.state_dim)
        for r, comp in enumerate(self.components):
            acc = 0.0
            for coeff, exps in comp:
                term = coeff
                for i, e in enumerate(exps):
                    if e:
                        term *= x[i] ** e
                acc += term
            out[r] = acc
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        jac = np.zeros((self.state_dim, self.state_dim))
        for r, comp in enumerate(self.components):
            for coeff, exps in comp:
                for s, e in enumerate(exps):
                    if e == 0:
                        continue
                    term = coeff * e
                    for i, ei in enumerate(exps):
                        power = ei - 1 if i == s else ei
                        if power:
                            term *= x[i] ** power
                    jac[r, s] += term
        return jac

    @staticmethod
    def scalar(monomials: Sequence[tuple[float, int]]) -> "PolyMap":
        """1-D convenience: [(coeff, power), ...]."""
        return PolyMap(1, [[(c, (p,)) for c, p in monomials]])


# ---------------------------------------------------------------------------
# parameterized systems


class ParamSystem:
    """Vector field f(x, a) with exact (or flagged-approximate) partials."""

    state_dim: int
    param_dim: int
    derivatives_exact: bool = True

    def f(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dfdx(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dfda(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, x, alpha) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float).reshape(-1)
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if x.shape[0] != self.state_dim:
            raise DimensionError(
                f"state has dimension {x.shape[0]}, expected {self.state_dim}"
            )
        if alpha.shape[0] != self.param_dim:
            raise DimensionError(
                f"parameter vector has dimension {alpha.shape[0]}, "
                f"expected {self.param_dim}"
            )
        return x, alpha

    def rhs(self, alpha: np.ndarray) -> Callable[[float, np.ndarray], np.ndarray]:
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        return lambda t, x: self.f(x, alpha)

    def sensitivity_rhs(self, alpha) -> Callable[[float, np.ndarray], np.ndarray]:
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        k, n = self.state_dim, self.param_dim

        def rhs(t, y):
            x = y[:k]
            z = y[k:].reshape(k, n)
            dz = self.dfdx(x, alpha) @ z + self.dfda(x, alpha)
            return np.concatenate([self.f(x, alpha), dz.ravel()])

        return rhs


class PolynomialBasis(ParamSystem):
    """f(x, a) = a_1 P_1(x) + ... + a_n P_n(x) for polynomial maps P_i."""

    def __init__(self, maps: Sequence[PolyMap]):
        if len(maps) == 0:
            raise DimensionError("at least one basis map required")
        k = maps[0].state_dim
        for i, m in enumerate(maps):
            if m.state_dim != k:
                raise DimensionError(f"basis map {i} has state_dim {m.state_dim} != {k}")
            if m.is_zero:
                raise DomainError(f"basis map {i} is identically zero")
        self.maps = tuple(maps)
        self.state_dim = k
        self.param_dim = len(maps)

    def basis_block(self, x: np.ndarray) -> np.ndarray:
        """k x n matrix with column i = P_i(x); equals df/da."""
        return np.column_stack([m.value(x) for m in self.maps])

    def f(self, x, alpha):
        x, alpha = self._check(x, alpha)
        return self.basis_block(x) @ alpha

    def dfdx(self, x, alpha):
        x, alpha = self._check(x, alpha)
        out = np.zeros((self.state_dim, self.state_dim))
        for a_i, m in zip(alpha, self.maps):
            if a_i != 0.0:
                out += a_i * m.jacobian(x)
        return out

    def dfda(self, x, alpha):
        x, _ = self._check(x, alpha)
        return self.basis_block(x)


class MatrixLinear(ParamSystem):
    """f(x, a) = A x with A the k x k matrix holding the parameters.

    The parameter vector is the matrix flattened row by row, so
    a[i*k + j] = A[i, j].
    """

    def __init__(self, state_dim: int):
        if state_dim < 1:
            raise DimensionError("state_dim must be >= 1")
        self.state_dim = int(state_dim)
        self.param_dim = self.state_dim ** 2

    @staticmethod
    def pack(matrix) -> np.ndarray:
        return np.asarray(matrix, dtype=float).reshape(-1)

    def unpack(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if alpha.shape[0] != self.param_dim:
            raise DimensionError(
                f"parameter vector has dimension {alpha.shape[0]}, "
                f"expected {self.param_dim}"
            )
        return alpha.reshape(self.state_dim, self.state_dim)

    def f(self, x, alpha):
        x, alpha = self._check(x, alpha)
        return alpha.reshape(self.state_dim, self.state_dim) @ x

    def dfdx(self, x, alpha):
        _, alpha = self._check(x, alpha)
        return alpha.reshape(self.state_dim, self.state_dim)

    def dfda(self, x, alpha):
        x, _ = self._check(x, alpha)
        return np.kron(np.eye(self.state_dim), x[None, :])

    def rhs(self, alpha):
        amat = self.unpack(alpha)
        return lambda t, x: amat @ x

    def sensitivity_rhs(self, alpha):
        amat = self.unpack(alpha)
        k, n = self.state_dim, self.param_dim
        eye = np.eye(k)

        def rhs(t, y):
            x = y[:k]
            z = y[k:].reshape(k, n)
            dz = amat @ z + np.kron(eye, x[None, :])
            return np.concatenate([amat @ x, dz.ravel()])

        return rhs


class CallbackSystem(ParamSystem):
    """User-supplied f(x, a); partials default to central finite differences.

    Finite-difference partials are flagged via ``derivatives_exact = False``
    so downstream rank reports can mark the Jacobian as approximate.
    """

    def __init__(self, state_dim: int, param_dim: int, f_func,
                 dfdx_func=None, dfda_func=None,
                 fd_step_scale: float = DEFAULTS.fd_step_scale):
        self.state_dim = int(state_dim)
        self.param_dim = int(param_dim)
        self._f = f_func
        self._dfdx = dfdx_func
        self._dfda = dfda_func
        self._step = float(fd_step_scale)
        self.derivatives_exact = dfdx_func is not None and dfda_func is not None

    def f(self, x, alpha):
        x, alpha = self._check(x, alpha)
        return np.asarray(self._f(x, alpha), dtype=float).reshape(-1)

    def _fd(self, x, alpha, wrt_x: bool) -> np.ndarray:
        base = x if wrt_x else alpha
        cols = []
        for j in range(base.shape[0]):
            h = self._step * max(1.0, abs(base[j]))
            bumped_p = base.copy()
            bumped_m = base.copy()
            bumped_p[j] += h
            bumped_m[j] -= h
            if wrt_x:
                fp, fm = self.f(bumped_p, alpha), self.f(bumped_m, alpha)
            else:
                fp, fm = self.f(x, bumped_p), self.f(x, bumped_m)
            cols.append((fp - fm) / (2.0 * h))
        return np.column_stack(cols)

    def dfdx(self, x, alpha):
        x, alpha = self._check(x, alpha)
        if self._dfdx is not None:
            return np.asarray(self._dfdx(x, alpha), dtype=float)
        return self._fd(x, alpha, wrt_x=True)

    def dfda(self, x, alpha):
        x, alpha = self._check(x, alpha)
        if self._dfda is not None:
            return np.asarray(self._dfda(x, alpha), dtype=float)
        return self._fd(x, alpha, wrt_x=False)


def evaluate(sys: ParamSystem, x, alpha) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(f, df/dx, df/da) at one point."""
    return sys.f(x, alpha), sys.dfdx(x, alpha), sys.dfda(x, alpha)


# ---------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray          # strictly increasing, shape (m,)
    states: np.ndarray         # shape (m, k)
    integrator_tol: float

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise DimensionError("times and states lengths differ")
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise DomainError("states contain non-finite entries")


@dataclass(frozen=True)
class SensitivityBundle:
    times: np.ndarray          # shape (m,)
    states: np.ndarray         # shape (m, k)
    sensitivities: np.ndarray  # shape (m, k, n); Z(0) = 0 is the initial condition
    integrator_tol: float = field(default=DEFAULTS.integrator_tol)

    def __post_init__(self):
        m = self.times.shape[0]
        if self.states.shape[0] != m or self.sensitivities.shape[0] != m:
            raise DimensionError("times/states/sensitivities lengths differ")

    def stacked_jacobian(self) -> np.ndarray:
        """(m*k) x n matrix of Z(t_j) blocks, sample-major."""
        m, k, n = self.sensitivities.shape
        return self.sensitivities.reshape(m * k, n)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) core

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_ERR = _DP_B5 - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _initial_step(rhs, y0, f0, tol, t_span):
    sc = tol + tol * np.abs(y0)
    d0 = math.sqrt(float(np.mean((y0 / sc) ** 2)))
    d1 = math.sqrt(float(np.mean((f0 / sc) ** 2)))
    h0 = 1e-6 * t_span if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_span)
    f1 = rhs(h0, y0 + h0 * f0)
    d2 = math.sqrt(float(np.mean(((f1 - f0) / sc) ** 2))) / h0
    if not math.isfinite(d2):
        return h0
    dmax = max(d1, d2)
    h1 = t_span * 1e-3 if dmax <= 1e-15 else (0.01 / dmax) ** 0.2
    return min(100.0 * h0, h1, t_span)


def _integrate_grid(rhs, y0, times, tol, max_steps=DEFAULTS.integrator_max_steps):
    """Adaptive DP 5(4) from t=0 delivering exactly the grid `times`."""
    y = np.asarray(y0, dtype=float).copy()
    t = 0.0
    t_final = float(times[-1])
    h_min = 16.0 * _EPS * t_final
    out = np.empty((len(times), y.shape[0]))

    f_now = rhs(t, y)
    if not np.all(np.isfinite(f_now)):
        raise DivergenceError("derivative non-finite at initial state", t)
    h_nat = _initial_step(rhs, y, f_now, tol, t_final)

    steps = 0
    k = np.empty((7, y.shape[0]))
    for target_i, t_target in enumerate(times):
        while t < t_target - h_min:
            if steps >= max_steps:
                raise IntegrationError("step budget exhausted", t)
            h = min(h_nat, t_target - t)
            clamped = h < h_nat
            if h < h_min:
                raise IntegrationError("step size underflow", t)

            k[0] = f_now
            finite = True
            for stage in range(1, 7):
                y_stage = y + h * (_DP_A[stage] @ k[:stage])
                k[stage] = rhs(t + _DP_C[stage] * h, y_stage)
                if not np.all(np.isfinite(k[stage])):
                    finite = False
                    break
            if finite:
                y_new = y + h * (_DP_B5 @ k)
                finite = bool(np.all(np.isfinite(y_new)))
            if not finite:
                # retry smaller; if the step floor is hit the state is blowing up
                h_nat = h * 0.25
                if h_nat < h_min:
                    raise DivergenceError("state diverged", t)
                continue

            err_vec = h * (_DP_ERR @ k)
            sc = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
            err = math.sqrt(float(np.mean((err_vec / sc) ** 2)))
            steps += 1
            if err <= 1.0:
                t = t_target if (t_target - t - h) < h_min else t + h
                y = y_new
                f_now = k[6]  # FSAL
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if clamped:
                    h_nat = max(h_nat, h * factor)
                else:
                    h_nat = h * factor
            else:
                h_nat = h * max(0.2, 0.9 * err ** -0.2)
        out[target_i] = y
        t = t_target
    return out


def rk4_fixed(rhs, y0, t_end: float, n_steps: int):
    """Classical fixed-step 4th-order path; returns (times, states) incl. t=0."""
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    h = t_end / n_steps
    y = np.asarray(y0, dtype=float).copy()
    times = np.linspace(0.0, t_end, n_steps + 1)
    states = np.empty((n_steps + 1, y.shape[0]))
    states[0] = y
    for i in range(n_steps):
        t = times[i]
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise DivergenceError("state diverged", float(times[i + 1]))
        states[i + 1] = y
    return times, states


# ---------------------------------------------------------------------------
# public integration entry points


def _check_integration_args(sys, alpha, x0, t_end, samples, tol,
                            tols: Tolerances) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x0, alpha = sys._check(x0, alpha)
    if not (t_end > 0.0 and math.isfinite(t_end)):
        raise DomainError("t_end must be positive and finite")
    if samples < 1:
        raise DomainError("samples must be >= 1")
    if not (tols.integrator_min_tol <= tol <= tols.integrator_max_tol):
        raise DomainError(
            f"tol must lie in [{tols.integrator_min_tol}, {tols.integrator_max_tol}]"
        )
    h = t_end / samples
    times = h * np.arange(1, samples + 1)
    return x0, alpha, times


def integrate(sys: ParamSystem, alpha, x0, t_end: float, samples: int,
              tol: float = DEFAULTS.integrator_tol,
              tols: Tolerances = DEFAULTS) -> Trajectory:
    """States on the uniform grid j*h, j = 1..samples, h = t_end/samples."""
    x0, alpha, times = _check_integration_args(sys, alpha, x0, t_end, samples, tol, tols)
    states = _integrate_grid(sys.rhs(alpha), x0, times, tol, tols.integrator_max_steps)
    return Trajectory(times=times, states=states, integrator_tol=tol)


def integrate_with_sensitivity(sys: ParamSystem, alpha, x0, t_end: float,
                               samples: int, tol: float = DEFAULTS.integrator_tol,
                               tols: Tolerances = DEFAULTS) -> SensitivityBundle:
    """Joint state + variational integration; Z(0) = 0."""
    x0, alpha, times = _check_integration_args(sys, alpha, x0, t_end, samples, tol, tols)
    k, n = sys.state_dim, sys.param_dim
    y0 = np.concatenate([x0, np.zeros(k * n)])
    raw = _integrate_grid(sys.sensitivity_rhs(alpha), y0, times, tol,
                          tols.integrator_max_steps)
    states = raw[:, :k]
    sens = raw[:, k:].reshape(len(times), k, n)
    return SensitivityBundle(times=times, states=states, sensitivities=sens,
                             integrator_tol=tol)


# ---------------------------------------------------------------------------
# CSV export (one row per sample, 17 significant digits)


def trajectory_csv_lines(times: np.ndarray, values: np.ndarray) -> list[str]:
    k = values.shape[1]
    header = "t," + ",".join(f"x{i + 1}" for i in range(k))
    lines = [header]
    for t, row in zip(times, values):
        lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
    return lines


def write_trajectory_csv(path, times: np.ndarray, values: np.ndarray) -> None:
    Path(path).write_text("\n".join(trajectory_csv_lines(times, values)) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse the trajectory CSV format; errors carry the offending row."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InputFormatError("empty trajectory file", 1)
    if not lines[0].startswith("t,"):
        raise InputFormatError("missing 't,x1,...' header", 1)
    k = len(lines[0].split(",")) - 1
    times, values = [], []
    for rowno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != k + 1:
            raise InputFormatError(
                f"expected {k + 1} columns, got {len(cells)}", rowno
            )
        try:
            nums = [float(c) for c in cells]
        except ValueError as exc:
            raise InputFormatError(f"bad number: {exc}", rowno) from exc
        times.append(nums[0])
        values.append(nums[1:])
    return np.array(times), np.array(values)
