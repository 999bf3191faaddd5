"""System matrices of the aggregated games, their closed-form diagonalisation,
and the exponential-sum coefficient functions built on top of them.

Three matrix families appear: the 4x4 aggregate matrix of the N-player game
(``Fbar4``), the 3x3 single-agent matrix of the N-player game (``F3``) and the
3x3 aggregate matrix of the mean-field game (``Btilde3``).  Eigenvectors and
inverse eigenvector matrices are evaluated from explicit formulas rather than
a generic eigensolver; only the quartic eigenvalues of ``Fbar4`` are found
numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .model import ModelParams, TimeGrid, validate_params


class AssumptionError(ValueError):
    """A solvability condition (real distinct spectrum, nonvanishing denominators) fails."""


class MatrixKind(str, Enum):
    FBAR4 = "Fbar4"
    F3 = "F3"
    BTILDE3 = "Btilde3"


class CoefficientKind(str, Enum):
    GBAR_HBAR = "GbarHbar"
    GH = "GH"
    KTILDE = "Ktilde"
    R = "R"


DENOMINATOR_FLOOR = 1e-8
GAP_FACTOR = 1e-7
IMAG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    kind: MatrixKind
    entries: np.ndarray
    params: ModelParams
    n_agents: int


def build_matrix(kind, params: ModelParams, n_agents: int = 1) -> SystemMatrix:
    kind = MatrixKind(kind)
    problems = validate_params(params)
    if problems:
        raise ValueError("; ".join(problems))
    lam, gam, kap, rho, phi = params.lam, params.gamma, params.kappa, params.rho, params.phi
    N = int(n_agents)
    if kind is not MatrixKind.BTILDE3 and N < 1:
        raise ValueError("n_agents must be >= 1")
    if kind is MatrixKind.FBAR4:
        entries = np.array([
            [0.0, 0.0, -1.0, 0.0],
            [0.0, -rho, gam, 0.0],
            [-phi / lam, kap * rho / (2 * lam), -kap * gam * (N - 1) / (2 * lam * N), rho / (2 * lam)],
            [0.0, 0.0, kap * gam / N, rho],
        ])
    elif kind is MatrixKind.F3:
        entries = np.array([
            [0.0, -1.0, 0.0],
            [-phi / lam, kap * gam / (2 * lam * N), rho / (2 * lam)],
            [0.0, kap * gam / N, rho],
        ])
    else:
        entries = np.array([
            [0.0, 0.0, -1.0],
            [0.0, -rho, gam],
            [-phi / lam, kap * rho / (2 * lam), -kap * gam / (2 * lam)],
        ])
        N = 0
    entries.setflags(write=False)
    return SystemMatrix(kind=kind, entries=entries, params=params, n_agents=N)


# ---------------------------------------------------------------------------
# polynomial roots


def solve_cubic_trig(a2: float, a1: float, a0: float) -> np.ndarray:
    """Three real roots of ``x^3 + a2 x^2 + a1 x + a0`` by the trigonometric method, ascending."""
    p = a1 - a2 * a2 / 3.0
    q = 2.0 * a2**3 / 27.0 - a2 * a1 / 3.0 + a0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if not disc < 0:
        raise AssumptionError("cubic not in three-real-roots regime")
    amp = math.sqrt(-4.0 * p / 3.0)
    arg = -q / 2.0 * math.sqrt(-27.0 / p**3)
    theta = math.acos(min(1.0, max(-1.0, arg))) / 3.0
    shift = a2 / 3.0
    roots = np.array([
        -amp * math.cos(theta + math.pi / 3.0) - shift,
        amp * math.cos(theta) - shift,
        -amp * math.cos(theta - math.pi / 3.0) - shift,
    ])
    return np.sort(roots)


def _polish(coeffs: np.ndarray, x: float, iters: int = 8) -> float:
    dcoeffs = np.polyder(coeffs)
    for _ in range(iters):
        fx = np.polyval(coeffs, x)
        dfx = np.polyval(dcoeffs, x)
        if dfx == 0 or fx == 0:
            break
        step = fx / dfx
        x -= step
        if abs(step) <= 1e-16 * max(1.0, abs(x)):
            break
    return x


def solve_quartic_numeric(coeffs: Sequence[float]) -> np.ndarray:
    """Four real roots of a monic quartic (companion eigenvalues plus Newton polish), ascending."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (5,):
        raise ValueError("expected five coefficients, highest degree first")
    if coeffs[0] != 1.0:
        coeffs = coeffs / coeffs[0]
    raw = np.roots(coeffs)
    if np.any(np.abs(raw.imag) > IMAG_TOL):
        raise AssumptionError("finite-game solvability violated: eigenvalues not real")
    return np.sort(np.array([_polish(coeffs, float(r.real)) for r in raw]))


def fbar_quartic(params: ModelParams, n_agents: int) -> np.ndarray:
    lam, gam, kap, rho, phi = params.lam, params.gamma, params.kappa, params.rho, params.phi
    N = n_agents
    return np.array([
        1.0,
        (N - 1) * kap * gam / (2 * N * lam),
        -(kap * gam * rho * (N + 1) / (2 * N * lam) + rho**2 + phi / lam),
        0.0,
        phi * rho**2 / lam,
    ])


def f_cubic(params: ModelParams, n_agents: int) -> tuple[float, float, float]:
    lam, gam, kap, rho, phi = params.lam, params.gamma, params.kappa, params.rho, params.phi
    N = n_agents
    return (-(2 * N * lam * rho + gam * kap) / (2 * N * lam), -phi / lam, phi * rho / lam)


def btilde_cubic(params: ModelParams) -> tuple[float, float, float]:
    lam, gam, kap, rho, phi = params.lam, params.gamma, params.kappa, params.rho, params.phi
    return ((2 * lam * rho + gam * kap) / (2 * lam), -phi / lam, -rho * phi / lam)


# ---------------------------------------------------------------------------
# diagonalisation


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    kind: MatrixKind
    eigenvalues: np.ndarray
    U: np.ndarray
    U_inv: np.ndarray
    matrix: SystemMatrix

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def _denominators(nu: np.ndarray) -> np.ndarray:
    """``D_i = prod_{k != i} (nu_i - nu_k)``; the alternating-sign products of the printed closed forms."""
    diff = nu[:, None] - nu[None, :]
    np.fill_diagonal(diff, 1.0)
    return diff.prod(axis=1)


def _prod_except(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = np.prod(np.delete(values, i))
    return out


def eigenvalues(matrix: SystemMatrix) -> np.ndarray:
    p, N = matrix.params, matrix.n_agents
    if matrix.kind is MatrixKind.FBAR4:
        return solve_quartic_numeric(fbar_quartic(p, N))
    if matrix.kind is MatrixKind.F3:
        return solve_cubic_trig(*f_cubic(p, N))
    return solve_cubic_trig(*btilde_cubic(p))


def decompose(matrix: SystemMatrix, gap_factor: float = GAP_FACTOR) -> SpectralDecomposition:
    p, N = matrix.params, matrix.n_agents
    lam, gam, kap, rho, phi = p.lam, p.gamma, p.kappa, p.rho, p.phi
    nu = eigenvalues(matrix)
    scale = float(np.max(np.abs(nu)))
    if np.min(np.diff(nu)) <= gap_factor * scale:
        raise AssumptionError(f"repeated eigenvalues of {matrix.kind.value}: {nu}")
    if np.min(np.abs(nu)) <= gap_factor * scale:
        raise AssumptionError(f"zero eigenvalue of {matrix.kind.value}: {nu}")
    D = _denominators(nu)

    if matrix.kind is MatrixKind.FBAR4:
        if np.min(np.abs(nu + rho)) <= gap_factor * scale:
            raise AssumptionError("eigenvalue equal to -rho; eigenvector formula undefined")
        U = np.vstack([
            -N * (nu - rho) / (kap * gam * nu),
            N * (nu - rho) / (kap * (nu + rho)),
            N * (nu - rho) / (kap * gam),
            np.ones(4),
        ])
        plus_all = np.prod(nu + rho)
        minus_except = _prod_except(nu - rho)
        U_inv = np.column_stack([
            -2 * rho**2 * phi * gam * kap * (nu + rho) / lam,
            -kap * nu * plus_all,
            2 * rho**2 * gam * kap * nu * (nu + rho),
            -N * nu * (nu + rho) * minus_except,
        ]) / (D[:, None] * 2 * N * rho**2)
    elif matrix.kind is MatrixKind.F3:
        U = np.vstack([
            -N * (nu - rho) / (kap * gam * nu),
            N * (nu - rho) / (kap * gam),
            np.ones(3),
        ])
        minus_except = _prod_except(nu - rho)
        U_inv = np.column_stack([
            np.full(3, -gam * kap * phi * rho / lam),
            gam * kap * rho * nu,
            N * nu * minus_except,
        ]) / (D[:, None] * N * rho)
    else:
        if np.min(np.abs(nu + rho)) <= gap_factor * scale:
            raise AssumptionError("eigenvalue equal to -rho; eigenvector formula undefined")
        U = np.vstack([-1.0 / nu, gam / (nu + rho), np.ones(3)])
        plus_all = np.prod(nu + rho)
        U_inv = np.column_stack([
            -gam * rho * phi * (nu + rho) / lam,
            -nu * plus_all,
            gam * rho * nu * (nu + rho),
        ]) / (D[:, None] * gam * rho)
    for arr in (nu, U, U_inv):
        arr.setflags(write=False)
    return SpectralDecomposition(kind=matrix.kind, eigenvalues=nu, U=U, U_inv=U_inv, matrix=matrix)


def matexp(decomp: SpectralDecomposition, t) -> np.ndarray:
    """``U diag(exp(nu t)) U^{-1}``; ``t`` may be an array, giving shape ``t.shape + (n, n)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("matrix exponential requested at negative time")
    e = np.exp(np.multiply.outer(t, decomp.eigenvalues))
    return np.einsum("ij,...j,jk->...ik", decomp.U, e, decomp.U_inv)


def matexp_oracle(matrix, t: float) -> np.ndarray:
    """Scaling and squaring with a truncated Taylor core.

    Independent of the eigen-decomposition; for the moderate norms met here the
    result is accurate to about 1e-13 relative to its largest entry.
    """
    A = np.asarray(getattr(matrix, "entries", matrix), dtype=float) * float(t)
    if t < 0:
        raise ValueError("matrix exponential requested at negative time")
    n = A.shape[0]
    norm = np.max(np.sum(np.abs(A), axis=1)) if A.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    A = A / 2.0**squarings
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 30):
        term = term @ A / k
        result = result + term
        if np.max(np.abs(term)) <= 1e-18 * np.max(np.abs(result)):
            break
    for _ in range(squarings):
        result = result @ result
    return result


# ---------------------------------------------------------------------------
# coefficient functions as exponential sums


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Components ``f_m(tau) = sum_j weights[m, j] * exp(exponents[j] * tau)``.

    ``labels`` name the rows, e.g. ``("G1", "G2", "G3", "G4", "H1", ...)``.
    """

    kind: CoefficientKind
    exponents: np.ndarray
    weights: np.ndarray
    labels: tuple
    params: ModelParams
    n_agents: int = 0
    decomposition: SpectralDecomposition | None = None

    def row(self, label: str) -> np.ndarray:
        return self.weights[self.labels.index(label)]

    def __call__(self, tau) -> np.ndarray:
        """Evaluate every component; result has shape ``(n_components,) + tau.shape``."""
        tau = np.asarray(tau, dtype=float)
        e = np.exp(np.multiply.outer(tau, self.exponents))
        return np.moveaxis(e @ self.weights.T, -1, 0)

    def component(self, label: str, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        return np.exp(np.multiply.outer(tau, self.exponents)) @ self.row(label)

    def kernel(self, label: str) -> tuple[np.ndarray, np.ndarray]:
        """``(weights, exponents)`` of one component, for the signal offset integrals."""
        return self.row(label).copy(), self.exponents.copy()


def _fbar_coefficients(d: SpectralDecomposition) -> np.ndarray:
    p, N = d.matrix.params, d.matrix.n_agents
    lam, gam, kap, rho, vr, phi = p.lam, p.gamma, p.kappa, p.rho, p.varrho, p.phi
    nu = d.eigenvalues
    D = _denominators(nu)
    W = 2 * vr * (nu + rho) + gam * kap * nu + 2 * lam * nu * (nu + rho)
    plus_all = np.prod(nu + rho)
    minus_all = np.prod(nu - rho)
    plus_except = _prod_except(nu + rho)
    minus_except = _prod_except(nu - rho)
    return np.vstack([
        phi / (2 * lam**2) * (nu - rho) * W / (nu * D),
        1.0 / (4 * gam * lam * rho**2) * W * (nu - rho) * plus_except / D,
        -1.0 / (2 * lam) * (nu - rho) * W / D,
        N * minus_all / (4 * gam * kap * lam * rho**2) * W / D,
        -gam * kap * phi / (N * lam) * (nu + rho) / D,
        -kap * plus_all / (2 * N * rho**2) * nu / D,
        gam * kap / N * nu * (nu + rho) / D,
        -1.0 / (2 * rho**2) * nu * (nu + rho) * minus_except / D,
    ])


def _f_coefficients(d: SpectralDecomposition) -> np.ndarray:
    p, N = d.matrix.params, d.matrix.n_agents
    lam, gam, kap, rho, vr, phi = p.lam, p.gamma, p.kappa, p.rho, p.varrho, p.phi
    nu = d.eigenvalues
    D = _denominators(nu)
    V = vr + lam * nu
    minus_all = np.prod(nu - rho)
    minus_except = _prod_except(nu - rho)
    return np.vstack([
        phi / lam**2 * (nu - rho) * V / (nu * D),
        -1.0 / lam * (nu - rho) * V / D,
        -N * minus_all / (gam * kap * lam * rho) * V / D,
        np.full(3, -gam * kap * phi / (N * lam)) / D,
        gam * kap / N * nu / D,
        nu * minus_except / D,
    ])


def _ktilde_coefficients(d: SpectralDecomposition) -> np.ndarray:
    p = d.matrix.params
    lam, gam, kap, rho, vr, phi = p.lam, p.gamma, p.kappa, p.rho, p.varrho, p.phi
    nu = d.eigenvalues
    D = _denominators(nu)
    W = 2 * vr * (nu + rho) + kap * gam * nu + 2 * lam * nu * (nu + rho)
    plus_except = _prod_except(nu + rho)
    return np.vstack([
        phi / (2 * lam**2) * W / (nu * D),
        1.0 / (2 * gam * lam * rho) * W * plus_except / D,
        -1.0 / (2 * lam) * W / D,
    ])


def r_coefficients(params: ModelParams) -> CoefficientSet:
    """``R(t) = s cosh(s t) + (varrho/lambda) sinh(s t)`` with ``s = sqrt(phi/lambda)``, and ``R'``."""
    s = math.sqrt(params.phi / params.lam)
    c = params.varrho / params.lam
    exponents = np.array([s, -s])
    weights = np.array([
        [0.5 * (s + c), 0.5 * (s - c)],
        [0.5 * s * (s + c), -0.5 * s * (s - c)],
    ])
    return CoefficientSet(CoefficientKind.R, exponents, weights, ("R", "dR"), params)


_KIND_MATRIX = {
    CoefficientKind.GBAR_HBAR: (MatrixKind.FBAR4, _fbar_coefficients, ("G1", "G2", "G3", "G4", "H1", "H2", "H3", "H4")),
    CoefficientKind.GH: (MatrixKind.F3, _f_coefficients, ("G1", "G2", "G3", "H1", "H2", "H3")),
    CoefficientKind.KTILDE: (MatrixKind.BTILDE3, _ktilde_coefficients, ("K1", "K2", "K3")),
}


def coefficients(kind, params: ModelParams, n_agents: int = 1, decomposition: SpectralDecomposition | None = None) -> CoefficientSet:
    kind = CoefficientKind(kind)
    if kind is CoefficientKind.R:
        return r_coefficients(params)
    matrix_kind, builder, labels = _KIND_MATRIX[kind]
    if decomposition is None:
        decomposition = decompose(build_matrix(matrix_kind, params, n_agents))
    weights = builder(decomposition)
    weights.setflags(write=False)
    return CoefficientSet(kind, decomposition.eigenvalues, weights, labels, params,
                          decomposition.matrix.n_agents, decomposition)


def defining_rows(kind, params: ModelParams) -> np.ndarray:
    """Row vectors multiplying the matrix exponential in the definitions of the coefficient functions."""
    kind = CoefficientKind(kind)
    lam, kap, vr = params.lam, params.kappa, params.varrho
    if kind is CoefficientKind.GBAR_HBAR:
        return np.array([[vr / lam, -kap / (2 * lam), -1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    if kind is CoefficientKind.GH:
        return np.array([[vr / lam, -1.0, 0.0], [0.0, 0.0, 1.0]])
    if kind is CoefficientKind.KTILDE:
        return np.array([[vr / lam, -kap / (2 * lam), -1.0]])
    raise ValueError(f"no defining rows for {kind}")


# ---------------------------------------------------------------------------
# feedback scalars


def _guard(values: np.ndarray, floor: float, what: str) -> None:
    if np.any(~np.isfinite(values)) or np.min(np.abs(values)) < floor:
        raise AssumptionError(f"{what} vanishes (|.| < {floor:g})")


def feedback_scalars(coeffs: CoefficientSet, tau, floor: float = DENOMINATOR_FLOOR) -> tuple:
    """Feedback coefficients at time-to-go ``tau``.

    GbarHbar -> (v0, v1, v2, v3); GH -> (v0, v1, v2); Ktilde -> (w1, w2);
    R -> (R, R', R'/R).
    """
    vals = coeffs(tau)
    kind = coeffs.kind
    if kind is CoefficientKind.GBAR_HBAR:
        G1, G2, G3, G4, H1, H2, H3, H4 = vals
        _guard(G3, floor, "finite-game solvability: Gbar_3")
        _guard(H4, floor, "finite-game solvability: Hbar_4")
        _guard(G3 * H4 - G4 * H3, floor, "finite-game solvability: Gbar_3 Hbar_4 - Gbar_4 Hbar_3")
        v3 = G4 / G3
        v0 = 1.0 / (1.0 - v3 * H3 / H4)
        v1 = v3 * H1 / H4 - G1 / G3
        v2 = v3 * H2 / H4 - G2 / G3
        return v0, v1, v2, v3
    if kind is CoefficientKind.GH:
        G1, G2, G3, H1, H2, H3 = vals
        _guard(G2, floor, "individual solvability: G_2")
        _guard(H3, floor, "individual solvability: H_3")
        _guard(G2 * H3 - G3 * H2, floor, "individual solvability: G_2 H_3 - G_3 H_2")
        v2 = G3 / G2
        v0 = 1.0 / (1.0 - v2 * H2 / H3)
        v1 = v2 * H1 / H3 - G1 / G2
        return v0, v1, v2
    if kind is CoefficientKind.KTILDE:
        K1, K2, K3 = vals
        _guard(K3, floor, "mean-field condition: Ktilde_3")
        return -K1 / K3, -K2 / K3
    R, dR = vals
    _guard(R, floor, "R")
    return R, dR, dR / R


# ---------------------------------------------------------------------------
# assumption report


@dataclass(frozen=True)
class AssumptionReport:
    n_agents: int
    floor: float
    quartic_real_distinct: bool
    infima: dict
    passed: dict
    messages: tuple = ()

    @property
    def ok(self) -> bool:
        return self.quartic_real_distinct and all(self.passed.values())

    def rows(self) -> list[tuple[str, float, bool]]:
        return [(name, self.infima[name], self.passed[name]) for name in self.infima]


INFIMUM_NAMES = (
    "Gbar3*Hbar4-Gbar4*Hbar3", "Gbar3", "Hbar4",
    "G2*H3-G3*H2", "G2", "H3",
    "Ktilde3",
)


def assumption_times(grid: TimeGrid, refine: int = 10) -> np.ndarray:
    """Grid times plus a ``refine``-times finer sampling of the first and last tenth of the grid."""
    M, T = grid.n_steps, grid.horizon
    edge = max(1, M // 10)
    fine = np.linspace(0.0, edge * grid.dt, edge * refine + 1)
    return np.unique(np.concatenate([grid.times, fine, T - fine]).clip(0.0, T))


def check_assumptions(params: ModelParams, n_agents: int, grid: TimeGrid, floor: float = DENOMINATOR_FLOOR) -> AssumptionReport:
    tau = assumption_times(grid)
    infima = {}
    messages = []
    quartic_ok = True
    try:
        cb = coefficients(CoefficientKind.GBAR_HBAR, params, n_agents)
        G1, G2, G3, G4, H1, H2, H3, H4 = cb(tau)
        infima["Gbar3*Hbar4-Gbar4*Hbar3"] = float(np.min(np.abs(G3 * H4 - G4 * H3)))
        infima["Gbar3"] = float(np.min(np.abs(G3)))
        infima["Hbar4"] = float(np.min(np.abs(H4)))
    except AssumptionError as exc:
        quartic_ok = False
        messages.append(str(exc))
        for name in INFIMUM_NAMES[:3]:
            infima[name] = float("nan")
    try:
        c = coefficients(CoefficientKind.GH, params, n_agents)
        G1, G2, G3, H1, H2, H3 = c(tau)
        infima["G2*H3-G3*H2"] = float(np.min(np.abs(G2 * H3 - G3 * H2)))
        infima["G2"] = float(np.min(np.abs(G2)))
        infima["H3"] = float(np.min(np.abs(H3)))
    except AssumptionError as exc:
        messages.append(str(exc))
        for name in INFIMUM_NAMES[3:6]:
            infima[name] = float("nan")
    try:
        k = coefficients(CoefficientKind.KTILDE, params)
        infima["Ktilde3"] = float(np.min(np.abs(k(tau)[2])))
    except AssumptionError as exc:
        messages.append(str(exc))
        infima["Ktilde3"] = float("nan")
    passed = {name: bool(infima[name] > floor) for name in INFIMUM_NAMES}
    return AssumptionReport(n_agents, floor, quartic_ok, infima, passed, tuple(messages))
