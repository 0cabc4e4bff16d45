"""Constraint residuals, projection, and the synthetic steady-state benchmark.

The benchmark stands in for an external steady-state simulator: a mass-action
reaction network whose equilibrium densities are a smooth but stiff function
of three control inputs. Two affine invariants mirror the structure of
plasma chemistry datasets: charge balance (electron density equals ion
density) and a nuclei count proportional to pressure.

Species (indices): 0 e, 1 A, 2 A+, 3 A*, 4 A2. Reactions, for inputs
x = (p, I, R) sampled log-uniformly over roughly two decades each:

    R1 ionization      e + A  -> 2e + A+
    R2 excitation      e + A  -> e + A*
    R3 radiative decay A*     -> A
    R4 recombination   e + A+ -> A
    R5 association     A + A* -> A2
    R6 dissociation    A2     -> 2 A

Rate-constant maps carry the qualitative features that make real kinetic
datasets hard to regress: Arrhenius-style thresholds in the drive current
(ionization shuts off at low I), radiation trapping and saturation in
pressure, and a bounded oscillatory modulation in log-inputs standing in
for the resonance structure of tabulated cross sections. Every map is
smooth and strictly positive on the box; exact coefficients live in
_default_rate_constants and are an artifact choice fixed so the dataset is
a pure function of the seed.

Nuclei total: A + A+ + A* + 2 A2 = NUCLEI_PER_PRESSURE * p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset
from .errors import ConfigError, SampleRejectionError

_RANK_TOL = 1e-10


@dataclass
class AffineB:
    """Constraint right-hand side b(x) = const + lin @ x."""

    const: np.ndarray  # (m,)
    lin: np.ndarray    # (m, dim_x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.const + self.lin @ x
        return self.const + x @ self.lin.T


@dataclass
class ConstraintSet:
    """Affine residual rows A y - b(x), plus optional nonlinear residuals.

    Residuals are reported divided by per-constraint scales so different
    constraints are commensurate. The affine rows must be linearly
    independent; that is validated once here, not per call.
    """

    a_matrix: np.ndarray                       # (m, dim_y)
    b_of_x: Callable[[np.ndarray], np.ndarray]
    scale: np.ndarray | None = None            # (m,)
    nonlinear: list[Callable] = field(default_factory=list)
    nonlinear_scale: np.ndarray | None = None

    def __post_init__(self):
        self.a_matrix = np.asarray(self.a_matrix, dtype=np.float64)
        if self.a_matrix.ndim != 2:
            raise ConfigError("constraint matrix must be 2-D")
        m = self.a_matrix.shape[0]
        sv = np.linalg.svd(self.a_matrix, compute_uv=False)
        if m == 0 or sv[-1] <= _RANK_TOL * sv[0]:
            raise ConfigError("constraint rows must be linearly independent")
        if self.scale is None:
            self.scale = np.ones(m)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        if np.any(self.scale <= 0.0):
            raise ConfigError("constraint scales must be positive")
        if self.nonlinear_scale is None:
            self.nonlinear_scale = np.ones(len(self.nonlinear))
        self.nonlinear_scale = np.asarray(self.nonlinear_scale, dtype=np.float64)

    @property
    def m_affine(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def dim_y(self) -> int:
        return self.a_matrix.shape[1]

    def with_scale_from_data(self, y_train: np.ndarray) -> "ConstraintSet":
        """Rescale so residuals are commensurate with the data spread.

        Each affine row gets scale sqrt(sum_j A_ij^2 Var[y_j]) computed on
        the training outputs: the spread the combination A y would have
        under independent per-feature variation. (The naive standard
        deviation of A y itself is identically zero for any constraint the
        data satisfies with constant b, so it cannot serve as a scale.)
        """
        var = np.asarray(y_train, dtype=np.float64).var(axis=0)
        scale = np.sqrt((self.a_matrix**2) @ var)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return ConstraintSet(
            a_matrix=self.a_matrix.copy(),
            b_of_x=self.b_of_x,
            scale=scale,
            nonlinear=list(self.nonlinear),
            nonlinear_scale=self.nonlinear_scale.copy(),
        )


def residuals(cs: ConstraintSet, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized constraint residuals for one physical-space sample."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = (cs.a_matrix @ y - cs.b_of_x(x)) / cs.scale
    if cs.nonlinear:
        nl = np.array([f(x, y) for f in cs.nonlinear]) / cs.nonlinear_scale
        out = np.concatenate([out, nl])
    return out


def residuals_batch(cs: ConstraintSet, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Normalized residuals row-wise: (n, m + n_nonlinear)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    out = (y @ cs.a_matrix.T - cs.b_of_x(x)) / cs.scale
    if cs.nonlinear:
        nl = np.array(
            [[f(xi, yi) for f in cs.nonlinear] for xi, yi in zip(x, y)]
        ) / cs.nonlinear_scale
        out = np.concatenate([out, nl], axis=1)
    return out


def project(
    cs: ConstraintSet,
    x: np.ndarray,
    y_hat: np.ndarray,
    *,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """Euclidean projection of y_hat onto the constraint set at x.

    The affine part is closed form: y - A^T (A A^T)^-1 (A y - b). When
    nonlinear residuals are present, Gauss-Newton refinement follows until
    every raw residual is below tol.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y_hat, dtype=np.float64).copy()
    a = cs.a_matrix
    gram = a @ a.T
    y = y - a.T @ np.linalg.solve(gram, a @ y - cs.b_of_x(x))
    if not cs.nonlinear:
        return y

    def raw_residuals(yv):
        aff = a @ yv - cs.b_of_x(x)
        nl = np.array([f(x, yv) for f in cs.nonlinear])
        return np.concatenate([aff, nl])

    h = 1e-7
    for _ in range(max_iter):
        r = raw_residuals(y)
        if np.max(np.abs(r)) <= tol:
            return y
        jac = np.empty((r.size, y.size))
        jac[: cs.m_affine] = a
        for j in range(y.size):
            bump = np.zeros_like(y)
            bump[j] = h
            for i, f in enumerate(cs.nonlinear):
                jac[cs.m_affine + i, j] = (f(x, y + bump) - f(x, y - bump)) / (2 * h)
        step = jac.T @ np.linalg.solve(jac @ jac.T, r)
        y = y - step
    r = raw_residuals(y)
    if np.max(np.abs(r)) > tol:
        raise SampleRejectionError(
            f"projection did not reach tolerance {tol}: residual {np.max(np.abs(r)):.3e}"
        )
    return y


def project_batch(cs: ConstraintSet, x: np.ndarray, y_hat: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    y_hat = np.atleast_2d(y_hat)
    return np.stack([project(cs, xi, yi) for xi, yi in zip(x, y_hat)])


@dataclass
class ReactionNetwork:
    """Mass-action network dy/dt = S r(y; k(x)) with declared invariants."""

    species: list[str]
    stoichiometry: np.ndarray                  # (dim_y, n_reactions)
    reactant_orders: np.ndarray                # (n_reactions, dim_y) integer orders
    rate_constants_of_x: Callable[[np.ndarray], np.ndarray]
    conservation_matrix: np.ndarray            # (n_conserved, dim_y)
    initial_state_of_totals: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        self.stoichiometry = np.asarray(self.stoichiometry, dtype=np.float64)
        self.reactant_orders = np.asarray(self.reactant_orders, dtype=np.int64)
        self.conservation_matrix = np.asarray(self.conservation_matrix, dtype=np.float64)
        if self.conservation_matrix.size:
            drift = self.conservation_matrix @ self.stoichiometry
            if np.max(np.abs(drift)) > 1e-12:
                raise ConfigError("declared conservation vectors are not invariants")
        # index lists for the scalar hot loops
        self._reactant_idx = [
            tuple(
                i
                for i in range(self.dim_y)
                for _ in range(int(self.reactant_orders[j, i]))
            )
            for j in range(self.n_reactions)
        ]
        self._stoich_entries = [
            tuple(
                (i, float(self.stoichiometry[i, j]))
                for i in range(self.dim_y)
                if self.stoichiometry[i, j] != 0.0
            )
            for j in range(self.n_reactions)
        ]

    @property
    def dim_y(self) -> int:
        return self.stoichiometry.shape[0]

    @property
    def n_reactions(self) -> int:
        return self.stoichiometry.shape[1]

    @property
    def rate_laws(self) -> list[Callable]:
        """Per-reaction mass-action rate functions (y, k) -> scalar."""

        def make(j):
            idx = self._reactant_idx[j]

            def law(y, k):
                rate = k[j]
                for i in idx:
                    rate *= y[i]
                return rate

            return law

        return [make(j) for j in range(self.n_reactions)]

    def rates(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        out = np.array(k, dtype=np.float64)
        for j, idx in enumerate(self._reactant_idx):
            for i in idx:
                out[j] *= y[i]
        return out

    def rhs(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        return self.stoichiometry @ self.rates(y, k)

    def _rhs_list(self, y: list, k: list) -> list:
        out = [0.0] * self.dim_y
        for j, idx in enumerate(self._reactant_idx):
            rate = k[j]
            for i in idx:
                rate *= y[i]
            for s, c in self._stoich_entries[j]:
                out[s] += c * rate
        return out

    def jacobian(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        """d(S r)/dy from the mass-action structure."""
        d, r = self.dim_y, self.n_reactions
        drate = np.zeros((r, d))
        for j, idx in enumerate(self._reactant_idx):
            for pos in range(len(idx)):
                partial = k[j]
                for q, i in enumerate(idx):
                    if q != pos:
                        partial *= y[i]
                drate[j, idx[pos]] += partial
        return self.stoichiometry @ drate


@dataclass
class SteadyStateSolverConfig:
    march_dt_init: float = 0.01
    march_dt_max: float = 0.5
    march_grow: float = 1.25
    march_shrink: float = 0.5
    # dt is additionally capped at this margin over the local Jacobian
    # infinity-norm; RK4 near its stability edge can settle into spurious
    # cycles that never reach the fixed point.
    march_stability_margin: float = 1.0
    march_tol: float = 1e-6
    march_max_steps: int = 50000
    newton_tol: float = 1e-12
    newton_max_iter: int = 60


@dataclass
class SolveInfo:
    march_steps: int
    newton_iters: int
    final_residual: float
    max_conservation_drift: float


def _rk4_step(net: ReactionNetwork, y: list, k: list, dt: float, f0: list) -> list:
    half = 0.5 * dt
    y1 = [yi + half * fi for yi, fi in zip(y, f0)]
    f1 = net._rhs_list(y1, k)
    y2 = [yi + half * fi for yi, fi in zip(y, f1)]
    f2 = net._rhs_list(y2, k)
    y3 = [yi + dt * fi for yi, fi in zip(y, f2)]
    f3 = net._rhs_list(y3, k)
    sixth = dt / 6.0
    return [
        yi + sixth * (a + 2.0 * b + 2.0 * c + d)
        for yi, a, b, c, d in zip(y, f0, f1, f2, f3)
    ]


def _default_initial_state(net: ReactionNetwork, totals: np.ndarray) -> np.ndarray:
    """Positive state satisfying the conservation rows, generic fallback."""
    c = net.conservation_matrix
    guess = np.full(net.dim_y, float(np.max(np.abs(totals))) / net.dim_y + 1e-3)
    for _ in range(40):
        corr = c.T @ np.linalg.solve(c @ c.T, totals - c @ guess)
        cand = guess + corr
        if np.all(cand > 0.0):
            return cand
        guess = guess * 0.5
    raise SampleRejectionError("could not build a feasible positive initial state")


def solve_steady_state(
    net: ReactionNetwork,
    x: np.ndarray,
    conserved_totals_of_x: Callable[[np.ndarray], np.ndarray],
    config: SteadyStateSolverConfig = SteadyStateSolverConfig(),
    *,
    return_info: bool = False,
):
    """Steady state of dy/dt = S r(y) on the conservation slice set by x.

    Time-marches with RK4 and an adaptive step (explicit Runge-Kutta
    preserves the linear invariants exactly up to rounding), hands off to
    damped Gauss-Newton on the conservation chart, and verifies the final
    max-norm residual against newton_tol. Deterministic in x.
    """
    x = np.asarray(x, dtype=np.float64)
    k_arr = np.asarray(net.rate_constants_of_x(x), dtype=np.float64)
    if np.any(k_arr <= 0.0) or not np.all(np.isfinite(k_arr)):
        raise SampleRejectionError(f"non-positive rate constants at x={x.tolist()}")
    totals = np.asarray(conserved_totals_of_x(x), dtype=np.float64)
    if net.initial_state_of_totals is not None:
        y0 = np.asarray(net.initial_state_of_totals(totals), dtype=np.float64)
    else:
        y0 = _default_initial_state(net, totals)
    if np.any(y0 <= 0.0):
        raise SampleRejectionError("initial state must be strictly positive")

    k = [float(v) for v in k_arr]
    y = [float(v) for v in y0]
    f0 = net._rhs_list(y, k)
    res = max(abs(v) for v in f0)
    threshold = config.march_tol * max(1.0, res)
    steps = 0
    drift = 0.0
    c_mat = net.conservation_matrix
    k_np = np.asarray(k_arr)

    def dt_cap():
        jnorm = float(np.max(np.abs(net.jacobian(np.array(y), k_np)).sum(axis=1)))
        return min(config.march_dt_max, config.march_stability_margin / max(jnorm, 1e-12))

    cap = dt_cap()
    dt = min(config.march_dt_init, cap)
    while res > threshold:
        if steps >= config.march_max_steps:
            raise SampleRejectionError(
                f"march exceeded {config.march_max_steps} steps at x={x.tolist()}"
            )
        y_new = _rk4_step(net, y, k, dt, f0)
        if all(v > 0.0 for v in y_new) and all(math.isfinite(v) for v in y_new):
            f_new = net._rhs_list(y_new, k)
            res_new = max(abs(v) for v in f_new)
            if math.isfinite(res_new) and res_new <= 4.0 * res:
                y, f0, res = y_new, f_new, res_new
                steps += 1
                if steps % 16 == 0:
                    cap = dt_cap()
                    drift = max(
                        drift, float(np.max(np.abs(c_mat @ np.array(y) - totals)))
                    )
                dt = min(dt * config.march_grow, cap)
                continue
        dt *= config.march_shrink
        steps += 1
        if dt < 1e-14:
            raise SampleRejectionError(f"march step collapsed at x={x.tolist()}")

    y_arr = np.array(y, dtype=np.float64)
    drift = max(drift, float(np.max(np.abs(c_mat @ y_arr - totals))))

    # Gauss-Newton polish on the chart y = y_m + N u, N = null space of the
    # conservation rows; the full residual S r is rank-deficient but
    # consistent on the slice, so normal equations in u are well posed.
    _, _, vt = np.linalg.svd(c_mat)
    nullsp = vt[c_mat.shape[0] :].T  # (dim_y, n_free)
    newton_iters = 0
    f_val = net.rhs(y_arr, k_np)
    res_inf = float(np.max(np.abs(f_val)))
    for _ in range(config.newton_max_iter):
        if res_inf <= config.newton_tol:
            break
        jac_u = net.jacobian(y_arr, k_np) @ nullsp
        gram = jac_u.T @ jac_u
        rhs_vec = jac_u.T @ f_val
        try:
            du = -np.linalg.solve(gram, rhs_vec)
        except np.linalg.LinAlgError:
            du = -np.linalg.lstsq(jac_u, f_val, rcond=None)[0]
        alpha = 1.0
        improved = False
        for _ in range(40):
            y_try = y_arr + alpha * (nullsp @ du)
            if np.all(y_try > 0.0):
                f_try = net.rhs(y_try, k_np)
                res_try = float(np.max(np.abs(f_try)))
                if res_try < res_inf:
                    y_arr, f_val, res_inf = y_try, f_try, res_try
                    improved = True
                    break
            alpha *= 0.5
        newton_iters += 1
        if not improved:
            break
    if res_inf > config.newton_tol:
        raise SampleRejectionError(
            f"steady-state polish stalled at residual {res_inf:.3e} for x={x.tolist()}"
        )
    if np.any(y_arr <= 0.0):
        raise SampleRejectionError(f"non-positive steady state at x={x.tolist()}")
    if return_info:
        return y_arr, SolveInfo(
            march_steps=steps,
            newton_iters=newton_iters,
            final_residual=res_inf,
            max_conservation_drift=drift,
        )
    return y_arr


# --- the default five-species benchmark ------------------------------------

SPECIES = ["e", "A", "A+", "A*", "A2"]

# columns: R1 ionization, R2 excitation, R3 decay, R4 recombination,
# R5 association, R6 dissociation
_STOICH = np.array(
    [
        [1, 0, 0, -1, 0, 0],   # e
        [-1, -1, 1, 1, -1, 2], # A
        [1, 0, 0, -1, 0, 0],   # A+
        [0, 1, -1, 0, -1, 0],  # A*
        [0, 0, 0, 0, 1, -1],   # A2
    ],
    dtype=np.float64,
)

_ORDERS = np.array(
    [
        [1, 1, 0, 0, 0],  # R1: e + A
        [1, 1, 0, 0, 0],  # R2: e + A
        [0, 0, 0, 1, 0],  # R3: A*
        [1, 0, 1, 0, 0],  # R4: e + A+
        [0, 1, 0, 1, 0],  # R5: A + A*
        [0, 0, 0, 0, 1],  # R6: A2
    ],
    dtype=np.int64,
)

# charge balance e - A+ = 0; nuclei A + A+ + A* + 2 A2 = NUCLEI_PER_PRESSURE * p
_CONSERVATION = np.array(
    [
        [1.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, 1.0, 1.0, 1.0, 2.0],
    ]
)

NUCLEI_PER_PRESSURE = 1.0

# initial fractions of the nuclei total for the march start
_INIT_ION_FRACTION = 0.05
_INIT_EXCITED_FRACTION = 0.02
_INIT_DIMER_FRACTION = 0.01

# log-input modulation frequency and depth (resonance stand-in); depth
# stays well below 1 so every rate map is strictly positive
_MOD_FREQ = 5.0
_MOD_DEPTH = 0.35


def _default_rate_constants(x: np.ndarray) -> np.ndarray:
    p, cur, rad = float(x[0]), float(x[1]), float(x[2])
    lp, li, lr = math.log(p), math.log(cur), math.log(rad)
    f, a = _MOD_FREQ, _MOD_DEPTH
    return np.array(
        [
            # ionization: quadratic current drive, Arrhenius threshold
            0.9 * cur * cur / rad * math.exp(-0.6 / cur)
            * (1 + a * math.sin(f * 1.03 * lp + 1.0) * math.cos(f * 0.77 * li)),
            # excitation: softer threshold
            1.3 * cur / math.sqrt(rad) * math.exp(-0.25 / cur)
            * (1 + a * math.sin(f * 0.87 * lr) * math.sin(f * 0.63 * lp + 0.7)),
            # radiative decay with pressure trapping
            1.0 / (1.0 + 0.45 * p) * (1 + 0.66 * a * math.cos(f * 0.73 * lp)),
            # recombination, diffusion-like in the radius
            2.2 / rad * (1 + 0.66 * a * math.sin(f * 0.57 * li - 0.4)),
            # association grows with pressure
            0.45 * math.sqrt(p) * (1 + 0.83 * a * math.cos(f * 0.97 * li + 0.3)),
            # dissociation, saturating in pressure
            0.32 * p / (1.0 + 0.15 * p) * (1 + 0.66 * a * math.sin(f * 0.8 * lr)),
        ]
    )


def _default_initial(totals: np.ndarray) -> np.ndarray:
    nuclei = float(totals[1])
    ion = _INIT_ION_FRACTION * nuclei
    excited = _INIT_EXCITED_FRACTION * nuclei
    dimer = _INIT_DIMER_FRACTION * nuclei
    neutral = nuclei - ion - excited - 2.0 * dimer
    return np.array([ion, neutral, ion, excited, dimer])


@dataclass(frozen=True)
class SamplingBox:
    """Log-uniform input box; lo/hi are inclusive physical bounds."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        lo = np.log(np.asarray(self.lo))
        hi = np.log(np.asarray(self.hi))
        return np.exp(lo + (hi - lo) * rng.random(len(self.lo)))

    @property
    def dim(self) -> int:
        return len(self.lo)


DEFAULT_BOX = SamplingBox(lo=(0.2, 0.12, 0.25), hi=(20.0, 5.0, 4.0))


def default_conserved_totals(x: np.ndarray) -> np.ndarray:
    return np.array([0.0, NUCLEI_PER_PRESSURE * float(x[0])])


def default_benchmark() -> tuple[ReactionNetwork, ConstraintSet, SamplingBox]:
    """The fixed five-species system, its constraint rows, and input box."""
    net = ReactionNetwork(
        species=list(SPECIES),
        stoichiometry=_STOICH,
        reactant_orders=_ORDERS,
        rate_constants_of_x=_default_rate_constants,
        conservation_matrix=_CONSERVATION,
        initial_state_of_totals=_default_initial,
    )
    b = AffineB(
        const=np.zeros(2),
        lin=np.array([[0.0, 0.0, 0.0], [NUCLEI_PER_PRESSURE, 0.0, 0.0]]),
    )
    cs = ConstraintSet(a_matrix=_CONSERVATION.copy(), b_of_x=b)
    return net, cs, DEFAULT_BOX


def generate_benchmark_dataset(
    n_samples: int,
    seed: int,
    *,
    net: ReactionNetwork | None = None,
    box: SamplingBox | None = None,
    conserved_totals_of_x: Callable | None = None,
    solver: SteadyStateSolverConfig = SteadyStateSolverConfig(),
    max_reject_fraction: float = 0.01,
):
    """Draw inputs from the box and solve each to steady state.

    Rejected samples (solver non-convergence) are redrawn and counted;
    more than max_reject_fraction rejections aborts. Returns the dataset
    and a metadata dict describing how it was produced.
    """
    if net is None or box is None:
        d_net, _, d_box = default_benchmark()
        net = net or d_net
        box = box or d_box
    totals_fn = conserved_totals_of_x or default_conserved_totals
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    rejected = 0
    max_rejected = max(1, int(math.ceil(max_reject_fraction * n_samples)))
    while len(xs) < n_samples:
        x = box.draw(rng)
        try:
            y = solve_steady_state(net, x, totals_fn, solver)
        except SampleRejectionError:
            rejected += 1
            if rejected > max_rejected:
                raise SampleRejectionError(
                    f"{rejected} rejected samples exceeds the "
                    f"{max_reject_fraction:.1%} budget"
                )
            continue
        xs.append(x)
        ys.append(y)
    dataset = Dataset(np.array(xs), np.array(ys))
    meta = {
        "n_samples": n_samples,
        "seed": seed,
        "rejected": rejected,
        "box_lo": list(box.lo),
        "box_hi": list(box.hi),
        "species": list(net.species),
        "march_tol": solver.march_tol,
        "newton_tol": solver.newton_tol,
        "constraints": {
            "a_matrix": _CONSERVATION.tolist(),
            "b_const": [0.0, 0.0],
            "b_lin": [[0.0, 0.0, 0.0], [NUCLEI_PER_PRESSURE, 0.0, 0.0]],
        },
    }
    return dataset, meta


# --- constraint definition files -------------------------------------------


def parse_constraint_file(path: str | Path, dim_x: int, dim_y: int) -> ConstraintSet:
    """Read affine constraints from a plain-text definition file.

    One constraint per line:  a: c1 c2 ... cDy ; b: <const> [+ <coef>*x<j>]*
    Lines starting with # are comments.
    """
    a_rows, consts, lins = [], [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            a_part, b_part = line.split(";")
            coeffs = [float(v) for v in a_part.split(":", 1)[1].split()]
            if len(coeffs) != dim_y:
                raise ValueError(f"expected {dim_y} coefficients")
            const = 0.0
            lin = np.zeros(dim_x)
            for term in b_part.split(":", 1)[1].replace("-", "+-").split("+"):
                term = term.strip()
                if not term:
                    continue
                if "*" in term:
                    coef, var = term.split("*")
                    j = int(var.strip().lstrip("x")) - 1
                    if not 0 <= j < dim_x:
                        raise ValueError(f"no input column {var.strip()}")
                    lin[j] += float(coef)
                else:
                    const += float(term)
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad constraint line: {exc}") from exc
        a_rows.append(coeffs)
        consts.append(const)
        lins.append(lin)
    if not a_rows:
        raise ConfigError(f"no constraints found in {path}")
    return ConstraintSet(
        a_matrix=np.array(a_rows),
        b_of_x=AffineB(np.array(consts), np.stack(lins)),
    )
