"""Direct penalized Fisher scoring for partially linear single-index
additive models.

One outer iteration updates every coefficient at once from a single
Cholesky factorization of the penalized information matrix, then rebuilds
the spline bases on knots spanning the freshly projected index values,
updates the smoothing parameters from recycled curvature, and re-estimates
the dispersion.  Stalled or degenerate trajectories are thrown away and
restarted from fresh random directions; the iteration with the smallest
relative change in the penalized log-likelihood is kept.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import KnotVector, center_and_drop, eval_basis, eval_deriv_basis, make_knots
from .family import (
    Family,
    penalized_loglik,
    update_phi,
    weights_and_variance,
    working_response,
)
from .index import expand_alpha, index_covariate, jacobian, term_model_matrix
from .numkernel import (
    CholFactor,
    FactorizationError,
    cholesky,
    inverse_factor,
    solve_two_triangular,
    weighted_crossprod,
)
from .penalty import BlockPenalty, assemble_penalty, difference_penalty, penalty_pseudo_inverse

__all__ = [
    "TermSpec",
    "ModelSpec",
    "FitConfig",
    "CoefficientLayout",
    "FitState",
    "FittedTerm",
    "FittedModel",
    "Prediction",
    "NonConvergenceError",
    "initialize",
    "psi_update",
    "lambda_update",
    "fit",
    "predict",
]

INTERCEPT_NAME = "(intercept)"


class NonConvergenceError(RuntimeError):
    """No iteration could be saved before the budget ran out."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


# ---------------------------------------------------------------------------
# model description


@dataclass(frozen=True)
class TermSpec:
    """One smooth term: a plain smooth of a single column, or a smooth of a
    linear index over several columns.  ``by`` fits one independent copy of
    the term per level of a grouping column, each active only on its rows.
    """

    columns: tuple[str, ...]
    q: int
    d: int = 4
    dif: int = 2
    by: str | None = None
    label: str | None = None

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        if not cols:
            raise ValueError("a smooth term needs at least one column")
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate columns in term {cols}")
        if self.d < 2:
            raise ValueError("spline order d must be at least 2")
        if self.q < self.d:
            raise ValueError(f"need q >= d, got q={self.q}, d={self.d}")
        if not 1 <= self.dif < self.q:
            raise ValueError(f"difference order must satisfy 1 <= dif < q, got {self.dif}")

    @property
    def s(self) -> int:
        """Free direction parameters: one fewer than the columns."""
        return len(self.columns) - 1

    @property
    def name(self) -> str:
        return self.label or "+".join(self.columns)


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    response: str
    linear: tuple[str, ...] = ()
    terms: tuple[TermSpec, ...] = ()
    intercept: bool = True
    offset: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(str(c) for c in self.linear))
        object.__setattr__(self, "terms", tuple(self.terms))
        if not isinstance(self.family, Family):
            raise TypeError("spec.family must be a Family instance")
        labels = [t.name for t in self.terms]
        if len(set(labels)) != len(labels):
            raise ValueError("smooth term labels must be unique")


@dataclass(frozen=True)
class FitConfig:
    """Tuning constants of the outer loop; defaults follow the reference
    algorithm and rarely need changing."""

    eps_knot: float = 0.001
    ridge: float = 1e-7
    tol_met: float = 1e-6
    max_model_iter: int = 80
    max_total_iter: int = 500
    met_explosion: float = 1e6
    alpha1_floor: float = 0.05
    init_alpha_max: float = 0.8
    init_alpha1_min: float = 0.2
    init_resample_limit: int = 100
    lambda_init: tuple[float, float] = (1.0, 1000.0)
    phi_init: tuple[float, float] = (1.0, 100.0)
    lambda_floor: float = 1e-10
    lambda_ceiling: float = 1e7
    seed: int | None = None

    def validate(self):
        if self.eps_knot <= 0:
            raise ValueError("eps_knot must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")
        if self.tol_met <= 0 or self.met_explosion <= self.tol_met:
            raise ValueError("need 0 < tol_met < met_explosion")
        if self.max_model_iter < 1 or self.max_total_iter < 1:
            raise ValueError("iteration budgets must be positive")
        if not 0 < self.lambda_init[0] <= self.lambda_init[1]:
            raise ValueError("lambda_init must be a positive nondecreasing pair")
        if not 0 < self.phi_init[0] <= self.phi_init[1]:
            raise ValueError("phi_init must be a positive nondecreasing pair")
        if not 0 < self.lambda_floor <= self.lambda_ceiling:
            raise ValueError("lambda bounds must be positive and ordered")
        if not 0 < self.init_alpha1_min < 1 or not 0 < self.init_alpha_max <= 1:
            raise ValueError("starting-direction bounds must lie in (0, 1]")


@dataclass(frozen=True)
class CoefficientLayout:
    """Positions of the stacked coefficients: the linear block first, then
    per term its q spline coefficients followed by its s free direction
    parameters."""

    p: int
    sizes: tuple[tuple[int, int], ...]  # (q_j, s_j) per term

    @cached_property
    def _starts(self) -> tuple[int, ...]:
        starts = [self.p]
        for q, s in self.sizes:
            starts.append(starts[-1] + q + s)
        return tuple(starts)

    @property
    def dim(self) -> int:
        return self._starts[-1]

    @property
    def n_terms(self) -> int:
        return len(self.sizes)

    @property
    def beta_slice(self) -> slice:
        return slice(0, self.p)

    def gamma_slice(self, j: int) -> slice:
        start = self._starts[j]
        return slice(start, start + self.sizes[j][0])

    def alpha_slice(self, j: int) -> slice:
        q, s = self.sizes[j]
        start = self._starts[j] + q
        return slice(start, start + s)

    def term_slice(self, j: int) -> slice:
        """Contiguous spline + direction block of term j."""
        return slice(self._starts[j], self._starts[j + 1])


# ---------------------------------------------------------------------------
# internal state


@dataclass
class ResolvedTerm:
    label: str
    columns: tuple[str, ...]
    z: np.ndarray
    mask: np.ndarray | None
    by: str | None
    level: str | None
    q: int
    d: int
    dif: int

    @property
    def s(self) -> int:
        return self.z.shape[1] - 1


@dataclass
class TermState:
    rt: ResolvedTerm
    alpha_tilde: np.ndarray
    gamma_tilde: np.ndarray
    knots: KnotVector
    col_means: np.ndarray
    deriv_col_means: np.ndarray
    u_active: np.ndarray
    ntil: np.ndarray
    ttil: np.ndarray
    f: np.ndarray
    fprime: np.ndarray


@dataclass
class FitState:
    spec: ModelSpec
    family: Family
    config: FitConfig
    rng: np.random.Generator
    y: np.ndarray
    x: np.ndarray
    offset: np.ndarray
    linear_names: tuple[str, ...]
    resolved: list[ResolvedTerm]
    penalties: tuple
    layout: CoefficientLayout
    beta0: np.ndarray
    beta: np.ndarray = field(default=None)
    terms: list[TermState] = field(default_factory=list)
    lambdas: np.ndarray = field(default=None)
    penalty: BlockPenalty = field(default=None)
    phi: float = 1.0
    psi: np.ndarray = field(default=None)
    m_matrix: np.ndarray = field(default=None)
    cp_m: np.ndarray = field(default=None)
    eta: np.ndarray = field(default=None)
    mu: np.ndarray = field(default=None)
    w: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    model_iter: int = 0
    total_iter: int = 0
    restarts: int = 0
    prev_lp: float | None = None
    clamp_events: int = 0
    fs_violations: int = 0

    @property
    def n(self) -> int:
        return self.y.size


# ---------------------------------------------------------------------------
# design construction


def _get_column(data, name: str) -> np.ndarray:
    try:
        col = data[name]
    except (KeyError, IndexError):
        raise ValueError(f"column {name!r} not found in the data") from None
    try:
        arr = np.asarray(col, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"column {name!r} is not numeric") from None
    return arr


def _raw_column(data, name: str) -> np.ndarray:
    try:
        return np.asarray(data[name])
    except (KeyError, IndexError):
        raise ValueError(f"column {name!r} not found in the data") from None


def _design(spec: ModelSpec, data, need_response: bool = True):
    first_col = None
    if need_response:
        first_col = spec.response
    elif spec.linear:
        first_col = spec.linear[0]
    elif spec.terms:
        first_col = spec.terms[0].columns[0]
    elif spec.offset:
        first_col = spec.offset
    if first_col is None:
        raise ValueError("cannot infer the number of rows from an empty spec")
    n = _get_column(data, first_col).size

    y = _get_column(data, spec.response) if need_response else None
    parts = []
    names = []
    if spec.intercept:
        parts.append(np.ones(n))
        names.append(INTERCEPT_NAME)
    for name in spec.linear:
        parts.append(_get_column(data, name))
        names.append(name)
    x = np.column_stack(parts) if parts else np.zeros((n, 0))
    offset = _get_column(data, spec.offset) if spec.offset else np.zeros(n)

    resolved = []
    for t in spec.terms:
        z = np.column_stack([_get_column(data, c) for c in t.columns])
        if t.by is None:
            resolved.append(
                ResolvedTerm(t.name, t.columns, z, None, None, None, t.q, t.d, t.dif)
            )
        else:
            by_vals = np.asarray([str(v) for v in _raw_column(data, t.by)])
            for level in sorted(set(by_vals)):
                mask = by_vals == level
                resolved.append(
                    ResolvedTerm(
                        f"{t.name}[{t.by}={level}]",
                        t.columns,
                        z,
                        mask,
                        t.by,
                        level,
                        t.q,
                        t.d,
                        t.dif,
                    )
                )

    bad_rows = ~np.isfinite(x).all(axis=1) | ~np.isfinite(offset)
    if y is not None:
        bad_rows |= ~np.isfinite(y)
    for rt in resolved:
        bad_rows |= ~np.isfinite(rt.z).all(axis=1)
    k = int(bad_rows.sum())
    if k:
        raise ValueError(
            f"data contain {k} row(s) with missing or non-finite values in "
            "used columns; drop them before fitting"
        )
    for rt in resolved:
        n_active = int(rt.mask.sum()) if rt.mask is not None else n
        if n_active < rt.q + rt.s + 2:
            raise ValueError(
                f"term {rt.label!r} has only {n_active} active rows for "
                f"{rt.q + rt.s} coefficients"
            )
    return y, x, offset, tuple(names), resolved


# ---------------------------------------------------------------------------
# term rebuilding


def _build_term(rt: ResolvedTerm, alpha_tilde, gamma_tilde, eps: float) -> TermState:
    alpha = expand_alpha(alpha_tilde)
    z_act = rt.z if rt.mask is None else rt.z[rt.mask]
    u_act = index_covariate(z_act, alpha)
    kv = make_knots(u_act, rt.q, rt.d, eps)
    raw = eval_basis(kv, u_act)
    raw_deriv = eval_deriv_basis(kv, u_act)
    nt_act, _, col_means, deriv_col_means = center_and_drop(raw, raw_deriv)
    f_act = nt_act @ gamma_tilde
    fp_act = raw_deriv[:, :-1] @ gamma_tilde  # last coefficient is pinned to zero
    n = rt.z.shape[0]
    jac = jacobian(alpha_tilde)
    if rt.mask is None:
        fp_full, ntil, f_full = fp_act, nt_act, f_act
    else:
        fp_full = np.zeros(n)
        fp_full[rt.mask] = fp_act
        ntil = np.zeros((n, nt_act.shape[1]))
        ntil[rt.mask] = nt_act
        f_full = np.zeros(n)
        f_full[rt.mask] = f_act
    ttil = term_model_matrix(fp_full, rt.z, jac, rt.mask)
    return TermState(
        rt=rt,
        alpha_tilde=np.asarray(alpha_tilde, dtype=float),
        gamma_tilde=np.asarray(gamma_tilde, dtype=float),
        knots=kv,
        col_means=col_means,
        deriv_col_means=deriv_col_means,
        u_active=u_act,
        ntil=ntil,
        ttil=ttil,
        f=f_full,
        fprime=fp_full,
    )


def _refresh(state: FitState):
    """Recompute predictor, means, weights, the model matrix, and its
    weighted cross product."""
    f_sum = np.zeros(state.n)
    for t in state.terms:
        f_sum = f_sum + t.f
    state.eta = state.offset + state.x @ state.beta + f_sum
    mu, n_clamped = state.family.clamp_mu(state.family.link.ginv(state.eta))
    state.mu = mu
    state.clamp_events += n_clamped
    state.w, state.v = weights_and_variance(mu, state.family)
    blocks = [state.x]
    for t in state.terms:
        blocks.append(t.ntil)
        blocks.append(t.ttil)
    state.m_matrix = np.hstack(blocks)
    state.cp_m = weighted_crossprod(state.m_matrix, state.w)
    pieces = [state.beta]
    for t in state.terms:
        pieces.append(t.gamma_tilde)
        pieces.append(t.alpha_tilde)
    state.psi = np.concatenate(pieces) if pieces else np.zeros(0)


def _apply_psi(state: FitState, psi_new: np.ndarray):
    layout = state.layout
    state.beta = np.array(psi_new[layout.beta_slice])
    new_terms = []
    for j, rt in enumerate(state.resolved):
        gamma = np.array(psi_new[layout.gamma_slice(j)])
        alpha_t = np.array(psi_new[layout.alpha_slice(j)])
        new_terms.append(_build_term(rt, alpha_t, gamma, state.config.eps_knot))
    state.terms = new_terms
    _refresh(state)


# ---------------------------------------------------------------------------
# initialization


def _glm_irls(x, y, family: Family, offset, max_iter: int = 100) -> np.ndarray:
    """Plain unpenalized Fisher scoring for a fixed design."""
    p = x.shape[1]
    if p == 0:
        return np.zeros(0)
    mu, _ = family.clamp_mu(family.initial_mu(y))
    eta = family.link.g(mu)
    beta = np.zeros(p)
    for _ in range(max_iter):
        w, v = weights_and_variance(mu, family)
        z = (eta - offset) + (y - mu) / np.sqrt(w * v)
        a = weighted_crossprod(x, w)
        rhs = x.T @ (w * z)
        try:
            beta_new = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            beta_new = np.linalg.lstsq(a, rhs, rcond=None)[0]
        if not np.all(np.isfinite(beta_new)):
            raise ValueError("unpenalized scoring diverged; check the design")
        eta = offset + x @ beta_new
        mu, _ = family.clamp_mu(family.link.ginv(eta))
        done = np.max(np.abs(beta_new - beta)) <= 1e-10 * (1.0 + np.max(np.abs(beta_new)))
        beta = beta_new
        if done:
            break
    return beta


def _draw_direction(rng, s: int, cfg: FitConfig) -> np.ndarray:
    if s == 0:
        return np.zeros(0)
    for _ in range(cfg.init_resample_limit):
        at = rng.uniform(-1.0, 1.0, size=s)
        a = expand_alpha(at)
        if a.max() < cfg.init_alpha_max and a[0] > cfg.init_alpha1_min:
            return at
    raise NonConvergenceError(
        "could not draw an admissible starting direction; the constraints "
        "leave almost no volume for this term"
    )


def _draw_state(state: FitState):
    """Fresh starting point: keep the linear anchor, redraw everything else."""
    cfg = state.config
    rng = state.rng
    state.beta = state.beta0.copy()
    off0 = state.offset + state.x @ state.beta
    terms = []
    for rt in state.resolved:
        at = _draw_direction(rng, rt.s, cfg)
        alpha = expand_alpha(at)
        if rt.mask is None:
            z_act, y_act, off_act = rt.z, state.y, off0
        else:
            z_act, y_act, off_act = rt.z[rt.mask], state.y[rt.mask], off0[rt.mask]
        u_act = index_covariate(z_act, alpha)
        kv = make_knots(u_act, rt.q, rt.d, cfg.eps_knot)
        raw = eval_basis(kv, u_act)
        raw_deriv = eval_deriv_basis(kv, u_act)
        nt, _, _, _ = center_and_drop(raw, raw_deriv)
        # unpenalized per-term scoring against the linear anchor as offset
        gamma = _glm_irls(nt, y_act, state.family, off_act)
        terms.append(_build_term(rt, at, gamma, cfg.eps_knot))
    state.terms = terms
    m = len(state.resolved)
    state.lambdas = rng.uniform(cfg.lambda_init[0], cfg.lambda_init[1], size=m)
    state.penalty = assemble_penalty(state.layout, state.penalties, state.lambdas)
    if state.family.phi_fixed:
        state.phi = 1.0
    else:
        state.phi = float(rng.uniform(cfg.phi_init[0], cfg.phi_init[1]))
    _refresh(state)
    state.model_iter = 0
    state.prev_lp = None


def _restart(state: FitState):
    """Redraw the starting point, retrying when a draw itself fails."""
    cfg = state.config
    for _ in range(cfg.init_resample_limit):
        try:
            _draw_state(state)
            return
        except (FactorizationError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            continue
    raise NonConvergenceError(
        f"could not draw a usable starting point in {cfg.init_resample_limit} attempts"
    )


def initialize(spec: ModelSpec, data, config: FitConfig | None = None, rng=None) -> FitState:
    """Starting state: linear-only Fisher scoring for beta, random
    admissible directions, an unpenalized spline start per term, and
    random smoothing and dispersion draws."""
    config = config or FitConfig()
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    y, x, offset, names, resolved = _design(spec, data)
    family = spec.family
    family.check_response(y)
    layout = CoefficientLayout(x.shape[1], tuple((rt.q, rt.s) for rt in resolved))
    if layout.dim >= y.size:
        raise ValueError(
            f"model has {layout.dim} coefficients but only {y.size} rows"
        )
    penalties = tuple(difference_penalty(rt.q, rt.dif) for rt in resolved)
    beta0 = _glm_irls(x, y, family, offset)
    state = FitState(
        spec=spec,
        family=family,
        config=config,
        rng=rng,
        y=y,
        x=x,
        offset=offset,
        linear_names=names,
        resolved=resolved,
        penalties=penalties,
        layout=layout,
        beta0=beta0,
    )
    _restart(state)
    return state


# ---------------------------------------------------------------------------
# one outer iteration


def psi_update(state: FitState):
    """Single penalized scoring step at the current state.

    Returns the updated coefficient vector, the Cholesky factor of the
    (ridged) penalized information matrix, and the working response.  The
    state itself is not modified.
    """
    cfg = state.config
    ytil = working_response(state.m_matrix @ state.psi, state.y, state.mu, state.w, state.v)
    a = state.cp_m + state.penalty.full() / state.phi
    if cfg.ridge:
        a = a + cfg.ridge * np.eye(state.layout.dim)
    factor = cholesky(a)
    rhs = state.m_matrix.T @ (state.w * ytil)
    psi_new = solve_two_triangular(factor, rhs)
    return psi_new, factor, ytil


def lambda_update(state: FitState, new_psi: np.ndarray, factor: CholFactor | None = None):
    """Smoothing-parameter step with the recycled factor.

    lambda_j <- lambda_j * tr(Q P_j) / (gamma_j' P~_j gamma_j) with
    Q = P^- - cp(B)/phi taken at the state the factor was computed from and
    gamma_j from ``new_psi``.  Returns the unclipped new lambdas and the
    numerator traces (nonpositive traces flag a failed update).
    """
    if factor is None:
        _, factor, _ = psi_update(state)
    b_inv = inverse_factor(factor)
    cp_b = b_inv.T @ b_inv
    return _lambda_from_cpb(state, new_psi, cp_b)


def _lambda_from_cpb(state: FitState, new_psi: np.ndarray, cp_b: np.ndarray):
    pen = state.penalty
    q_mat = penalty_pseudo_inverse(pen) - cp_b / state.phi
    new_lambdas = np.empty(pen.n_terms)
    numerators = np.empty(pen.n_terms)
    for j, (off, tp) in enumerate(zip(pen.offsets, pen.terms)):
        block = q_mat[off : off + tp.q, off : off + tp.q]
        num = float(np.sum(block * tp.pmat))  # tr(Q P_j), both symmetric
        den = state.penalty.term_quad(new_psi, j)
        numerators[j] = num
        new_lambdas[j] = num / max(den, 1e-300) * pen.lambdas[j]
    return new_lambdas, numerators


# ---------------------------------------------------------------------------
# saved iterations and the fitted model


@dataclass(frozen=True)
class FittedTerm:
    label: str
    columns: tuple[str, ...]
    by: str | None
    level: str | None
    q: int
    d: int
    dif: int
    knots: KnotVector
    col_means: np.ndarray
    deriv_col_means: np.ndarray
    alpha_tilde: np.ndarray
    gamma_tilde: np.ndarray
    u_active: np.ndarray
    ntil: np.ndarray
    ttil: np.ndarray
    f: np.ndarray
    mask: np.ndarray | None

    @property
    def s(self) -> int:
        return self.alpha_tilde.size

    @property
    def alpha(self) -> np.ndarray:
        return expand_alpha(self.alpha_tilde)


@dataclass
class FittedModel:
    spec: ModelSpec
    config: FitConfig
    family: Family
    layout: CoefficientLayout
    linear_names: tuple[str, ...]
    psi: np.ndarray
    beta: np.ndarray
    lambdas: np.ndarray
    phi: float
    terms: tuple[FittedTerm, ...]
    b_factor: np.ndarray
    inference_ridged: bool
    edf_by_coef: np.ndarray
    edf: float
    eta: np.ndarray
    mu: np.ndarray
    n: int
    converged: bool
    met: float
    penalized_loglik: float
    total_iter: int
    saved_iter: int
    restarts: int
    fs_violations: int
    clamp_events: int
    trace: list
    seconds: float

    @property
    def dim(self) -> int:
        return self.layout.dim

    def term_index(self, label_or_pos) -> int:
        if isinstance(label_or_pos, (int, np.integer)):
            j = int(label_or_pos)
            if not 0 <= j < len(self.terms):
                raise IndexError(f"term index {j} out of range")
            return j
        for j, t in enumerate(self.terms):
            if t.label == label_or_pos:
                return j
        raise KeyError(f"no smooth term labelled {label_or_pos!r}")


@dataclass(frozen=True)
class Prediction:
    eta: np.ndarray
    mu: np.ndarray
    terms: dict


def _snapshot(state: FitState, met: float, lp: float):
    """Freeze the current iterate with a ridge-free covariance factor.

    Without the ridge, the recycled-factor identity makes each direction
    block contribute exactly its parameter count to the degrees of
    freedom, so inference quantities use the clean factor whenever it is
    positive definite.
    """
    cp_m = weighted_crossprod(state.m_matrix, state.w)
    a = cp_m + state.penalty.full() / state.phi
    try:
        factor = cholesky(a)
        ridged = False
    except FactorizationError:
        factor = cholesky(a + state.config.ridge * np.eye(state.layout.dim))
        ridged = True
        warnings.warn(
            "covariance factor needed a ridge; standard errors are slightly "
            "conservative",
            stacklevel=2,
        )
    b_inv = inverse_factor(factor)
    cp_b = b_inv.T @ b_inv
    edf_by_coef = np.einsum("ij,ji->i", cp_b, cp_m)
    terms = tuple(
        FittedTerm(
            label=t.rt.label,
            columns=t.rt.columns,
            by=t.rt.by,
            level=t.rt.level,
            q=t.rt.q,
            d=t.rt.d,
            dif=t.rt.dif,
            knots=t.knots,
            col_means=t.col_means,
            deriv_col_means=t.deriv_col_means,
            alpha_tilde=t.alpha_tilde,
            gamma_tilde=t.gamma_tilde,
            u_active=t.u_active,
            ntil=t.ntil,
            ttil=t.ttil,
            f=t.f,
            mask=t.rt.mask,
        )
        for t in state.terms
    )
    return {
        "psi": state.psi.copy(),
        "beta": state.beta.copy(),
        "lambdas": state.lambdas.copy(),
        "phi": state.phi,
        "terms": terms,
        "b_factor": b_inv,
        "inference_ridged": ridged,
        "edf_by_coef": edf_by_coef,
        "edf": float(edf_by_coef.sum()),
        "eta": state.eta.copy(),
        "mu": state.mu.copy(),
        "met": met,
        "penalized_loglik": lp,
        "total_iter": state.total_iter,
    }


def fit(spec: ModelSpec, data, config: FitConfig | None = None, rng=None) -> FittedModel:
    """Fit the model, restarting from fresh directions when the trajectory
    degenerates, and return the iterate with the smallest relative change
    in penalized log-likelihood."""
    t0 = time.perf_counter()
    config = config or FitConfig()
    state = initialize(spec, data, config, rng)
    cfg = state.config
    best = None
    best_met = np.inf
    trace = []
    converged = False
    while state.total_iter < cfg.max_total_iter:
        state.total_iter += 1
        state.model_iter += 1
        try:
            psi_new, factor, _ = psi_update(state)
            b_inv = inverse_factor(factor)
            cp_b = b_inv.T @ b_inv
            lam_new, numerators = _lambda_from_cpb(state, psi_new, cp_b)
            _apply_psi(state, psi_new)
            # inverse of the pre-step information against the rebuilt
            # cross product; phi below then sees the rebuilt fit
            edf = float(np.sum(cp_b * state.cp_m))
            state.fs_violations += int(np.sum(numerators <= 0.0))
            lam_failed = bool(np.any(~np.isfinite(lam_new)) or np.any(lam_new <= 0.0))
            if not lam_failed:
                state.lambdas = np.clip(lam_new, cfg.lambda_floor, cfg.lambda_ceiling)
                state.penalty = state.penalty.with_lambdas(state.lambdas)
            state.phi = update_phi(state.y, state.mu, state.v, state.n, edf, state.family)
        except (FactorizationError, ValueError, FloatingPointError, np.linalg.LinAlgError):
            state.restarts += 1
            _restart(state)
            continue
        leading = [expand_alpha(t.alpha_tilde)[0] for t in state.terms if t.rt.s >= 1]
        degenerate = bool(leading) and max(leading) < cfg.alpha1_floor
        if lam_failed or degenerate or state.model_iter >= cfg.max_model_iter:
            state.restarts += 1
            _restart(state)
            continue
        lp = penalized_loglik(
            state.y, state.mu, state.phi, state.psi, state.penalty, state.family
        )
        prev = state.prev_lp
        state.prev_lp = lp
        if prev is None:
            # nothing to compare against right after a (re)start
            met = np.inf
            exploded = not np.isfinite(lp)
        else:
            met = abs(lp - prev) / (abs(prev) + 1e-4)
            exploded = not np.isfinite(lp) or met > cfg.met_explosion
        trace.append((state.total_iter, lp, met))
        if exploded:
            state.restarts += 1
            _restart(state)
            continue
        if met < best_met:
            best_met = met
            best = _snapshot(state, met, lp)
        if met < cfg.tol_met:
            converged = True
            break
    if best is None:
        raise NonConvergenceError(
            f"no iteration could be saved within {cfg.max_total_iter} total "
            "iterations; the model may be unidentifiable for these data",
            trace,
        )
    return FittedModel(
        spec=spec,
        config=cfg,
        family=state.family,
        layout=state.layout,
        linear_names=state.linear_names,
        psi=best["psi"],
        beta=best["beta"],
        lambdas=best["lambdas"],
        phi=best["phi"],
        terms=best["terms"],
        b_factor=best["b_factor"],
        inference_ridged=best["inference_ridged"],
        edf_by_coef=best["edf_by_coef"],
        edf=best["edf"],
        eta=best["eta"],
        mu=best["mu"],
        n=state.n,
        converged=converged,
        met=best["met"],
        penalized_loglik=best["penalized_loglik"],
        total_iter=state.total_iter,
        saved_iter=best["total_iter"],
        restarts=state.restarts,
        fs_violations=state.fs_violations,
        clamp_events=state.clamp_events,
        trace=trace,
        seconds=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# prediction


def predict(model: FittedModel, data) -> Prediction:
    """Evaluate the fitted model on new rows.

    Smooths are replayed on their stored knots and column means; index
    values outside the fitted span are clamped to it with a warning.  Rows
    outside every group of a grouped term contribute zero for that term.
    """
    spec = model.spec
    _, x, offset, _, _ = _design(
        ModelSpec(
            family=spec.family,
            response=spec.response,
            linear=spec.linear,
            terms=(),
            intercept=spec.intercept,
            offset=spec.offset,
        ),
        data,
        need_response=False,
    )
    n = x.shape[0]
    f_sum = np.zeros(n)
    per_term = {}
    seen_group_rows = {}
    for ft in model.terms:
        z = np.column_stack([_get_column(data, c) for c in ft.columns])
        if ft.by is None:
            mask = None
            z_act = z
        else:
            by_vals = np.asarray([str(v) for v in _raw_column(data, ft.by)])
            mask = by_vals == ft.level
            covered = seen_group_rows.setdefault(ft.by, np.zeros(n, dtype=bool))
            covered |= mask
            z_act = z[mask]
        f_full = np.zeros(n)
        if mask is None or mask.any():
            u = index_covariate(z_act, ft.alpha)
            raw = eval_basis(ft.knots, u, clamp=True)
            f_act = (raw[:, :-1] - ft.col_means[:-1]) @ ft.gamma_tilde
            if mask is None:
                f_full = f_act
            else:
                f_full[mask] = f_act
        per_term[ft.label] = f_full
        f_sum = f_sum + f_full
    for by, covered in seen_group_rows.items():
        if not covered.all():
            warnings.warn(
                f"{int((~covered).sum())} row(s) have a level of {by!r} not "
                "seen during fitting; their grouped terms contribute zero",
                stacklevel=2,
            )
    eta = offset + x @ model.beta + f_sum
    mu = model.family.link.ginv(eta)
    return Prediction(eta=eta, mu=mu, terms=per_term)
