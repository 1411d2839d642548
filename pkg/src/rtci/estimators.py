"""Locality-weighted least squares for lagged node time series.

Every variant is the same weighted regression with a different per-node
sample weight:

==================  =========================================
local, local_peer    ``gamma ** d(i, focal)``
individual(_peer)    indicator of the focal node
neighbors(_peer)     indicator of the focal node's neighbors
global(_peer)        one for every node
==================  =========================================
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from rtci.errors import DimensionError, SingularDesignError, UnderdeterminedError
from rtci.graph import DEFAULT_CUTOFF_EPS, Graph, LocalityWeights, locality_weights
from rtci.panel import LaggedDesign, Panel, build_design

CONDITION_LIMIT = 1e10


class Variant(str, enum.Enum):
    LOCAL_INDIVIDUAL = "local_individual"
    LOCAL_PEER = "local_peer"
    INDIVIDUAL = "individual"
    INDIVIDUAL_PEER = "individual_peer"
    GLOBAL = "global"
    GLOBAL_PEER = "global_peer"
    NEIGHBORS = "neighbors"
    NEIGHBORS_PEER = "neighbors_peer"

    @property
    def family(self) -> str:
        return self.value.split("_")[0]

    @property
    def peer(self) -> bool:
        return self.value.endswith("_peer")


@dataclass(frozen=True)
class ModelSpec:
    variant: Variant
    gamma: float | None = None
    w: int = 1
    focal: int | None = None
    with_intercept: bool = False
    include_focal: bool = False
    robust: bool = False
    cutoff_eps: float = DEFAULT_CUTOFF_EPS
    allow_gamma_above_one: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        fam = self.variant.family
        if fam == "local" and self.gamma is None:
            raise ValueError(f"{self.variant.value} requires gamma")
        if fam != "local" and self.gamma is not None:
            raise ValueError(f"{self.variant.value} does not take gamma")
        if fam != "global" and self.focal is None:
            raise ValueError(f"{self.variant.value} requires a focal node")
        if self.w < 1:
            raise ValueError("lag w must be >= 1")


@dataclass
class FitResult:
    beta: np.ndarray
    covariance: np.ndarray
    sigma2: float
    n_eff: float
    n_rows: int
    condition_warning: bool
    names: tuple
    meta: dict = field(default_factory=dict)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def coef(self, name: str) -> float:
        return float(self.beta[self.names.index(name)])

    @property
    def warnings(self) -> list[str]:
        return ["ill_conditioned"] if self.condition_warning else []

    def to_dict(self) -> dict:
        return {
            "variant": self.meta.get("variant"),
            "focal": self.meta.get("focal"),
            "gamma": self.meta.get("gamma"),
            "w": self.meta.get("w"),
            "names": list(self.names),
            "beta": self.beta.tolist(),
            "stderr": self.stderr.tolist(),
            "cov": self.covariance.tolist(),
            "n_eff": self.n_eff,
            "n_rows": self.n_rows,
            "sigma2": self.sigma2,
            "warnings": self.warnings,
        }


def _row_weights(design: LaggedDesign, node_weights) -> np.ndarray:
    if node_weights is None:
        return np.ones(design.n_rows)
    if isinstance(node_weights, LocalityWeights):
        node_weights = node_weights.weight
    node_weights = np.asarray(node_weights, dtype=np.float64)
    if design.n_rows and design.node.max() >= node_weights.shape[0]:
        raise DimensionError("node weight vector shorter than the node ids in the design")
    return node_weights[design.node]


def fit_wls(
    design: LaggedDesign,
    node_weights=None,
    cutoff_eps: float = DEFAULT_CUTOFF_EPS,
    robust: bool = False,
) -> FitResult:
    """Solve ``Z'WZ b = Z'Wy`` where row ``(i, t)`` carries node ``i``'s weight.

    Rows weighted below ``cutoff_eps`` are dropped. Columns are equilibrated
    before the normal matrix is formed, so explosive series do not overflow.
    The covariance is ``sigma2 * (Z'WZ)^-1`` with ``sigma2 = RSS_w / (n_eff - p)``,
    or the HC0 sandwich when ``robust`` is set.
    """
    wt = _row_weights(design, node_weights)
    keep = wt >= cutoff_eps
    z = design.z[keep]
    y = design.y[keep]
    wt = wt[keep]
    k, p = z.shape
    n_eff = math.fsum(wt.tolist())
    if k < p or n_eff <= p:
        raise UnderdeterminedError(
            f"{k} weighted rows (n_eff={n_eff:.6g}) for {p} coefficients"
        )

    col_scale = np.abs(z).max(axis=0)
    if np.any(col_scale == 0):
        bad = [design.names[j] for j in np.flatnonzero(col_scale == 0)]
        raise SingularDesignError(f"regressor column(s) identically zero: {bad}")
    y_scale = float(np.abs(y).max()) or 1.0
    zs = z / col_scale
    ys = y / y_scale

    sw = np.sqrt(wt)
    a = zs * sw[:, None]
    normal = a.T @ a
    rhs = a.T @ (ys * sw)
    evals, evecs = np.linalg.eigh(normal)
    top = evals[-1]
    if evals[0] <= top * p * np.finfo(float).eps:
        raise SingularDesignError(
            f"normal matrix is singular (eigenvalues {evals.tolist()})"
        )
    inv_s = (evecs / evals) @ evecs.T
    inv_s = (inv_s + inv_s.T) / 2
    beta_s = inv_s @ rhs
    resid = ys - zs @ beta_s
    rss_s = float(np.sum(wt * resid**2))
    s2_s = rss_s / (n_eff - p)

    ratio = y_scale / col_scale
    if robust:
        meat = (a * (sw * resid)[:, None] ** 2).T @ a
        cov_s = inv_s @ meat @ inv_s
        cov_s = (cov_s + cov_s.T) / 2
    else:
        cov_s = s2_s * inv_s
    return FitResult(
        beta=beta_s * ratio,
        covariance=cov_s * np.outer(ratio, ratio),
        sigma2=s2_s * y_scale * y_scale,
        n_eff=n_eff,
        n_rows=int(k),
        condition_warning=bool(top / evals[0] > CONDITION_LIMIT),
        names=design.names,
    )


def node_weights(g: Graph, spec: ModelSpec) -> np.ndarray:
    """Per-node sample weights implied by ``spec.variant``."""
    fam = spec.variant.family
    if fam == "global":
        return np.ones(g.n)
    if not 0 <= spec.focal < g.n:
        raise IndexError(f"focal node {spec.focal} out of range [0, {g.n})")
    if fam == "local":
        return locality_weights(
            g, spec.focal, spec.gamma, spec.cutoff_eps, spec.allow_gamma_above_one
        ).weight
    w = np.zeros(g.n)
    if fam == "individual":
        w[spec.focal] = 1.0
    else:
        w[g.neighbors(spec.focal)] = 1.0
        if spec.include_focal:
            w[spec.focal] = 1.0
    return w


def _meta(spec) -> dict:
    return {
        "variant": spec.variant.value,
        "focal": spec.focal,
        "gamma": spec.gamma,
        "w": spec.w,
    }


def fit(g: Graph, p: Panel, spec: ModelSpec) -> FitResult:
    weights = node_weights(g, spec)
    nodes = np.flatnonzero(weights >= spec.cutoff_eps)
    if nodes.size == 0:
        raise UnderdeterminedError("no node carries weight (isolated focal node?)")
    design = build_design(
        g, p, spec.w, with_peer=spec.variant.peer,
        with_intercept=spec.with_intercept, nodes=nodes,
    )
    res = fit_wls(design, weights, spec.cutoff_eps, spec.robust)
    res.meta = _meta(spec)
    return res


def sliding_beta_series(
    g: Graph,
    p: Panel,
    spec: ModelSpec,
    window_len: int,
    stride: int = 1,
    on_error: str = "raise",
) -> list[tuple[int, FitResult | None]]:
    """Fit ``spec`` on every window ``[t, t + window_len)`` for ``t = 0, stride, ...``.

    With ``on_error="skip"`` a failing window yields ``None`` instead of raising.
    """
    if window_len < spec.w + 1:
        raise ValueError(f"window_len={window_len} too short for lag {spec.w}")
    if window_len > p.t_max:
        raise ValueError(f"window_len={window_len} exceeds t_max={p.t_max}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    out = []
    for start in range(0, p.t_max - window_len + 1, stride):
        try:
            res = fit(g, p.columns(start, start + window_len), spec)
        except (SingularDesignError, UnderdeterminedError):
            if on_error == "raise":
                raise
            res = None
        out.append((start, res))
    return out


def beta_deltas(series) -> np.ndarray:
    """``|beta[k+1] - beta[k]|`` for consecutive windows (NaN where a fit failed)."""
    rows = []
    width = next((len(r.beta) for _, r in series if r is not None), 0)
    for _, r in series:
        rows.append(r.beta if r is not None else np.full(width, np.nan))
    betas = np.array(rows).reshape(len(rows), width)
    return np.abs(np.diff(betas, axis=0))


@dataclass(frozen=True)
class ItsSpec:
    """Interrupted time series around column ``t_int`` (0-based).

    Rows with response column ``t > t_int`` are treated. ``scope`` picks the
    node-weight policy exactly as the non-peer ``ModelSpec`` variants do.
    """

    t_int: int
    w: int = 1
    scope: str = "individual"
    focal: int | None = None
    gamma: float | None = None
    with_intercept: bool = False
    robust: bool = False
    cutoff_eps: float = DEFAULT_CUTOFF_EPS

    def model_spec(self) -> ModelSpec:
        variant = "local_individual" if self.scope == "local" else self.scope
        return ModelSpec(
            variant, gamma=self.gamma, w=self.w, focal=self.focal,
            with_intercept=self.with_intercept, robust=self.robust,
            cutoff_eps=self.cutoff_eps,
        )


ITS_NAMES = ("beta_I", "beta_C", "beta_C_prime")


def fit_its(g: Graph, p: Panel, spec: ItsSpec) -> FitResult:
    """Regress ``X[i,t]`` on ``[X[i,t-w], c_t X[i,t-w], c_t]`` with ``c_t = [t > t_int]``."""
    if not 1 <= spec.w <= spec.t_int < p.t_max - 1:
        raise ValueError(
            f"need 1 <= w <= t_int < t_max - 1, got w={spec.w}, t_int={spec.t_int}, t_max={p.t_max}"
        )
    mspec = spec.model_spec()
    if mspec.variant.peer:
        raise ValueError("ITS scope must be a non-peer variant")
    weights = node_weights(g, mspec)
    nodes = np.flatnonzero(weights >= spec.cutoff_eps)
    if nodes.size == 0:
        raise UnderdeterminedError("no node carries weight")
    base = build_design(g, p, spec.w, nodes=nodes)
    c = (base.time > spec.t_int).astype(np.float64)
    cols = [base.z[:, 0], c * base.z[:, 0], c]
    names = ITS_NAMES
    if spec.with_intercept:
        cols.append(np.ones_like(c))
        names = names + ("intercept",)
    n_pre = int(np.sum(c == 0))
    n_post = int(np.sum(c == 1))
    if n_pre < 2 or n_post < 2:
        raise UnderdeterminedError(f"degenerate segments: {n_pre} pre rows, {n_post} post rows")
    design = LaggedDesign(
        node=base.node, time=base.time, z=np.column_stack(cols), y=base.y,
        lag=spec.w, with_peer=False, with_intercept=spec.with_intercept, names=names,
    )
    res = fit_wls(design, weights, spec.cutoff_eps, spec.robust)
    res.meta = _meta(mspec) | {"t_int": spec.t_int, "scope": spec.scope}
    return res


@dataclass(frozen=True)
class ItsEffect:
    per_node: dict
    total: float


def its_effect(
    fit_result: FitResult,
    p: Panel,
    t_int: int,
    horizon: int,
    nodes=None,
    mode: str = "one_step",
) -> ItsEffect:
    """Cumulative treatment effect over columns ``t_int+1 .. t_int+horizon``.

    ``one_step`` sums ``beta_C * X[i,t-w] + beta_C'`` over the observed lags,
    i.e. fitted minus the fit with the indicator forced to zero.
    ``dynamic`` instead rolls both the treated and the untreated model
    forward from the pre-intervention history and sums the path difference.
    """
    if fit_result.names[:3] != ITS_NAMES:
        raise ValueError("fit_result was not produced by fit_its")
    if horizon < 1 or t_int + horizon > p.t_max - 1:
        raise ValueError(f"horizon {horizon} runs past t_max={p.t_max}")
    w = fit_result.meta.get("w", 1)
    b_i = fit_result.coef("beta_I")
    b_c = fit_result.coef("beta_C")
    b_cp = fit_result.coef("beta_C_prime")
    icpt = fit_result.coef("intercept") if "intercept" in fit_result.names else 0.0
    if nodes is None:
        focal = fit_result.meta.get("focal")
        nodes = range(p.n) if focal is None else [focal]
    post = range(t_int + 1, t_int + horizon + 1)
    per_node = {}
    for i in nodes:
        x = p.values[i]
        if mode == "one_step":
            eff = math.fsum(b_c * x[t - w] + b_cp for t in post)
        elif mode == "dynamic":
            treated = list(x[: t_int + 1])
            control = list(x[: t_int + 1])
            for t in post:
                treated.append((b_i + b_c) * treated[t - w] + b_cp + icpt)
                control.append(b_i * control[t - w] + icpt)
            eff = math.fsum(treated[t] - control[t] for t in post)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        per_node[int(i)] = eff
    return ItsEffect(per_node, math.fsum(per_node.values()))
