"""Random graphs, network-correlated AR coefficients, panel simulation and the
Monte Carlo MSE harness."""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from rtci._backend import kernels
from rtci.errors import EstimationError
from rtci.estimators import ModelSpec, fit
from rtci.graph import Graph, relational_mean
from rtci.panel import Panel

PSD_RIDGE = 1e-6
GRAPH_MODELS = ("erdos_renyi", "watts_strogatz", "barabasi_albert")


def gen_erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    mask = rng.random(iu.shape[0]) < p
    return Graph.from_edges(n, np.column_stack([iu[mask], ju[mask]]))


def gen_watts_strogatz(
    n: int, k_each_side: int, p_rewire: float, rng: np.random.Generator,
    return_rewired: bool = False,
):
    """Ring lattice with ``k_each_side`` neighbors per side, then each lattice
    edge ``(u, u+j)`` has its far endpoint redrawn with probability ``p_rewire``.

    The new endpoint avoids self-loops and existing edges, so the edge count
    stays ``n * k_each_side``.
    """
    if not 1 <= k_each_side < n / 2:
        raise ValueError(f"need 1 <= k_each_side < n/2, got {k_each_side} for n={n}")
    if not 0.0 <= p_rewire <= 1.0:
        raise ValueError("p_rewire must lie in [0, 1]")
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k_each_side + 1):
            v = (u + j) % n
            adj[u].add(v)
            adj[v].add(u)
    rewired = 0
    for j in range(1, k_each_side + 1):
        draws = rng.random(n)
        for u in range(n):
            if draws[u] >= p_rewire:
                continue
            v = (u + j) % n
            if v not in adj[u] or len(adj[u]) >= n - 1:
                continue
            while True:
                x = int(rng.integers(n))
                if x != u and x not in adj[u]:
                    break
            adj[u].discard(v)
            adj[v].discard(u)
            adj[u].add(x)
            adj[x].add(u)
            rewired += 1
    edges = [(u, v) for u in range(n) for v in adj[u] if u < v]
    g = Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
    return (g, rewired) if return_rewired else g


def gen_barabasi_albert(n: int, power: float, m_per_node: int, rng: np.random.Generator) -> Graph:
    """Seed clique on ``m_per_node + 1`` nodes, then each new node links to
    ``m_per_node`` distinct existing nodes with probability ``∝ degree**power``."""
    if m_per_node < 1:
        raise ValueError("m_per_node must be >= 1")
    if power <= 0:
        raise ValueError("power must be > 0")
    if n < m_per_node + 1:
        raise ValueError(f"n={n} too small for a seed clique of {m_per_node + 1} nodes")
    uniforms = rng.random((n - m_per_node - 1) * m_per_node)
    edges = kernels.ba_attach(int(n), int(m_per_node), float(power), uniforms)
    return Graph.from_edges(n, edges)


def transition_covariance(g: Graph, ridge: float = PSD_RIDGE) -> np.ndarray:
    """Symmetrized two-step random-walk matrix, shifted to be positive definite."""
    if np.any(g.degree == 0):
        raise ValueError("graph has isolated nodes; two-step transitions are undefined")
    walk = g.to_dense() / g.degree[:, None]
    two = walk @ walk
    sym = (two + two.T) / 2
    lam_min = float(np.linalg.eigvalsh(sym)[0])
    if lam_min < ridge:
        sym[np.diag_indices_from(sym)] += ridge - lam_min
    return sym


def draw_node_betas(
    g: Graph, rng: np.random.Generator, mean: float = 1.0, ridge: float = PSD_RIDGE,
) -> np.ndarray:
    cov = transition_covariance(g, ridge)
    chol = np.linalg.cholesky(cov)
    return mean + chol @ rng.standard_normal(g.n)


def simulate_panel(
    g: Graph,
    betas,
    scenario: str,
    t_max: int,
    noise_sd: float,
    rng: np.random.Generator,
    x0=None,
) -> Panel:
    """AR(1) panel. ``individual``: ``x_t = b * x_{t-1} + e``; ``peer``:
    ``x_t = bI * x_{t-1} + bP * mean_nbrs(x_{t-1}) + e``, with ``e ~ N(0, noise_sd^2)``.

    ``betas`` is a length-n vector, or an ``(bI, bP)`` pair for ``peer``.
    The first column is ``x0`` or a noise draw.
    """
    n = g.n
    if scenario == "individual":
        b = np.asarray(betas, dtype=np.float64).reshape(n)
    elif scenario == "peer":
        b_i, b_p = (np.asarray(v, dtype=np.float64).reshape(n) for v in betas)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    x = np.empty((n, t_max))
    x[:, 0] = rng.normal(0.0, 1.0, n) * noise_sd if x0 is None else x0
    eps = rng.standard_normal((n, t_max - 1)) * noise_sd
    for t in range(1, t_max):
        prev = x[:, t - 1]
        if scenario == "individual":
            x[:, t] = b * prev + eps[:, t - 1]
        else:
            peer = relational_mean(g, prev[:, None])[:, 0]
            x[:, t] = b_i * prev + b_p * peer + eps[:, t - 1]
    return Panel(x)


@dataclass(frozen=True)
class SynthConfig:
    graph_model: str = "erdos_renyi"
    graph_params: dict = field(default_factory=lambda: {"p": 0.2})
    n: int = 100
    scenario: str = "individual"
    true_beta_mean: float = 1.0
    noise_sd: float = 1.0
    seed: int = 0
    peer_beta_const: float | None = None
    fixed_graph: bool = False
    max_graph_attempts: int = 100

    def __post_init__(self):
        if self.graph_model not in GRAPH_MODELS:
            raise ValueError(f"graph_model must be one of {GRAPH_MODELS}")
        if self.n < 3:
            raise ValueError("n must be >= 3")
        if self.scenario not in ("individual", "peer"):
            raise ValueError("scenario must be 'individual' or 'peer'")
        gp = self.graph_params
        if self.graph_model == "erdos_renyi" and not 0 <= gp.get("p", -1) <= 1:
            raise ValueError("erdos_renyi needs p in [0, 1]")
        if self.graph_model == "watts_strogatz" and not 0 <= gp.get("p_rewire", -1) <= 1:
            raise ValueError("watts_strogatz needs p_rewire in [0, 1]")
        if self.graph_model == "barabasi_albert" and gp.get("m", 2) < 1:
            raise ValueError("barabasi_albert needs m >= 1")

    def params_label(self) -> str:
        return ";".join(f"{k}={v}" for k, v in sorted(self.graph_params.items()))

    def make_graph(self, rng: np.random.Generator) -> Graph:
        gp = self.graph_params
        for _ in range(self.max_graph_attempts):
            if self.graph_model == "erdos_renyi":
                g = gen_erdos_renyi(self.n, gp["p"], rng)
            elif self.graph_model == "watts_strogatz":
                g = gen_watts_strogatz(self.n, gp.get("k", 5), gp["p_rewire"], rng)
            else:
                g = gen_barabasi_albert(self.n, gp.get("power", 1.0), gp.get("m", 2), rng)
            if g.degree.min() > 0:
                return g
        raise RuntimeError(
            f"no graph without isolated nodes after {self.max_graph_attempts} attempts"
        )


def estimator_label(spec: ModelSpec) -> str:
    if spec.gamma is None:
        return spec.variant.value
    return f"{spec.variant.value}(gamma={spec.gamma:g})"


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def _fixed_graph(config: SynthConfig) -> Graph:
    return config.make_graph(np.random.default_rng(np.random.SeedSequence([int(config.seed), 2**32])))


def run_trial(config: SynthConfig, estimators, t_grid, index: int, graph: Graph | None = None):
    """One Monte Carlo replicate.

    Returns ``err[t, e, c]``: squared error of coefficient ``c`` for estimator
    ``e`` on the first ``t_grid[t]`` columns (NaN when the fit failed).
    """
    rng = trial_rng(config.seed, index)
    g = graph if graph is not None else config.make_graph(rng)
    t_big = max(t_grid)
    if config.scenario == "individual":
        truth_b = draw_node_betas(g, rng, config.true_beta_mean)
        betas = truth_b
    else:
        b_i = draw_node_betas(g, rng, config.true_beta_mean)
        if config.peer_beta_const is None:
            b_p = draw_node_betas(g, rng, config.true_beta_mean)
        else:
            b_p = np.full(g.n, float(config.peer_beta_const))
        betas = (b_i, b_p)
    panel = simulate_panel(g, betas, config.scenario, t_big, config.noise_sd, rng)
    focal = int(rng.integers(g.n))
    if config.scenario == "individual":
        truth = np.array([betas[focal]])
    else:
        truth = np.array([betas[0][focal], betas[1][focal]])
    err = np.full((len(t_grid), len(estimators), truth.size), np.nan)
    for ti, t_max in enumerate(t_grid):
        sub = panel if t_max == t_big else panel.columns(0, t_max)
        for ei, spec in enumerate(estimators):
            if spec.variant.family != "global":
                spec = dataclasses.replace(spec, focal=focal)
            try:
                res = fit(g, sub, spec)
            except (EstimationError, ValueError, np.linalg.LinAlgError):
                continue
            est = res.beta[: truth.size]
            if not np.all(np.isfinite(est)):
                continue
            err[ti, ei] = (est - truth) ** 2
    return err


def _run_chunk(args):
    config, estimators, t_grid, indices, graph = args
    return [run_trial(config, estimators, t_grid, i, graph) for i in indices]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("RTCI_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class TrialRow:
    graph_model: str
    params: str
    scenario: str
    t_max: int
    estimator: str
    mse: float
    mc_stderr: float
    rmse: float
    trials_ok: int
    trials_failed: int
    mse_beta_I: float | None = None
    mse_beta_P: float | None = None


CSV_FIELDS = [f.name for f in dataclasses.fields(TrialRow)]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class TrialReport:
    rows: list
    trials: int

    def get(self, estimator: str, t_max: int) -> TrialRow:
        for r in self.rows:
            if r.estimator == estimator and r.t_max == t_max:
                return r
        raise KeyError((estimator, t_max))

    def to_csv(self, stream) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])

    @classmethod
    def from_csv(cls, stream) -> "TrialReport":
        reader = csv.DictReader(stream)
        rows = []
        for rec in reader:
            rows.append(TrialRow(
                graph_model=rec["graph_model"], params=rec["params"],
                scenario=rec["scenario"], t_max=int(rec["t_max"]),
                estimator=rec["estimator"], mse=float(rec["mse"]),
                mc_stderr=float(rec["mc_stderr"]), rmse=float(rec["rmse"]),
                trials_ok=int(rec["trials_ok"]), trials_failed=int(rec["trials_failed"]),
                mse_beta_I=float(rec["mse_beta_I"]) if rec["mse_beta_I"] else None,
                mse_beta_P=float(rec["mse_beta_P"]) if rec["mse_beta_P"] else None,
            ))
        trials = rows[0].trials_ok + rows[0].trials_failed if rows else 0
        return cls(rows, trials)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    k = values.size
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(values.tolist()) / k
    if k < 2:
        return mean, math.nan
    var = math.fsum(((values - mean) ** 2).tolist()) / (k - 1)
    return mean, math.sqrt(var / k)


def run_trials(
    config: SynthConfig,
    estimators,
    t_grid,
    trials: int,
    workers: int | None = None,
) -> TrialReport:
    """Mean squared coefficient error per (estimator, series length).

    Trial ``k`` draws everything from ``SeedSequence([seed, k])``, so results
    do not depend on ``workers`` or scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    t_grid = [int(t) for t in t_grid]
    estimators = list(estimators)
    width = 1 if config.scenario == "individual" else 2
    for spec in estimators:
        if spec.variant.peer != (config.scenario == "peer"):
            raise ValueError(f"{spec.variant.value} does not match scenario {config.scenario}")
    graph = _fixed_graph(config) if config.fixed_graph else None
    workers = default_workers() if workers is None else workers
    indices = list(range(trials))
    if workers <= 1:
        errs = _run_chunk((config, estimators, t_grid, indices, graph))
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [(config, estimators, t_grid, c, graph) for c in chunks]))
        errs = [None] * trials
        for c, part in zip(chunks, parts):
            for i, e in zip(c, part):
                errs[i] = e
    err = np.stack(errs)  # (trials, T, E, C)
    rows = []
    for ti, t_max in enumerate(t_grid):
        for ei, spec in enumerate(estimators):
            block = err[:, ti, ei, :]
            ok = ~np.isnan(block).any(axis=1)
            total = block[ok].sum(axis=1)
            mse, se = _mean_se(total)
            extra = {}
            if width == 2:
                extra["mse_beta_I"] = _mean_se(block[ok, 0])[0]
                extra["mse_beta_P"] = _mean_se(block[ok, 1])[0]
            rows.append(TrialRow(
                graph_model=config.graph_model, params=config.params_label(),
                scenario=config.scenario, t_max=t_max, estimator=estimator_label(spec),
                mse=mse, mc_stderr=se, rmse=math.sqrt(mse) if mse == mse else math.nan,
                trials_ok=int(ok.sum()), trials_failed=int((~ok).sum()), **extra,
            ))
    return TrialReport(rows, trials)
