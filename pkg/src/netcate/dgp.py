"""Synthetic node-level data with network confounding.

The generating process, per seed:

1. draw features X (rows i.i.d. standard normal, or taken from files),
2. push X through two fixed random one-hop aggregations to get latent
   neighborhood embeddings H1 and H2 (the confounders),
3. choose each node's treatment probability from a logistic model on
   (X, H1), clipped away from 0 and 1 so overlap holds by construction,
4. define the true effect tau from one of four mechanisms (three
   network-driven, one purely local as a negative control),
5. emit Y = baseline(X, H1) + T * tau + noise.

Coefficients (the aggregation weights, treatment weights, and baseline
weights) are redrawn per seed, so multi-seed averages marginalize over
generating-process instances rather than conditioning on one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .errors import ConfigError, ShapeError, ValidationError
from .graphs import Graph, GraphSpec
from .nn import relu, sigmoid

CATE_KINDS = ("simple_h", "higher_order", "interaction", "local_x")


@dataclass
class DgpConfig:
    """Knobs of the generating process.

    tau_amplitude is calibrated so a graph-blind effect model plateaus at
    mean squared error around 4-5 on the standard benchmark configs: 3.5
    puts Var(tau) near 5.3 and the best feature-linear fit near 4.9.
    propensity_scale 2.0 gives treatment logits unit shape times 2,
    i.e. strong but not deterministic confounding.
    """

    d: int | None = 10
    cate_kind: str = "simple_h"
    noise_level: float = 0.5
    embed_dim: int = 8
    tau_amplitude: float = 3.5
    propensity_scale: float = 2.0
    propensity_clip: tuple[float, float] = (0.05, 0.95)

    def __post_init__(self):
        if self.cate_kind not in CATE_KINDS:
            raise ConfigError(f"unknown cate_kind {self.cate_kind!r}")
        if self.d is not None and self.d < 1:
            raise ValidationError("d must be positive")
        if self.noise_level < 0:
            raise ValidationError("noise_level must be non-negative")
        if self.embed_dim < 1:
            raise ValidationError("embed_dim must be positive")
        if self.tau_amplitude <= 0:
            raise ValidationError("tau_amplitude must be positive")
        if self.propensity_scale < 0:
            raise ValidationError("propensity_scale must be non-negative")
        lo, hi = self.propensity_clip
        if not (0.0 < lo < hi < 1.0):
            raise ValidationError("propensity_clip bounds must satisfy 0 < lo < hi < 1")


@dataclass
class NodeDataset:
    """Everything observed and latent about one generated instance."""

    x: np.ndarray           # n x d features
    h1: np.ndarray          # n x embed_dim one-hop embedding
    h2: np.ndarray          # n x embed_dim two-hop embedding
    propensity: np.ndarray  # true treatment probability per node
    t: np.ndarray           # binary treatment
    y: np.ndarray           # observed outcome
    tau: np.ndarray         # true effect per node
    baseline: np.ndarray    # untreated mean outcome
    eps: np.ndarray         # outcome noise actually drawn

    def __post_init__(self):
        n = self.x.shape[0]
        for name in ("h1", "h2", "propensity", "t", "y", "tau", "baseline", "eps"):
            if getattr(self, name).shape[0] != n:
                raise ShapeError(f"{name} does not match the number of nodes")
        if not np.all((self.t == 0.0) | (self.t == 1.0)):
            raise ValidationError("treatment must be binary")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def num_features(self) -> int:
        return self.x.shape[1]


def zscore(v: np.ndarray) -> np.ndarray:
    """Center and scale to unit standard deviation across entries.

    If the standard deviation is below 1e-12 the result is defined as all
    zeros, so degenerate inputs (constant columns, edgeless graphs) never
    produce NaN downstream.
    """
    v = np.asarray(v, dtype=np.float64)
    sd = v.std()
    if sd < 1e-12:
        return np.zeros_like(v)
    return (v - v.mean()) / sd


def make_confounders(x: np.ndarray, g: Graph, rng: np.random.Generator,
                     embed_dim: int = 8):
    """One- and two-hop neighborhood embeddings from fixed random maps.

    h1 = ReLU(A_hat x W_a) and h2 = ReLU(A_hat h1 W_b), with W_a and W_b
    drawn once from N(0, 1/sqrt(fan_in)) and held fixed: the network
    confounder is a function of the graph, not something being learned.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise ShapeError(f"features must be ({g.n}, d), got {x.shape}")
    d = x.shape[1]
    w_a = rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, embed_dim))
    w_b = rng.normal(0.0, 1.0 / math.sqrt(embed_dim), size=(embed_dim, embed_dim))
    a_hat = g.a_hat
    h1 = relu((a_hat @ x) @ w_a)
    h2 = relu((a_hat @ h1) @ w_b)
    return h1, h2


def make_cate(cfg: DgpConfig, x: np.ndarray, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """True per-node effect under the configured mechanism.

    Multi-dimensional embeddings are scalarized by a per-node mean, then
    z-scored across nodes so the sine input always has unit scale:

    - simple_h:     tau = A * sin(z(mean(h1)))
    - higher_order: tau = A * sin(z(mean(h2)))
    - interaction:  tau = A * sin(z(mean(h1))) * z(x[:, 0])
    - local_x:      tau = A * sin(z(x[:, 0]))   (graph-independent control)
    """
    a = cfg.tau_amplitude
    if cfg.cate_kind == "simple_h":
        return a * np.sin(zscore(h1.mean(axis=1)))
    if cfg.cate_kind == "higher_order":
        return a * np.sin(zscore(h2.mean(axis=1)))
    if cfg.cate_kind == "interaction":
        return a * np.sin(zscore(h1.mean(axis=1))) * zscore(x[:, 0])
    if cfg.cate_kind == "local_x":
        return a * np.sin(zscore(x[:, 0]))
    raise ConfigError(f"unknown cate_kind {cfg.cate_kind!r}")


def assign_treatment(cfg: DgpConfig, x: np.ndarray, h1: np.ndarray,
                     rng: np.random.Generator):
    """Confounded treatment: logit depends on X and the one-hop embedding.

    The local score w_x . X_i and the network score w_h . H1_i are each
    z-scored before summing (the embedding lives on a much smaller scale
    than the raw features, and the confounding must genuinely flow through
    both).  The sum is normalized to unit standard deviation, scaled by
    propensity_scale, squashed, and clipped into propensity_clip so every
    node keeps a real chance of either arm.  Returns (propensity, treatment).
    """
    n, d = x.shape
    w_x = rng.standard_normal(d)
    w_h = rng.standard_normal(h1.shape[1])
    raw = zscore(x @ w_x) + zscore(h1 @ w_h)
    sd = raw.std()
    logits = np.zeros(n) if sd < 1e-12 else cfg.propensity_scale * raw / sd
    lo, hi = cfg.propensity_clip
    propensity = np.clip(sigmoid(logits), lo, hi)
    t = (rng.random(n) < propensity).astype(np.float64)
    return propensity, t


def make_outcome(cfg: DgpConfig, x: np.ndarray, h1: np.ndarray, t: np.ndarray,
                 tau: np.ndarray, rng: np.random.Generator):
    """Observed outcome: confounded linear baseline plus t * tau plus noise.

    The raw baseline beta_x . X + beta_h . H1 is z-scored and rescaled to
    standard deviation 2, keeping the confounding signal on the same
    footing as the effect being estimated.  (The network term enters at
    the embedding's natural scale here; the full expected outcome still
    depends strongly on the graph through the propensity-times-effect
    term.)  Returns (y, baseline, eps), where eps is stored as the exact
    float residual y - baseline - t * tau so the reconstruction identity
    holds bit-for-bit.
    """
    beta_x = rng.standard_normal(x.shape[1])
    beta_h = rng.standard_normal(h1.shape[1])
    baseline = 2.0 * zscore(x @ beta_x + h1 @ beta_h)
    eps = cfg.noise_level * rng.standard_normal(x.shape[0])
    y = baseline + t * tau + eps
    return y, baseline, y - baseline - t * tau


def generate_dataset(spec: GraphSpec, cfg: DgpConfig, seed: int):
    """Full generating pipeline; returns (graph, dataset).

    Each stage draws from its own labelled stream derived from the seed,
    so the same seed with a different graph type reuses identical feature,
    coefficient, and noise draws.  File-based specs take X from the feature
    file, and cfg.d is ignored in that case.
    """
    g, x = spec.realize(seeding.stream(seed, seeding.GRAPH))
    if x is None:
        if cfg.d is None:
            raise ConfigError("cfg.d is required for randomly generated graphs")
        x = seeding.stream(seed, seeding.FEATURES).standard_normal((g.n, cfg.d))
    h1, h2 = make_confounders(x, g, seeding.stream(seed, seeding.CONFOUNDERS),
                              embed_dim=cfg.embed_dim)
    tau = make_cate(cfg, x, h1, h2)
    propensity, t = assign_treatment(cfg, x, h1, seeding.stream(seed, seeding.TREATMENT))
    y, baseline, eps = make_outcome(cfg, x, h1, t, tau, seeding.stream(seed, seeding.OUTCOME))
    ds = NodeDataset(x=x, h1=h1, h2=h2, propensity=propensity, t=t, y=y,
                     tau=tau, baseline=baseline, eps=eps)
    return g, ds


# ---------------------------------------------------------------------------
# the analytic five-node star
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StarExample:
    """The worked five-node star: a hub C joined to periphery A, B, D, E.

    Labels follow that order in every array.  ``constraint_table`` maps a
    feature value to the output a feature-only predictor must produce to be
    exact; ``blind_lookup`` is the best such predictor (per-feature-value
    group means), whose error floor is ``blind_lookup_mse``.
    ``blind_linear_mse`` is the exact least-squares floor for an affine
    feature-only predictor, and ``aware_mse`` is the error of the
    embedding-keyed table (zero: the embedding determines the effect).
    """

    labels: tuple[str, ...]
    x: np.ndarray
    h: np.ndarray
    tau: np.ndarray
    constraint_table: dict[float, float]
    blind_lookup: dict[float, float]
    blind_lookup_mse: float
    blind_linear_mse: float
    aware_mse: float


def star_example() -> StarExample:
    """Construct the analytic star instance with X = (1, 1, 1, 2, 10).

    Node C (feature 10) is the hub; its embedding is the mean of its
    neighbors' features, 1.25.  Each degree-one periphery node's embedding
    is its single neighbor's feature, 10.  The effect is sin(embedding).
    """
    labels = ("A", "B", "D", "E", "C")
    x = np.array([1.0, 1.0, 1.0, 2.0, 10.0])
    edges = [(0, 4), (1, 4), (2, 4), (3, 4)]  # periphery-to-hub
    neighbors = {i: [] for i in range(5)}
    for i, j in edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    h = np.array([
        x[neighbors[i][0]] if len(neighbors[i]) == 1
        else float(np.mean([x[j] for j in neighbors[i]]))
        for i in range(5)
    ])
    tau = np.sin(h)

    constraint_table = {}
    for xi, ti in zip(x, tau):
        constraint_table.setdefault(float(xi), float(ti))

    groups: dict[float, list[float]] = {}
    for xi, ti in zip(x, tau):
        groups.setdefault(float(xi), []).append(float(ti))
    blind_lookup = {xv: float(np.mean(ts)) for xv, ts in groups.items()}
    blind_lookup_mse = float(
        np.mean([(ti - blind_lookup[float(xi)]) ** 2 for xi, ti in zip(x, tau)])
    )

    design = np.column_stack([x, np.ones_like(x)])
    theta, *_ = np.linalg.lstsq(design, tau, rcond=None)
    lin_resid = design @ theta - tau
    blind_linear_mse = float(lin_resid @ lin_resid / x.size)

    aware_table = {}
    for hi, ti in zip(h, tau):
        aware_table.setdefault(float(hi), float(ti))
    aware_mse = float(np.mean([(ti - aware_table[float(hi)]) ** 2 for hi, ti in zip(h, tau)]))

    return StarExample(
        labels=labels,
        x=x,
        h=h,
        tau=tau,
        constraint_table=constraint_table,
        blind_lookup=blind_lookup,
        blind_lookup_mse=blind_lookup_mse,
        blind_linear_mse=blind_linear_mse,
        aware_mse=aware_mse,
    )
