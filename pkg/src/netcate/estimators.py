"""The five CATE pipelines.

Four are residual-on-residual learners differing only in which stages see
the graph:

===============  ================  =================
kind             nuisance models   final effect model
===============  ================  =================
Baseline         MLP (blind)       linear on features
Ablation         GCN (aware)       linear on features
SanityCheck      MLP (blind)       GCN (aware)
GraphRLearner    GCN (aware)       GCN (aware)
===============  ================  =================

The fifth, TLearner, is a single GCN predicting the outcome from features
plus the treatment indicator; its effect estimate is the difference of the
two counterfactual forward passes.

Everything is transductive: nuisances fit on all nodes, residuals computed
in sample, and the effect evaluated on the same node set.  Node-level
sample splitting on one connected graph would leak through the shared
adjacency anyway.  Two consequences shape the training recipes below:

- Nuisance models must not memorize their own observations, or the
  residuals lose the causal signal (the propensity model is the dangerous
  one: left unregularized it absorbs half the realized treatment variance).
  Each nuisance head therefore carries decoupled weight decay, with decay
  strengths chosen against ground-truth nuisance error on synthetic data.
- The residual regression's pseudo-outcome noise is heavy-tailed (residual
  noise divided by the treatment residual), which derails plain gradient
  training.  The graph-aware final stage therefore solves the weighted
  residual regression exactly in a graph-feature kernel space first, then
  distills that estimate into the two-layer graph net, and finally
  re-solves the net's scalar head in closed form under the true residual
  objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import nn, seeding
from .dgp import NodeDataset
from .errors import ConfigError, ValidationError
from .graphs import Graph


class EstimatorKind(Enum):
    BASELINE = "Baseline"
    ABLATION = "Ablation"
    SANITY_CHECK = "SanityCheck"
    GRAPH_RLEARNER = "GraphRLearner"
    TLEARNER = "TLearner"


# architecture of (nuisance stage, final stage) per kind
PIPELINES: dict[EstimatorKind, tuple[str, str]] = {
    EstimatorKind.BASELINE: ("mlp", "linear"),
    EstimatorKind.ABLATION: ("gnn", "linear"),
    EstimatorKind.SANITY_CHECK: ("mlp", "gnn"),
    EstimatorKind.GRAPH_RLEARNER: ("gnn", "gnn"),
    EstimatorKind.TLEARNER: ("gnn", "tlearner"),
}

ALL_KINDS = tuple(EstimatorKind)

KIND_BY_NAME = {kind.value: kind for kind in EstimatorKind}

# sub-stream indices inside the per-seed training stream
_OUTCOME_MODEL = 0
_PROPENSITY_MODEL = 1
_FINAL_MODEL = 2
_TLEARNER_MODEL = 3

# below this magnitude a treatment residual carries no usable signal
_TINY_RESIDUAL = 1e-6

# Training recipe.  The configured learning rate is treated as a base rate:
# with a few hundred full-batch steps and Adam's per-step displacement
# capped near the learning rate, the raw configured value cannot move any
# model far enough to fit targets with standard-deviation around two, so
# every trainer scales it by LR_SCALE.  Decay strengths were selected by
# minimizing error against the true nuisance surfaces of synthetic data
# (the propensity model needs far stronger shrinkage to stay calibrated
# in-sample).
LR_SCALE = 25.0
OUTCOME_DECAY = 1.0
PROPENSITY_DECAY = 4.0
TLEARNER_DECAY = 0.3
DISTILL_DECAY = 0.1

# Final-stage solver: squared-exponential kernel width relative to the
# median pairwise distance of the graph features, ridge grid relative to
# the mean residual weight, and the shrinkage used when the net's head is
# re-solved under the residual objective.
KERNEL_WIDTH_FACTOR = 0.5
KERNEL_RIDGE_GRID = (0.1, 0.2, 0.4, 0.8, 1.6, 3.2)
HEAD_RIDGE_FRACTION = 0.1


@dataclass
class TrainConfig:
    """Architecture and optimization settings shared by every pipeline."""

    num_layers: int = 2
    hidden_dim: int = 32
    nuisance_epochs: int = 150
    cate_epochs: int = 200
    lr: float = 0.001

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1:
            raise ValidationError("num_layers and hidden_dim must be positive")
        if self.nuisance_epochs < 1 or self.cate_epochs < 1:
            raise ValidationError("epoch counts must be positive")
        if self.lr <= 0:
            raise ValidationError("lr must be positive")

    def dims(self, in_dim: int) -> list[int]:
        return [in_dim] + [self.hidden_dim] * (self.num_layers - 1) + [1]

    @property
    def step_size(self) -> float:
        return self.lr * LR_SCALE


@dataclass
class NuisancePair:
    """Fitted outcome model m(.) and propensity model p(.) (raw logits)."""

    outcome_model: nn.MlpModel | nn.GcnModel
    propensity_model: nn.MlpModel | nn.GcnModel
    arch: str  # "mlp" or "gnn"

    def predict_outcome(self, ds: NodeDataset, g: Graph) -> np.ndarray:
        return _predict(self.outcome_model, ds.x, g)[:, 0]

    def predict_propensity(self, ds: NodeDataset, g: Graph) -> np.ndarray:
        logits = _predict(self.propensity_model, ds.x, g)[:, 0]
        # keep probabilities strictly inside (0, 1) even at saturated logits
        return np.clip(nn.sigmoid(logits), 1e-9, 1.0 - 1e-9)


@dataclass
class LinearCate:
    """Affine effect model on node features: tau(x) = x . theta + intercept."""

    theta: np.ndarray
    intercept: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        return x @ self.theta + self.intercept


@dataclass
class GcnCate:
    """Graph-aware effect model plus the representation it learned.

    ``embeddings`` holds the hidden activations feeding the scalar head,
    one row per node.  ``degenerate`` flags inputs whose treatment
    residuals were all (near) zero, in which case fitting was skipped and
    predictions come from the initialization.  ``loss_history`` records
    the distillation loss per epoch.
    """

    model: nn.GcnModel
    embeddings: np.ndarray
    tau_kernel: np.ndarray | None = None  # the exact kernel-space estimate
    degenerate: bool = False
    kernel_ridge: float = 0.0
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def predict(self, a_hat: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Predictions of the distilled graph net (close to tau_hat)."""
        return nn.gcn_forward(self.model, a_hat, x)[:, 0]


@dataclass
class CateEstimate:
    """Per-node effect estimates plus the artifacts behind them."""

    kind: EstimatorKind
    tau_hat: np.ndarray
    residuals: tuple[np.ndarray, np.ndarray] | None = None  # (y_res, t_res)
    embeddings: np.ndarray | None = None

    @property
    def pipeline(self) -> tuple[str, str]:
        return PIPELINES[self.kind]


def _predict(model, x, g: Graph) -> np.ndarray:
    if isinstance(model, nn.GcnModel):
        return nn.gcn_forward(model, g.a_hat, x)
    return nn.mlp_forward(model, x)


def fit_nuisance(kind: EstimatorKind, ds: NodeDataset, g: Graph, cfg: TrainConfig,
                 seed: int) -> NuisancePair:
    """Train the outcome and propensity models prescribed by the grid.

    Both run nuisance_epochs full-batch Adam steps: the outcome model with
    squared error against Y, the propensity model with logistic loss
    against T (raw-logit head; the sigmoid is applied at residualization).
    """
    if kind == EstimatorKind.TLEARNER:
        raise ConfigError("TLearner has no nuisance stage")
    arch = PIPELINES[kind][0]
    dims = cfg.dims(ds.num_features)

    def build(stream_index):
        rng = seeding.stream(seed, seeding.TRAINING, stream_index)
        if arch == "gnn":
            return nn.GcnModel.init(dims, rng), (g.a_hat, ds.x)
        return nn.MlpModel.init(dims, rng), ds.x

    outcome_model, inputs = build(_OUTCOME_MODEL)
    nn.train(outcome_model, "mse", inputs, ds.y, epochs=cfg.nuisance_epochs,
             lr=cfg.step_size, weight_decay=OUTCOME_DECAY)
    propensity_model, inputs = build(_PROPENSITY_MODEL)
    nn.train(propensity_model, "logistic", inputs, ds.t, epochs=cfg.nuisance_epochs,
             lr=cfg.step_size, weight_decay=PROPENSITY_DECAY)
    return NuisancePair(outcome_model, propensity_model, arch)


def residualize(pair: NuisancePair, ds: NodeDataset, g: Graph):
    """Outcome and treatment residuals against the fitted nuisances.

    t_res lies strictly inside (-1, 1) because predicted propensities are
    strictly inside (0, 1).
    """
    y_res = ds.y - pair.predict_outcome(ds, g)
    t_res = ds.t - pair.predict_propensity(ds, g)
    return y_res, t_res


def fit_final_linear(y_res: np.ndarray, t_res: np.ndarray, x: np.ndarray) -> LinearCate:
    """Exact minimizer of the residual loss over affine feature models.

    Minimizing mean (y_res - t_res * (x theta + b))^2 is weighted least
    squares of the pseudo-outcome y_res / t_res on [x, 1] with weights
    t_res^2.  Solved in closed form with ridge 1e-6 on the Gram matrix;
    nodes with |t_res| below 1e-6 get weight exactly zero, which avoids
    ever forming 0/0.
    """
    y_res = np.asarray(y_res, dtype=np.float64)
    t_res = np.asarray(t_res, dtype=np.float64)
    n, d = x.shape
    design = np.column_stack([x, np.ones(n)])
    tr = np.where(np.abs(t_res) < _TINY_RESIDUAL, 0.0, t_res)
    w = tr * tr
    gram = design.T @ (w[:, None] * design) + 1e-6 * np.eye(d + 1)
    rhs = design.T @ (tr * y_res)
    theta = np.linalg.solve(gram, rhs)
    return LinearCate(theta=theta[:d], intercept=float(theta[d]))


def _graph_features(x: np.ndarray, a_hat: np.ndarray) -> np.ndarray:
    """Column-standardized [x, a_hat x]: the local and one-hop views."""
    phi = np.column_stack([x, a_hat @ x])
    mu = phi.mean(axis=0)
    sd = phi.std(axis=0)
    sd[sd < 1e-12] = 1.0
    return (phi - mu) / sd


def kernel_cate(y_res: np.ndarray, t_res: np.ndarray, x: np.ndarray,
                a_hat: np.ndarray):
    """Exact penalized minimizer of the residual loss in kernel space.

    Uses a squared-exponential kernel on the standardized local and
    one-hop feature views, minimizing sum t_res^2 (y_res/t_res - f)^2
    + ridge * ||f||^2 in the kernel's function space.  The ridge level is
    picked from a fixed grid by generalized cross-validation, so the
    smoothing adapts to the noise level and sample size.  Returns
    (estimate, chosen ridge).
    """
    w = t_res * t_res
    phi = _graph_features(x, a_hat)
    sq = (phi * phi).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (phi @ phi.T), 0.0)
    positive = d2[d2 > 0]
    med = float(np.median(positive)) if positive.size else 1.0
    k = np.exp(-d2 / (KERNEL_WIDTH_FACTOR * med))

    n = len(y_res)
    sw = np.sqrt(w)
    b = (sw[:, None] * k) * sw[None, :]
    eigval, eigvec = np.linalg.eigh(b)
    eigval = np.maximum(eigval, 0.0)
    q = np.divide(y_res, t_res, out=np.zeros_like(y_res),
                  where=np.abs(t_res) >= _TINY_RESIDUAL)
    u = sw * q
    # u = W^1/2 q with q the pseudo-outcome; ridge chosen by GCV on the
    # smoother u_hat = B (B + lam I)^-1 u
    uproj = eigvec.T @ u
    scale = w.mean() if w.mean() > 0 else 1.0
    best = (np.inf, KERNEL_RIDGE_GRID[0] * scale)
    for frac in KERNEL_RIDGE_GRID:
        lam = frac * scale
        shrink = eigval / (eigval + lam)
        resid = u - eigvec @ (shrink * uproj)
        dof = shrink.sum()
        gcv = (resid @ resid / n) / max(1.0 - dof / n, 1e-6) ** 2
        if gcv < best[0]:
            best = (gcv, lam)
    lam = best[1]
    alpha = sw * (eigvec @ (uproj / (eigval + lam)))
    f = k @ alpha
    return f, float(lam)


def _hidden_and_aggregated(model: nn.GcnModel, a_hat, x):
    acts, _, _ = nn._gcn_pass(model, a_hat, x)
    hidden = acts[-2]
    return hidden, a_hat @ hidden


def _refit_head(model: nn.GcnModel, a_hat, x, y_res, t_res) -> np.ndarray:
    """Re-solve the scalar head exactly under the residual objective.

    The head of a graph layer is affine in [a_hat z, z, 1], so the ridge
    weighted-least-squares solution folds back into (weight, root, bias)
    without changing the model class.  Returns the hidden activations.
    """
    hidden, aggregated = _hidden_and_aggregated(model, a_hat, x)
    n, h = hidden.shape
    f = np.column_stack([aggregated, hidden, np.ones(n)])
    w = t_res * t_res
    gram = f.T @ (w[:, None] * f)
    lam = HEAD_RIDGE_FRACTION * np.trace(gram) / gram.shape[0]
    theta = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), f.T @ (t_res * y_res))
    head = model.layers[-1]
    head.weight[:, 0] = theta[:h]
    head.root[:, 0] = theta[h:2 * h]
    head.bias[0] = theta[2 * h]
    return hidden


def fit_final_gnn(y_res: np.ndarray, t_res: np.ndarray, x: np.ndarray, g: Graph,
                  cfg: TrainConfig, seed: int) -> GcnCate:
    """Graph-aware final stage.

    Three steps: (1) solve the weighted residual regression exactly in
    kernel space (ridge by GCV); (2) distill that estimate into the
    two-layer graph net with cate_epochs cosine-annealed Adam steps --
    distillation is a clean regression, which the tiny step budget handles
    well; (3) re-solve the net's scalar head in closed form under the true
    residual objective, folding the solution back into the head layer, so
    the returned model is itself a penalized minimizer of the residual
    loss over its learned representation.

    If every treatment residual is (near) zero the loss does not depend on
    the model at all; fitting is skipped and the estimate is flagged
    degenerate.
    """
    rng = seeding.stream(seed, seeding.TRAINING, _FINAL_MODEL)
    model = nn.GcnModel.init(cfg.dims(x.shape[1]), rng)
    degenerate = bool(np.all(np.abs(t_res) < _TINY_RESIDUAL))
    if degenerate:
        hidden, _ = _hidden_and_aggregated(model, g.a_hat, x)
        return GcnCate(model=model, embeddings=hidden, degenerate=True)
    a_hat = g.a_hat
    target, lam = kernel_cate(y_res, t_res, x, a_hat)
    history = nn.train(model, "mse", (a_hat, x), target, epochs=cfg.cate_epochs,
                       lr=cfg.step_size, weight_decay=DISTILL_DECAY,
                       schedule="cosine")
    hidden = _refit_head(model, a_hat, x, y_res, t_res)
    return GcnCate(model=model, embeddings=hidden, tau_kernel=target,
                   degenerate=False, kernel_ridge=lam, loss_history=history)


def estimate_rlearner(kind: EstimatorKind, ds: NodeDataset, g: Graph,
                      cfg: TrainConfig, seed: int) -> CateEstimate:
    """Run one grid cell: nuisances, residuals, then the final stage."""
    if kind == EstimatorKind.TLEARNER:
        raise ConfigError("use estimate_tlearner for the TLearner")
    pair = fit_nuisance(kind, ds, g, cfg, seed)
    y_res, t_res = residualize(pair, ds, g)
    if PIPELINES[kind][1] == "linear":
        final = fit_final_linear(y_res, t_res, ds.x)
        tau_hat = final.predict(ds.x)
        embeddings = None
    else:
        final = fit_final_gnn(y_res, t_res, ds.x, g, cfg, seed)
        tau_hat = final.predict(g.a_hat, ds.x)
        embeddings = final.embeddings
    return CateEstimate(kind=kind, tau_hat=tau_hat, residuals=(y_res, t_res),
                        embeddings=embeddings)


def estimate_tlearner(ds: NodeDataset, g: Graph, cfg: TrainConfig,
                      seed: int) -> CateEstimate:
    """Single-model baseline: one GCN on [X, T] predicting Y.

    Trains for nuisance_epochs + cate_epochs steps so its optimizer budget
    matches a full two-stage pipeline, then estimates the effect as the
    difference between predictions with the treatment column forced to one
    and to zero.
    """
    rng = seeding.stream(seed, seeding.TRAINING, _TLEARNER_MODEL)
    model = nn.GcnModel.init(cfg.dims(ds.num_features + 1), rng)
    features = np.column_stack([ds.x, ds.t])
    nn.train(model, "mse", (g.a_hat, features), ds.y,
             epochs=cfg.nuisance_epochs + cfg.cate_epochs,
             lr=cfg.step_size, weight_decay=TLEARNER_DECAY)
    treated = np.column_stack([ds.x, np.ones(ds.n)])
    control = np.column_stack([ds.x, np.zeros(ds.n)])
    tau_hat = (nn.gcn_forward(model, g.a_hat, treated)
               - nn.gcn_forward(model, g.a_hat, control))[:, 0]
    return CateEstimate(kind=EstimatorKind.TLEARNER, tau_hat=tau_hat)


def estimate(kind: EstimatorKind, ds: NodeDataset, g: Graph, cfg: TrainConfig,
             seed: int) -> CateEstimate:
    """Dispatch to the right pipeline for the kind."""
    if kind == EstimatorKind.TLEARNER:
        return estimate_tlearner(ds, g, cfg, seed)
    return estimate_rlearner(kind, ds, g, cfg, seed)
