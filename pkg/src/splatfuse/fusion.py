"""Per-view uncertainty ensembles and precision-weighted Gaussian fusion.

Each conditioning view owns a block of T independently initialized member
networks that map (primitive state, view feature) to a Gaussian over the
per-primitive state vector. Member predictions are aggregated into mean,
epistemic and aleatoric terms, and the views are fused elementwise with
inverse-variance weights. Covariances are diagonal throughout; all
aggregation expectations use the 1/T mean, including the aleatoric term.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, add, matmul, mul, power, relu, softplus, sub,
                       tmean)
from .nn import SIGMA_FLOOR, uniform_init

FACE_VIEWS = ("f_audio", "f_exp", "f_tone", "f_emotion")
MOUTH_VIEWS = ("f_audio", "f_exp", "f_tone")


@dataclass
class StateDistribution:
    """Diagonal Gaussian over the per-primitive state, plus its split."""
    mean: Tensor   # (..., D_state)
    var: Tensor    # sigma-hat, = au + eu exactly
    eu: Tensor     # epistemic (ensemble disagreement)
    au: Tensor     # aleatoric (mean predicted sigma)

    def validate(self):
        if np.any(self.au.data < SIGMA_FLOOR) or np.any(self.var.data < SIGMA_FLOOR):
            raise ValueError("variance fell below the 1e-6 floor")
        if np.any(self.eu.data < 0):
            raise ValueError("negative epistemic term")


@dataclass
class FusedState:
    mean: Tensor
    var: Tensor


class UncertaintyBlock:
    """Ensemble of T two-head MLPs for one conditioning view.

    Member weights are stored stacked, (T, fan_in, fan_out) per layer, so
    one batched matmul runs the whole ensemble; member_forward slices out
    a single member for the per-member contract. The emotion view takes
    the view feature alone; every other view takes primitive state
    concatenated with the feature.
    """

    def __init__(self, view: str, in_dim: int, *, rng: np.random.Generator,
                 n_members: int = 10, hidden: int = 64, d_state: int = 32):
        if n_members < 2:
            raise ValueError("an uncertainty block needs at least 2 members")
        self.view = view
        self.in_dim = in_dim
        self.n_members = n_members
        self.hidden = hidden
        self.d_state = d_state
        shapes = [(in_dim, hidden), (hidden, hidden),
                  (hidden, d_state), (hidden, d_state)]  # trunk x2, mu, sigma
        self.weights = []
        self.biases = []
        for fan_in, fan_out in shapes:
            w = np.stack([uniform_init(rng, fan_in, fan_out, (fan_in, fan_out))
                          for _ in range(n_members)])
            b = np.stack([uniform_init(rng, fan_in, fan_out, (1, fan_out))
                          for _ in range(n_members)])
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(b, requires_grad=True))

    @property
    def params(self):
        return self.weights + self.biases

    def forward(self, inputs: Tensor):
        """All members at once: (P, in) -> mu, sigma each (T, P, D)."""
        if inputs.shape[-1] != self.in_dim:
            raise ValueError(f"block {self.view}: expected input dim "
                             f"{self.in_dim}, got {inputs.shape[-1]}")
        h = relu(add(matmul(inputs, self.weights[0]), self.biases[0]))
        h = relu(add(matmul(h, self.weights[1]), self.biases[1]))
        mu = add(matmul(h, self.weights[2]), self.biases[2])
        raw = add(matmul(h, self.weights[3]), self.biases[3])
        sigma = add(softplus(raw), SIGMA_FLOOR)
        return mu, sigma

    def member_forward(self, t: int, state, feature):
        """One member on one input; state may be None for the emotion view."""
        parts = [np.asarray(feature, dtype=np.float64).reshape(-1)]
        if state is not None:
            parts.insert(0, np.asarray(state, dtype=np.float64).reshape(-1))
        x = Tensor(np.concatenate(parts))
        if x.shape[0] != self.in_dim:
            raise ValueError(f"block {self.view}: expected input dim "
                             f"{self.in_dim}, got {x.shape[0]}")
        h = relu(add(matmul(x, self.weights[0][t]), self.biases[0][t, 0]))
        h = relu(add(matmul(h, self.weights[1][t]), self.biases[1][t, 0]))
        mu = add(matmul(h, self.weights[2][t]), self.biases[2][t, 0])
        raw = add(matmul(h, self.weights[3][t]), self.biases[3][t, 0])
        return mu, add(softplus(raw), SIGMA_FLOOR)


def aggregate_stacked(mu: Tensor, sigma: Tensor) -> StateDistribution:
    """Ensemble aggregation over the leading member axis.

    mean = (1/T) sum mu_t; EU = (1/T) sum (mu_t - mean)^2, the deviation
    form rather than E[x^2] - E[x]^2, so EU is nonnegative by construction
    and identical members give EU at the squared-ulp scale instead of a
    cancellation residual; AU = (1/T) sum sigma_t; var = AU + EU, so the
    decomposition identity holds exactly by construction.
    """
    mean = tmean(mu, axis=0)
    dev = sub(mu, mean)
    eu = tmean(mul(dev, dev), axis=0)
    au = tmean(sigma, axis=0)
    return StateDistribution(mean=mean, var=add(au, eu), eu=eu, au=au)


def block_aggregate(member_outputs) -> StateDistribution:
    """Aggregate a list of T (mu_t, sigma_t) pairs (tensors or arrays)."""
    if len(member_outputs) < 2:
        raise ValueError("aggregation needs at least 2 members")
    from .autodiff import as_tensor

    mus = _stack([as_tensor(m) for m, _ in member_outputs])
    sigmas = _stack([as_tensor(s) for _, s in member_outputs])
    return aggregate_stacked(mus, sigmas)


def _stack(tensors):
    """Stack same-shape tensors along a new leading axis (graph op)."""
    from .autodiff import from_op
    data = np.stack([t.data for t in tensors])

    def backward(g):
        return tuple(g[i] for i in range(len(tensors)))

    return from_op(data, tensors, backward, op="stack")


def gaussian_fuse(views) -> FusedState:
    """Inverse-variance fusion of N state distributions, elementwise."""
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    for v in views:
        v.validate()
    precisions = [power(v.var, -1.0) for v in views]
    total_precision = precisions[0]
    weighted = mul(precisions[0], views[0].mean)
    for p, v in zip(precisions[1:], views[1:]):
        total_precision = add(total_precision, p)
        weighted = add(weighted, mul(p, v.mean))
    fused_var = power(total_precision, -1.0)
    return FusedState(mean=mul(fused_var, weighted), var=fused_var)


def uniform_fuse(views) -> FusedState:
    """Ablation baseline: plain averaging, ignoring the variances."""
    views = list(views)
    if not views:
        raise ValueError("need at least one view")
    n = float(len(views))
    mean = views[0].mean
    var = views[0].var
    for v in views[1:]:
        mean = add(mean, v.mean)
        var = add(var, v.var)
    return FusedState(mean=mul(mean, 1.0 / n), var=mul(var, 1.0 / n))


def make_blocks(rng, view_dims: dict, state_dim: int, *, n_members: int = 10,
                hidden: int = 64, d_state: int = 32, views=FACE_VIEWS) -> dict:
    """One UncertaintyBlock per view; emotion omits the primitive state."""
    blocks = {}
    for view in views:
        extra = 0 if view == "f_emotion" else state_dim
        blocks[view] = UncertaintyBlock(view, extra + view_dims[view], rng=rng,
                                        n_members=n_members, hidden=hidden,
                                        d_state=d_state)
    return blocks


def fuse_pipeline(prim_state: np.ndarray, features: dict, blocks: dict,
                  mode: str = "uncertainty"):
    """Fused per-primitive state for one frame.

    prim_state is (P, state_dim) numpy (canonical, constant); features
    maps view name to either a clip/frame-level Tensor (D,) broadcast
    over primitives, or a per-primitive Tensor (P, D) (the emotion view).
    Returns (FusedState with (P, D_state) tensors, {view: StateDistribution}).
    """
    n_prims = prim_state.shape[0]
    state_t = Tensor(prim_state)
    dists = {}
    for view, block in blocks.items():
        if view not in features:
            raise ValueError(f"missing feature for view {view!r}")
        feat = features[view]
        if feat.ndim == 1:
            feat = _broadcast_rows(feat, n_prims)
        inputs = feat if view == "f_emotion" else _concat_cols(state_t, feat)
        mu, sigma = block.forward(inputs)
        dists[view] = aggregate_stacked(mu, sigma)
    fuse = gaussian_fuse if mode == "uncertainty" else uniform_fuse
    return fuse([dists[v] for v in blocks]), dists


def _broadcast_rows(vec: Tensor, n: int) -> Tensor:
    from .autodiff import outer
    return outer(Tensor(np.ones(n)), vec)


def _concat_cols(a: Tensor, b: Tensor) -> Tensor:
    from .autodiff import concat
    return concat([a, b], axis=1)


def write_uncertainty_dump(path, dists: dict) -> None:
    """Plain-text per-view tables of (mu, sigma, EU, AU) per primitive."""
    with open(path, "w") as fh:
        for view in sorted(dists):
            d = dists[view]
            mean = np.atleast_2d(d.mean.data)
            var = np.atleast_2d(d.var.data)
            eu = np.atleast_2d(d.eu.data)
            au = np.atleast_2d(d.au.data)
            fh.write(f"# view={view} prims={mean.shape[0]} d={mean.shape[1]}\n")
            for i in range(mean.shape[0]):
                row = np.concatenate([mean[i], var[i], eu[i], au[i]])
                fh.write(f"{i} " + " ".join("%.10g" % v for v in row) + "\n")
