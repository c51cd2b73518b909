"""Training feature networks under star-convexity hinge constraints.

The per-sample objective at stage ``k`` is

    h(w*) + rho * (mean_i eps_i + mean_i xi_i)

where ``h`` is the LK residual of the stage-``k`` features as a function of
the corner displacement, ``w_i`` are neighbours drawn around the truth
``w*`` and ``eps_i`` / ``xi_i`` are the hinged gaps of the two strong
star-convexity conditions (or of the DeepLK conditions). Every ``h`` value is
a differentiable function of both feature maps, so one backward pass per
image returns exact parameter gradients.
"""

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from .errors import InvalidConfig
from .featnet import adam_step, backward, forward, init_network
from .homography import Frame
from .imaging import as_array, warp_plan
from .starconvex import (
    LambdaMode, StarConvexConfig, deeplk_gaps_signed, gap_condition1_signed,
    gap_condition2_signed, interpolate_omega, sample_linf_ball,
)


class LossKind(str, Enum):
    PRISE = "prise"
    DEEPLK = "deeplk"
    PLAIN = "plain"


@dataclass
class TrainSample:
    source: np.ndarray
    target: np.ndarray
    omega_star: np.ndarray
    frame: Frame = None

    def __post_init__(self):
        self.source = as_array(self.source)
        self.target = as_array(self.target)
        self.omega_star = np.asarray(self.omega_star, dtype=np.float64).reshape(8)
        if self.frame is None:
            self.frame = Frame.for_shapes(self.target.shape[1:], self.source.shape[1:])


@dataclass
class TrainConfig:
    sc: StarConvexConfig = field(default_factory=StarConvexConfig)
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    loss: LossKind = LossKind.PRISE
    conditions: tuple = (1, 2)
    stage_schedule: str = "stacked"
    seed: int = 0

    PAPER_LR = 1e-5

    def __post_init__(self):
        if isinstance(self.sc, dict):
            self.sc = StarConvexConfig(**self.sc)
        self.loss = LossKind(self.loss)
        self.conditions = tuple(sorted(int(c) for c in self.conditions))
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be >= 1")
        if not set(self.conditions) <= {1, 2}:
            raise InvalidConfig("conditions must be a subset of {1, 2}")
        if self.stage_schedule != "stacked":
            raise InvalidConfig("only the stacked stage schedule is supported")

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["sc"] = asdict(self.sc)
        d["sc"]["lambda_mode"] = self.sc.lambda_mode.value
        d["loss"] = self.loss.value
        d["conditions"] = list(self.conditions)
        return d

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        sc = raw.pop("sc", {})
        if "lambda" in sc:
            sc["lam"] = sc.pop("lambda")
        return cls(sc=StarConvexConfig(**sc), **raw)


@dataclass
class LossTerms:
    total: float
    lk: float
    eps: float
    xi: float


def sample_neighborhood(omega_star, radius, n_samples, rng):
    """``n_samples`` uniform draws from the l-inf ball of ``radius`` around ``omega_star``."""
    omega_star = np.asarray(omega_star, dtype=np.float64)
    out = []
    while len(out) < n_samples:
        w = sample_linf_ball(omega_star, radius, 1, rng)[0]
        if np.any(w != omega_star):
            out.append(w)
    return out


class _Landscape:
    """LK residual of one sample's stage features, with lazily combined gradients."""

    def __init__(self, ft, fs, frame, scale):
        self.ft = ft.astype(np.float64)
        self.fs = fs
        self.frame = frame
        self.scale = scale
        self.n_pix = ft.shape[1] * ft.shape[2]
        self.evals = []

    def __call__(self, omega):
        plan = warp_plan(self.frame.homography(np.asarray(omega) * self.scale),
                         self.ft.shape[1], self.ft.shape[2], self.fs.shape[1], self.fs.shape[2])
        diff = self.ft - plan.apply(self.fs)
        self.evals.append((plan, diff))
        return float((diff ** 2).sum() / self.n_pix), len(self.evals) - 1

    def feature_grads(self, coeffs):
        """d/d(target features) and d/d(source features) of sum_j coeffs[j] * h_j."""
        g_t = np.zeros_like(self.ft)
        g_s = np.zeros(self.fs.shape)
        for j, c in coeffs.items():
            if c == 0.0:
                continue
            plan, diff = self.evals[j]
            g = (2.0 * c / self.n_pix) * diff
            g_t += g
            g_s -= plan.adjoint(g)
        return g_t, g_s


def _hinge_terms(land, kind, conditions, sc, omega_star, neighbors, h_star, i_star):
    """Mean hinge slacks and the coefficient of every evaluated h in the trained part.

    Both slacks are always measured (they are the monitored hinge loss); only
    the conditions in ``conditions`` contribute coefficients, and none do for
    the plain LK loss.
    """
    coeffs = {i_star: 0.0}
    eps_sum = xi_sum = 0.0
    n = len(neighbors)
    deeplk = kind is LossKind.DEEPLK

    def add(j, c):
        coeffs[j] = coeffs.get(j, 0.0) + c

    for omega in neighbors:
        h_w, i_w = land(omega)
        best_e = (0.0, None)
        best_x = (0.0, None)
        for lam in sc.lambdas():
            tilde = interpolate_omega(omega_star, omega, lam)
            h_t, i_t = land(tilde)
            if deeplk:
                e, x = deeplk_gaps_signed(h_star, h_t, h_w, omega_star, omega, lam)
            else:
                e = gap_condition1_signed(h_star, h_t, omega_star, tilde, sc.mu)
                x = gap_condition2_signed(h_star, h_t, h_w, omega_star, omega, lam, sc.mu)
            if e > best_e[0]:
                best_e = (e, (lam, i_t))
            if x > best_x[0]:
                best_x = (x, (lam, i_t))
        eps_sum += best_e[0]
        xi_sum += best_x[0]
        if kind is LossKind.PLAIN:
            continue
        if best_e[1] is not None and 1 in conditions:
            lam, i_t = best_e[1]
            add(i_star, 1.0 / n)
            add(i_w if deeplk else i_t, -1.0 / n)
        if best_x[1] is not None and 2 in conditions:
            lam, i_t = best_x[1]
            add(i_t, 1.0 / n)
            if deeplk:
                add(i_w, -1.0 / n)
            else:
                add(i_star, -(1.0 - lam) / n)
                add(i_w, -lam / n)
    return eps_sum / n, xi_sum / n, coeffs


def stage_loss(net, sample, stage, config, neighbors=None, rng=None, backprop=True, weight=1.0):
    """Loss of one sample at ``stage``; gradients (times ``weight``) go to ``net.grads``.

    Only the parameters of ``stage`` receive gradient (earlier stages are
    treated as frozen inputs). ``neighbors`` overrides the random draw.
    """
    sc = config.sc
    fs = forward(net, sample.source, stage)
    ft = forward(net, sample.target, stage)
    land = _Landscape(ft[-1], fs[-1], sample.frame.scaled(0.5 ** stage), 0.5 ** stage)
    h_star, i_star = land(sample.omega_star)
    if neighbors is None:
        neighbors = sample_neighborhood(sample.omega_star, sc.radius, sc.n_samples, rng)
    eps, xi, hinge_coeffs = _hinge_terms(
        land, config.loss, config.conditions, sc, sample.omega_star, neighbors, h_star, i_star)
    coeffs = {i_star: 1.0}
    for j, c in hinge_coeffs.items():
        coeffs[j] = coeffs.get(j, 0.0) + sc.rho * c
    active = (eps if 1 in config.conditions else 0.0) + (xi if 2 in config.conditions else 0.0)
    total = h_star if config.loss is LossKind.PLAIN else h_star + sc.rho * active
    if backprop:
        g_t, g_s = land.feature_grads({j: weight * c for j, c in coeffs.items()})
        backward(net, ft, [None] * (stage - 1) + [g_t], stages=[stage])
        backward(net, fs, [None] * (stage - 1) + [g_s], stages=[stage])
    return LossTerms(total, h_star, eps, xi)


def prise_loss(net, sample, stage, config, neighbors=None, rng=None, backprop=True):
    """Strong star-convexity objective (``config.loss`` is forced to PRISE)."""
    if config.loss is not LossKind.PRISE:
        config = TrainConfig(**{**config.__dict__, "loss": LossKind.PRISE})
    return stage_loss(net, sample, stage, config, neighbors, rng, backprop)


def deeplk_loss(net, sample, stage, config, neighbors=None, rng=None, backprop=True):
    """DeepLK-condition objective used as the ablation baseline."""
    if config.loss is not LossKind.DEEPLK:
        config = TrainConfig(**{**config.__dict__, "loss": LossKind.DEEPLK})
    return stage_loss(net, sample, stage, config, neighbors, rng, backprop)


@dataclass
class EpochRecord:
    epoch: int
    lk_loss: float
    hinge_eps: float
    hinge_xi: float
    total: float


@dataclass
class History:
    stage: int
    records: list = field(default_factory=list)

    def hinge(self):
        return np.array([r.hinge_eps + r.hinge_xi for r in self.records])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage", "epoch", "lk_loss", "hinge_eps", "hinge_xi", "total"])
            for r in self.records:
                writer.writerow([self.stage, r.epoch] + [repr(v) for v in (r.lk_loss, r.hinge_eps, r.hinge_xi, r.total)])


def train_stage(dataset, net, stage, config):
    """Adam on ``stage``'s parameters for ``config.epochs`` passes over ``dataset``."""
    if not 1 <= stage <= net.config.n_stages:
        raise InvalidConfig(f"stage {stage} outside 1..{net.config.n_stages}")
    rng = np.random.default_rng([config.seed, stage])
    history = History(stage)
    n = len(dataset)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sums = np.zeros(4)
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            for i in batch:
                terms = stage_loss(net, dataset[i], stage, config, rng=rng, weight=1.0 / len(batch))
                sums += (terms.lk, terms.eps, terms.xi, terms.total)
            adam_step(net, config.lr, config.beta1, config.beta2, 1e-8, config.weight_decay, stages=[stage])
        history.records.append(EpochRecord(epoch, *(sums / n)))
    return net, history


def train_all(dataset, config, net_config=None, net=None):
    """Stacked schedule: train stage 1 to convergence, then 2, and so on."""
    if net is None:
        net = init_network(net_config)
    histories = []
    for stage in range(1, net.config.n_stages + 1):
        net, history = train_stage(dataset, net, stage, config)
        histories.append(history)
    return net, histories


def synthetic_dataset(n, spec, seed, n_blobs=12):
    """``n`` pairs generated from independent smooth random base images."""
    from .imaging import generate_pair, smooth_image

    rng = np.random.default_rng(seed)
    frame = spec.frame()
    out = []
    for _ in range(n):
        base = smooth_image(spec.canvas_size, rng, n_blobs)
        source, template, omega_star = generate_pair(base, spec, rng)
        out.append(TrainSample(source.data, template.data, omega_star, frame))
    return out
