"""Multi-stage siamese convolutional feature extractor with exact reverse-mode gradients.

Stage ``k`` maps its input (the image for stage 1, the previous stage's
features otherwise) through a stride-2 entry convolution followed by
``blocks_per_stage`` residual blocks ``x + conv(relu(conv(x)))``. All
convolutions use zero "same" padding. One parameter set processes both
images of a pair.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import ConfigMismatch, CorruptFile, InvalidConfig, NoForwardState, ShapeTooSmall
from .imaging import as_array
from .tensorio import decode_tensor, encode_tensor

MIN_FEATURE_SIZE = 4
WEIGHTS_MAGIC = b"PRSW"


@dataclass(frozen=True)
class NetConfig:
    n_stages: int = 3
    blocks_per_stage: int = 1
    filters: int = 8
    kernel: int = 3
    stage_stride: int = 2
    activation: str = "relu"
    in_channels: int = 1
    seed: int = 0
    dtype: str = "float32"

    def validate(self):
        if self.n_stages < 1 or self.filters < 1 or self.in_channels < 1:
            raise InvalidConfig("n_stages, filters and in_channels must be >= 1")
        if self.blocks_per_stage < 0:
            raise InvalidConfig("blocks_per_stage must be >= 0")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidConfig("kernel must be a positive odd size")
        if self.stage_stride < 1:
            raise InvalidConfig("stage_stride must be >= 1")
        if self.activation != "relu":
            raise InvalidConfig(f"unsupported activation {self.activation!r}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfig("dtype must be float32 or float64")
        return self

    @classmethod
    def paper_scale(cls, **overrides):
        """Three stages of three 64-filter residual blocks."""
        return cls(**{"n_stages": 3, "blocks_per_stage": 3, "filters": 64, **overrides})


def _conv_names(config):
    """(name, in_channels, stride) for every convolution, in forward order."""
    names = []
    for k in range(1, config.n_stages + 1):
        cin = config.in_channels if k == 1 else config.filters
        names.append((f"s{k}.entry", cin, config.stage_stride))
        for j in range(config.blocks_per_stage):
            names.append((f"s{k}.b{j}.conv1", config.filters, 1))
            names.append((f"s{k}.b{j}.conv2", config.filters, 1))
    return names


def stage_of(name):
    return int(name.split(".", 1)[0][1:])


class FeatureNetwork:
    """Parameters, gradient buffers and Adam moments keyed by tensor name."""

    def __init__(self, config, params):
        self.config = config
        self.params = params
        self.grads = {n: np.zeros(p.shape) for n, p in params.items()}
        self.adam_m = {n: np.zeros(p.shape) for n, p in params.items()}
        self.adam_v = {n: np.zeros(p.shape) for n, p in params.items()}
        self.adam_t = 0
        self.version = 0

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def num_parameters(self):
        return sum(p.size for p in self.params.values())

    def stage_params(self, stage):
        return {n: p for n, p in self.params.items() if stage_of(n) == stage}

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def astype(self, dtype):
        """Copy of the network with parameters cast to ``dtype`` (moments reset)."""
        config = NetConfig(**{**asdict(self.config), "dtype": np.dtype(dtype).name})
        return FeatureNetwork(config, {n: p.astype(dtype) for n, p in self.params.items()})

    def copy(self):
        net = FeatureNetwork(self.config, {n: p.copy() for n, p in self.params.items()})
        net.adam_m = {n: m.copy() for n, m in self.adam_m.items()}
        net.adam_v = {n: v.copy() for n, v in self.adam_v.items()}
        net.adam_t = self.adam_t
        return net


def init_network(config):
    """Uniform He initialisation (variance 2 / fan_in), zero biases, seeded."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    params = {}
    k = config.kernel
    for name, cin, _ in _conv_names(config):
        fan_in = cin * k * k
        bound = np.sqrt(6.0 / fan_in)
        params[name + ".w"] = rng.uniform(-bound, bound, (config.filters, cin, k, k)).astype(dtype)
        params[name + ".b"] = np.zeros(config.filters, dtype=dtype)
    return FeatureNetwork(config, params)


class FeatureStack(list):
    """Per-stage feature maps plus the activations needed for backprop."""

    def __init__(self, maps, tape, version):
        super().__init__(maps)
        self.tape = tape
        self.version = version


def _conv(net, name, x, stride):
    pad = net.config.kernel // 2
    return kernels.conv2d_forward(x, net.params[name + ".w"], net.params[name + ".b"], stride, pad)


def forward(net, img, upto_stage=None, start_stage=1):
    """Feature maps of stages ``start_stage..upto_stage`` for a single image.

    With ``start_stage > 1`` the input is taken to be the features of stage
    ``start_stage - 1`` rather than an image.
    """
    cfg = net.config
    upto_stage = cfg.n_stages if upto_stage is None else upto_stage
    if not 1 <= start_stage <= upto_stage <= cfg.n_stages:
        raise InvalidConfig(f"stages {start_stage}..{upto_stage} outside 1..{cfg.n_stages}")
    x = np.ascontiguousarray(as_array(img), dtype=net.dtype)
    maps, tape = [], []
    for k in range(start_stage, upto_stage + 1):
        h = (x.shape[1] - 1) // cfg.stage_stride + 1
        w = (x.shape[2] - 1) // cfg.stage_stride + 1
        if min(h, w) < MIN_FEATURE_SIZE:
            raise ShapeTooSmall(f"stage {k} would produce {h}x{w} features")
        rec = {"stage": k, "input": x, "blocks": []}
        e = _conv(net, f"s{k}.entry", x, cfg.stage_stride)
        for j in range(cfg.blocks_per_stage):
            a = _conv(net, f"s{k}.b{j}.conv1", e, 1)
            r = np.maximum(a, 0)
            rec["blocks"].append((e, a, r))
            e = e + _conv(net, f"s{k}.b{j}.conv2", r, 1)
        maps.append(e)
        tape.append(rec)
        x = e
    return FeatureStack(maps, tape, net.version)


def _conv_backward(net, name, x, gout, stride, accumulate):
    pad = net.config.kernel // 2
    gx, gw, gb = kernels.conv2d_backward(x, net.params[name + ".w"], gout, stride, pad)
    if accumulate:
        net.grads[name + ".w"] += gw
        net.grads[name + ".b"] += gb
    return gx


def backward(net, outputs, grads, stages=None):
    """Accumulate d(loss)/d(params) into ``net.grads``.

    ``outputs`` is the :class:`FeatureStack` from :func:`forward`; ``grads``
    lists d(loss)/d(feature map) per recorded stage (``None`` for no
    contribution). Only stages in ``stages`` (default: all recorded) receive
    gradients; propagation stops below the lowest of them. Returns the
    gradient w.r.t. the lowest propagated stage's input.
    """
    if not isinstance(outputs, FeatureStack) or not outputs.tape:
        raise NoForwardState("backward needs the FeatureStack returned by forward")
    if outputs.version != net.version:
        raise NoForwardState("parameters changed since this forward pass")
    cfg = net.config
    recorded = [rec["stage"] for rec in outputs.tape]
    stages = set(recorded if stages is None else stages)
    lowest = min(stages)
    g_next = None
    for rec, g_out in zip(reversed(outputs.tape), reversed(list(grads) + [None] * (len(recorded) - len(grads)))):
        k = rec["stage"]
        if k < lowest:
            break
        g = np.zeros(outputs[recorded.index(k)].shape)
        if g_out is not None:
            g = g + np.asarray(g_out, dtype=np.float64)
        if g_next is not None:
            g = g + g_next
        train = k in stages
        for j in reversed(range(cfg.blocks_per_stage)):
            e, a, r = rec["blocks"][j]
            gr = _conv_backward(net, f"s{k}.b{j}.conv2", r, g, 1, train)
            ga = gr * (a > 0)
            g = g + _conv_backward(net, f"s{k}.b{j}.conv1", e, ga, 1, train)
        g_next = _conv_backward(net, f"s{k}.entry", rec["input"], g, cfg.stage_stride, train)
    return g_next


def _selected(net, stages):
    if stages is None:
        return list(net.params)
    stages = set(stages)
    return [n for n in net.params if stage_of(n) in stages]


def sgd_step(net, learning_rate, weight_decay=0.0, stages=None):
    """p <- p (1 - lr wd) - lr g, then zero the gradients."""
    for n in _selected(net, stages):
        p = net.params[n]
        upd = p * (1.0 - learning_rate * weight_decay) - learning_rate * net.grads[n]
        net.params[n] = upd.astype(p.dtype)
    net.zero_grad()
    net.version += 1


def adam_step(net, lr, beta1=0.9, beta2=0.999, eps_hat=1e-8, weight_decay=0.0, stages=None):
    """Adam with decoupled weight decay; moments persist in ``net``."""
    net.adam_t += 1
    t = net.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for n in _selected(net, stages):
        g = net.grads[n]
        m = net.adam_m[n] = beta1 * net.adam_m[n] + (1.0 - beta1) * g
        v = net.adam_v[n] = beta2 * net.adam_v[n] + (1.0 - beta2) * g * g
        p = net.params[n].astype(np.float64)
        p = p * (1.0 - lr * weight_decay) - lr * (m / c1) / (np.sqrt(v / c2) + eps_hat)
        net.params[n] = p.astype(net.dtype)
    net.zero_grad()
    net.version += 1


def save_weights(net, path):
    """Magic ``PRSW``, u32 header length, JSON header, then one tensor per parameter."""
    dtype = net.dtype
    header = {
        "format": "prise-weights",
        "version": 1,
        "config": asdict(net.config),
        "tensors": [{"name": n, "shape": list(p.shape)} for n, p in net.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC + struct.pack("<I", len(blob)) + blob)
        for p in net.params.values():
            fh.write(encode_tensor(p, dtype))


def load_weights(path, expected_config=None):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8 or buf[:4] != WEIGHTS_MAGIC:
        raise CorruptFile("not a weights file")
    (hlen,) = struct.unpack_from("<I", buf, 4)
    if len(buf) < 8 + hlen:
        raise CorruptFile("truncated weights header")
    try:
        header = json.loads(buf[8:8 + hlen])
        config = NetConfig(**header["config"]).validate()
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptFile(f"unreadable weights header: {exc}") from None
    if expected_config is not None and expected_config != config:
        raise ConfigMismatch(f"file holds {config}, expected {expected_config}")
    expected = {name + s: None for name, _, _ in _conv_names(config) for s in (".w", ".b")}
    names = [t["name"] for t in header["tensors"]]
    if set(names) != set(expected):
        raise ConfigMismatch("tensor manifest does not match the network config")
    params = {}
    pos = 8 + hlen
    for spec in header["tensors"]:
        arr, pos = decode_tensor(buf, pos)
        if list(arr.shape) != spec["shape"]:
            raise ConfigMismatch(f"tensor {spec['name']} has shape {arr.shape}, manifest {spec['shape']}")
        params[spec["name"]] = arr.astype(config.dtype)
    if pos != len(buf):
        raise CorruptFile("trailing bytes after last tensor")
    template = init_network(config)
    for n, p in template.params.items():
        if params[n].shape != p.shape:
            raise ConfigMismatch(f"tensor {n} shape {params[n].shape} != {p.shape}")
    return FeatureNetwork(config, {n: params[n] for n in template.params})
