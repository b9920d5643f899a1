"""Generator and discriminator assembly.

Two generator variants share one upsampling trunk:

* ``iagan``  takes a Gaussian latent plus a conditioning image.  The image
  is encoded by three stride-2 convolutions (attention after stage 2) down
  to an S/8 grid; the latent passes a dense layer and ReLU, is reshaped to
  an S/8 grid, and the two are channel-concatenated before the trunk.
* ``dcgan``  takes the latent only; the dense projection feeds the trunk
  directly.

Trunk: one inception-residual fusion block at S/8, then three stride-2
transpose-conv stages (each batchnorm + ReLU + inception-residual block,
self-attention after the first stage, i.e. at S/4), and a final 3x3
convolution into tanh.

The discriminator is a 4-layer stride-2 CNN (leaky ReLU 0.2, batchnorm on
layers 2..4) ending in a dense sigmoid head.  ``discriminate`` also returns
the flattened activation of a configurable tap layer, which the anomaly
scorer uses as an image-characteristic feature.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import layers as L
from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError, IntegrityError
from .layers import AttentionParams, BlockParams, ConvSpec, RunningStats
from .seeds import rng_for
from .tensor import Tensor

_SIZES = (16, 32, 64, 128)
INIT_STD = 0.02


@dataclass
class GeneratorConfig:
    image_size: int = 32
    z_dim: int = 120
    base_channels: int = 32
    variant: str = "iagan"
    seed: int = 0

    def __post_init__(self):
        if self.image_size not in _SIZES:
            raise ConfigError(f"image size {self.image_size} unsupported, choose from {_SIZES}")
        if self.z_dim < 1:
            raise ConfigError("z_dim must be >= 1")
        if self.variant not in ("iagan", "dcgan"):
            raise ConfigError(f"variant {self.variant!r} must be iagan or dcgan")
        if self.base_channels < 4:
            raise ConfigError("base_channels must be >= 4 (branch split needs 4 channels)")


@dataclass
class DiscriminatorConfig:
    image_size: int = 32
    base_channels: int = 32
    feature_tap_layer: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.image_size not in _SIZES:
            raise ConfigError(f"image size {self.image_size} unsupported, choose from {_SIZES}")
        if not 1 <= self.feature_tap_layer <= 4:
            raise ConfigError("feature tap layer must be in 1..4")


def truncated_normal(rng: np.random.Generator, shape, std: float = INIT_STD) -> np.ndarray:
    """N(0, std) redrawn until inside two standard deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class NetworkParams:
    """Named learnable tensors plus batchnorm buffers and an arch fingerprint."""

    def __init__(self, kind: str, config, params: dict[str, Tensor], buffers: dict[str, RunningStats]):
        self.kind = kind
        self.config = config
        self.params = params
        self.buffers = buffers
        self.fingerprint = self._fingerprint()

    def _config_items(self) -> list[tuple[str, str]]:
        cfg = self.config
        skip = {"seed"}  # seed changes weights, not architecture
        return sorted((k, str(v)) for k, v in vars(cfg).items() if k not in skip)

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.encode())
        for k, v in self._config_items():
            h.update(f"|{k}={v}".encode())
        for name in sorted(self.params):
            h.update(f"|{name}:{self.params[name].shape}".encode())
        for name in sorted(self.buffers):
            h.update(f"|{name}:{self.buffers[name].mean.shape}".encode())
        return h.hexdigest()[:16]

    def n_parameters(self) -> int:
        return sum(t.size for t in self.params.values())

    def detached(self) -> "NetworkParams":
        """Read-only view: same arrays and buffers, gradients cannot flow."""
        out = NetworkParams.__new__(NetworkParams)
        out.kind = self.kind
        out.config = self.config
        out.params = {k: v.detach() for k, v in self.params.items()}
        out.buffers = self.buffers
        out.fingerprint = self.fingerprint
        return out

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self.params.items() if t.grad is not None}

    # --- checkpoint I/O -------------------------------------------------
    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        lines = [f"fingerprint {self.fingerprint}", f"kind {self.kind}"]
        for k, v in self._config_items():
            lines.append(f"cfg {k} {v}")
        lines.append(f"cfg seed {self.config.seed}")
        for name in sorted(self.params):
            arr = self.params[name].data
            fname = name.replace("/", "_") + ".iagt"
            T.save_iagt(directory / fname, arr)
            shape = ",".join(str(s) for s in arr.shape)
            lines.append(f"tensor {name} {shape} {fname}")
        for name in sorted(self.buffers):
            rs = self.buffers[name]
            for part, arr in (("mean", rs.mean), ("var", rs.var)):
                fname = f"{name}.{part}.iagt".replace("/", "_")
                T.save_iagt(directory / fname, arr)
                lines.append(f"buffer {name}.{part} {arr.shape[0]} {fname}")
        (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory) -> "NetworkParams":
        directory = Path(directory)
        manifest = directory / "manifest.txt"
        if not manifest.exists():
            raise IntegrityError(f"{directory}: no manifest.txt")
        stored_fp = None
        kind = None
        cfg_kv: dict[str, str] = {}
        tensor_rows: list[tuple[str, str]] = []
        buffer_rows: list[tuple[str, str]] = []
        for line in manifest.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            parts = line.split()
            if parts[0] == "fingerprint":
                stored_fp = parts[1]
            elif parts[0] == "kind":
                kind = parts[1]
            elif parts[0] == "cfg":
                cfg_kv[parts[1]] = parts[2]
            elif parts[0] == "tensor":
                tensor_rows.append((parts[1], parts[3]))
            elif parts[0] == "buffer":
                buffer_rows.append((parts[1], parts[3]))
        if kind == "generator":
            config = GeneratorConfig(
                image_size=int(cfg_kv["image_size"]),
                z_dim=int(cfg_kv["z_dim"]),
                base_channels=int(cfg_kv["base_channels"]),
                variant=cfg_kv["variant"],
                seed=int(cfg_kv.get("seed", 0)),
            )
        elif kind == "discriminator":
            config = DiscriminatorConfig(
                image_size=int(cfg_kv["image_size"]),
                base_channels=int(cfg_kv["base_channels"]),
                feature_tap_layer=int(cfg_kv["feature_tap_layer"]),
                seed=int(cfg_kv.get("seed", 0)),
            )
        else:
            raise IntegrityError(f"{directory}: unknown network kind {kind!r}")
        params = {
            name: Tensor(T.load_iagt(directory / fname), requires_grad=True)
            for name, fname in tensor_rows
        }
        stats: dict[str, dict[str, np.ndarray]] = {}
        for name, fname in buffer_rows:
            base, part = name.rsplit(".", 1)
            stats.setdefault(base, {})[part] = T.load_iagt(directory / fname)
        buffers = {base: RunningStats(d["mean"], d["var"]) for base, d in stats.items()}
        out = cls(kind, config, params, buffers)
        if stored_fp != out.fingerprint:
            raise IntegrityError(
                f"{directory}: fingerprint mismatch (stored {stored_fp}, rebuilt {out.fingerprint})"
            )
        return out


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------


def _attention_init(rng, c: int) -> AttentionParams:
    cq = L.attention_channels(c)
    return AttentionParams(
        query=Tensor(truncated_normal(rng, (cq, c, 1, 1)), requires_grad=True),
        key=Tensor(truncated_normal(rng, (cq, c, 1, 1)), requires_grad=True),
        value=Tensor(truncated_normal(rng, (c, c, 1, 1)), requires_grad=True),
        out=Tensor(truncated_normal(rng, (c, c, 1, 1)), requires_grad=True),
        gamma=Tensor(np.zeros(1), requires_grad=True),
    )


def _block_init(rng, cin: int, cout: int) -> BlockParams:
    c1, c3, c5, cp = L.branch_split(cout)

    def w(*shape):
        return Tensor(truncated_normal(rng, shape), requires_grad=True)

    def b(n):
        return Tensor(np.zeros(n), requires_grad=True)

    wres = bres = None
    if cin != cout:
        wres, bres = w(cout, cin, 1, 1), b(cout)
    return BlockParams(
        w1=w(c1, cin, 1, 1), b1=b(c1),
        w3=w(c3, cin, 3, 3), b3=b(c3),
        w5=w(c5, cin, 5, 5), b5=b(c5),
        wpool=w(cp, cin, 1, 1), bpool=b(cp),
        wres=wres, bres=bres, out_channels=cout,
    )


def _bn_init(c: int) -> tuple[Tensor, Tensor, RunningStats]:
    return (
        Tensor(np.ones(c), requires_grad=True),
        Tensor(np.zeros(c), requires_grad=True),
        RunningStats.init(c),
    )


class _ParamBag:
    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, RunningStats] = {}

    def add(self, name: str, t: Tensor) -> Tensor:
        self.params[name] = t
        return t

    def add_bn(self, name: str, c: int) -> None:
        gamma, beta, running = _bn_init(c)
        self.params[f"{name}.gamma"] = gamma
        self.params[f"{name}.beta"] = beta
        self.buffers[name] = running

    def add_attention(self, name: str, ap: AttentionParams) -> None:
        self.params.update(ap.learnable(name))

    def add_block(self, name: str, bp: BlockParams) -> None:
        self.params.update(bp.learnable(name))


def init_generator(cfg: GeneratorConfig) -> NetworkParams:
    """Seeded truncated-normal initialization of all generator weights."""
    rng = rng_for(cfg.seed, "generator", cfg.variant)
    bag = _ParamBag()
    B = cfg.base_channels
    s8 = cfg.image_size // 8

    if cfg.variant == "iagan":
        enc_channels = [(1, B), (B, 2 * B), (2 * B, 4 * B)]
        for i, (cin, cout) in enumerate(enc_channels, start=1):
            bag.add(f"enc{i}.w", Tensor(truncated_normal(rng, (cout, cin, 3, 3)), requires_grad=True))
            bag.add(f"enc{i}.b", Tensor(np.zeros(cout), requires_grad=True))
            bag.add_bn(f"enc{i}.bn", cout)
        bag.add_attention("enc_attn", _attention_init(rng, 2 * B))

    zw = bag.add("zproj.w", Tensor(truncated_normal(rng, (cfg.z_dim, 4 * B * s8 * s8)), requires_grad=True))
    bag.add("zproj.b", Tensor(np.zeros(zw.shape[1]), requires_grad=True))

    fuse_in = 8 * B if cfg.variant == "iagan" else 4 * B
    bag.add_block("fuse.block", _block_init(rng, fuse_in, 4 * B))

    up_channels = [(4 * B, 2 * B), (2 * B, B), (B, B)]
    for i, (cin, cout) in enumerate(up_channels, start=1):
        bag.add(f"up{i}.w", Tensor(truncated_normal(rng, (cin, cout, 3, 3)), requires_grad=True))
        bag.add(f"up{i}.b", Tensor(np.zeros(cout), requires_grad=True))
        bag.add_bn(f"up{i}.bn", cout)
        bag.add_block(f"up{i}.block", _block_init(rng, cout, cout))
    bag.add_attention("up1.attn", _attention_init(rng, 2 * B))

    bag.add("out.w", Tensor(truncated_normal(rng, (1, B, 3, 3)), requires_grad=True))
    bag.add("out.b", Tensor(np.zeros(1), requires_grad=True))
    return NetworkParams("generator", cfg, bag.params, bag.buffers)


def init_discriminator(cfg: DiscriminatorConfig) -> NetworkParams:
    rng = rng_for(cfg.seed, "discriminator")
    bag = _ParamBag()
    B = cfg.base_channels
    chans = [(1, B), (B, 2 * B), (2 * B, 4 * B), (4 * B, 8 * B)]
    for i, (cin, cout) in enumerate(chans, start=1):
        bag.add(f"c{i}.w", Tensor(truncated_normal(rng, (cout, cin, 3, 3)), requires_grad=True))
        bag.add(f"c{i}.b", Tensor(np.zeros(cout), requires_grad=True))
        if i >= 2:
            bag.add_bn(f"c{i}.bn", cout)
    s16 = cfg.image_size // 16
    feat = 8 * B * s16 * s16
    bag.add("head.w", Tensor(truncated_normal(rng, (feat, 1)), requires_grad=True))
    bag.add("head.b", Tensor(np.zeros(1), requires_grad=True))
    return NetworkParams("discriminator", cfg, bag.params, bag.buffers)


# ----------------------------------------------------------------------
# forward passes
# ----------------------------------------------------------------------


def _get_attention(net: NetworkParams, prefix: str) -> AttentionParams:
    p = net.params
    return AttentionParams(
        query=p[f"{prefix}.query"], key=p[f"{prefix}.key"],
        value=p[f"{prefix}.value"], out=p[f"{prefix}.out"], gamma=p[f"{prefix}.gamma"],
    )


def _get_block(net: NetworkParams, prefix: str, cout: int) -> BlockParams:
    p = net.params
    return BlockParams(
        w1=p[f"{prefix}.w1"], b1=p[f"{prefix}.b1"],
        w3=p[f"{prefix}.w3"], b3=p[f"{prefix}.b3"],
        w5=p[f"{prefix}.w5"], b5=p[f"{prefix}.b5"],
        wpool=p[f"{prefix}.wpool"], bpool=p[f"{prefix}.bpool"],
        wres=p.get(f"{prefix}.wres"), bres=p.get(f"{prefix}.bres"),
        out_channels=cout,
    )


def _bn(net: NetworkParams, name: str, x: Tensor, mode: str) -> Tensor:
    return L.batchnorm(x, net.params[f"{name}.gamma"], net.params[f"{name}.beta"], mode, net.buffers[name])


def generate(net: NetworkParams, z, x_cond=None, mode: str = "infer") -> Tensor:
    """Map latent (and conditioning image for the iagan variant) to images.

    Output is tanh-bounded, shape [N, 1, S, S]; deterministic given weights
    and inputs (inference-mode batchnorm by default).
    """
    if net.kind != "generator":
        raise ContractError(f"generate needs generator params, got {net.kind}")
    cfg: GeneratorConfig = net.config
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim != 2 or z.shape[1] != cfg.z_dim:
        raise DimensionError(f"latent shape {z.shape} does not match z_dim {cfg.z_dim}")
    n = z.shape[0]
    B = cfg.base_channels
    S = cfg.image_size
    s8 = S // 8

    if cfg.variant == "iagan":
        if x_cond is None:
            raise ContractError("iagan generator requires a conditioning image batch")
        x_cond = x_cond if isinstance(x_cond, Tensor) else Tensor(x_cond)
        if x_cond.shape != (n, 1, S, S):
            raise DimensionError(f"conditioning batch shape {x_cond.shape} needs {(n, 1, S, S)}")
    elif x_cond is not None:
        raise ContractError("dcgan generator takes no conditioning input")

    h = L.dense(z, net.params["zproj.w"], net.params["zproj.b"])
    h = T.relu(h)
    h = T.reshape(h, (n, 4 * B, s8, s8))

    if cfg.variant == "iagan":
        e = x_cond
        enc_channels = [B, 2 * B, 4 * B]
        for i, cout in enumerate(enc_channels, start=1):
            cin = 1 if i == 1 else enc_channels[i - 2]
            e = L.conv2d(e, ConvSpec(cin, cout, 3, stride=2, padding=1), net.params[f"enc{i}.w"], net.params[f"enc{i}.b"])
            e = _bn(net, f"enc{i}.bn", e, mode)
            e = T.relu(e)
            if i == 2:
                e = L.self_attention(e, _get_attention(net, "enc_attn"))
        h = T.concat([h, e], axis=1)

    h = L.inception_residual_block(h, _get_block(net, "fuse.block", 4 * B))

    up_channels = [(4 * B, 2 * B), (2 * B, B), (B, B)]
    for i, (cin, cout) in enumerate(up_channels, start=1):
        h = L.conv2d_transpose(
            h, ConvSpec(cin, cout, 3, stride=2, padding=1, transpose=True),
            net.params[f"up{i}.w"], net.params[f"up{i}.b"],
        )
        h = _bn(net, f"up{i}.bn", h, mode)
        h = T.relu(h)
        h = L.inception_residual_block(h, _get_block(net, f"up{i}.block", cout))
        if i == 1:
            h = L.self_attention(h, _get_attention(net, "up1.attn"))

    h = L.conv2d(h, ConvSpec(B, 1, 3, padding=1), net.params["out.w"], net.params["out.b"])
    return T.tanh(h)


def discriminate(net: NetworkParams, x, mode: str = "infer") -> tuple[Tensor, Tensor]:
    """Probability of realness plus flattened tap-layer features."""
    if net.kind != "discriminator":
        raise ContractError(f"discriminate needs discriminator params, got {net.kind}")
    cfg: DiscriminatorConfig = net.config
    x = x if isinstance(x, Tensor) else Tensor(x)
    S = cfg.image_size
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != S or x.shape[3] != S:
        raise DimensionError(f"discriminator input shape {x.shape} needs [N,1,{S},{S}]")
    n = x.shape[0]
    B = cfg.base_channels
    chans = [(1, B), (B, 2 * B), (2 * B, 4 * B), (4 * B, 8 * B)]
    h = x
    features = None
    for i, (cin, cout) in enumerate(chans, start=1):
        h = L.conv2d(h, ConvSpec(cin, cout, 3, stride=2, padding=1), net.params[f"c{i}.w"], net.params[f"c{i}.b"])
        if i >= 2:
            h = _bn(net, f"c{i}.bn", h, mode)
        h = T.leaky_relu(h, 0.2)
        if i == cfg.feature_tap_layer:
            features = T.reshape(h, (n, h.size // n))
    flat = T.reshape(h, (n, h.size // n))
    logit = L.dense(flat, net.params["head.w"], net.params["head.b"])
    prob = T.sigmoid(logit)
    return prob, features
