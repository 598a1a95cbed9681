"""
MCS-Net embedding network.

BL1 -> BL2 -> CS-SE -> BL3 -> CS-SE -> PL with the default `se_placement`.
Inputs are stacked feature maps laid out [2, frames, bins] (single) or
[N, 2, frames, bins] (batch); frames is the time axis throughout.
"""

from typing import Optional

import numpy as np
from loguru import logger

from protosed.core.config import ModelConfig
from protosed.core.errors import DimensionError, InputError
from protosed.tensor import (
    ParamStore,
    Tensor,
    as_tensor,
    avg_pool2d,
    batchnorm,
    conv1d,
    conv2d,
    fully_connected,
    global_avg_pool,
    leaky_relu,
    no_grad,
    sigmoid,
)

IN_CHANNELS = 2
N_BL_BLOCKS = 3
POOL = 2
MIN_FRAMES = POOL ** N_BL_BLOCKS
PL_KERNEL = 3


def _kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


def _add_conv(store: ParamStore, rng, name: str, c_out: int, c_in: int, k: int, bias: bool = False):
    store.add(f"{name}.weight", _kaiming_uniform(rng, (c_out, c_in, k, k), c_in * k * k))
    if bias:
        store.add(f"{name}.bias", np.zeros(c_out, dtype=np.float32))


def _add_fc(store: ParamStore, rng, name: str, n_out: int, n_in: int):
    store.add(f"{name}.weight", _kaiming_uniform(rng, (n_out, n_in), n_in))
    store.add(f"{name}.bias", np.zeros(n_out, dtype=np.float32))


def _add_bn(store: ParamStore, name: str, channels: int):
    store.add(f"{name}.gamma", np.ones(channels, dtype=np.float32))
    store.add(f"{name}.beta", np.zeros(channels, dtype=np.float32))
    store.add_buffer(f"{name}.running_mean", np.zeros(channels, dtype=np.float32))
    store.add_buffer(f"{name}.running_var", np.ones(channels, dtype=np.float32))


def init_params(config: ModelConfig, n_bins: int = 128, seed: int = 0) -> ParamStore:
    """
    Fresh parameters for an MCS-Net.

    Convolutions and fully connected layers use Kaiming-uniform fan-in
    initialization with zero biases; batch norms start at gamma=1, beta=0.

    Args:
        config: network shape
        n_bins: frequency bins of the input feature map
        seed: initialization seed

    Returns:
        ParamStore holding every parameter and BN buffer
    """
    if n_bins < MIN_FRAMES:
        raise DimensionError(f"feature maps need at least {MIN_FRAMES} bins, got {n_bins}")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    c = config.base_channels

    c_in = IN_CHANNELS
    for index in range(1, N_BL_BLOCKS + 1):
        prefix = f"bl{index}"
        _add_conv(store, rng, f"{prefix}.conv", c, c_in, 3)
        _add_bn(store, f"{prefix}.bn", c)
        for part in ("res1", "res2"):
            _add_conv(store, rng, f"{prefix}.{part}.conv", c, c, 3)
            _add_bn(store, f"{prefix}.{part}.bn", c)
        c_in = c

    if config.attention:
        hidden = c // config.reduction_rate
        for index in config.se_placement:
            prefix = f"se{index}"
            if config.se_branches in ("both", "channel"):
                _add_fc(store, rng, f"{prefix}.fc_reduce", hidden, c)
                _add_fc(store, rng, f"{prefix}.fc_expand", c, hidden)
            if config.se_branches in ("both", "spatial"):
                _add_conv(store, rng, f"{prefix}.spatial", 1, c, 1, bias=True)

    fused = c * (n_bins // MIN_FRAMES)
    store.add("pl.conv.weight", _kaiming_uniform(rng, (config.embedding_dim, fused, PL_KERNEL), fused * PL_KERNEL))
    _add_bn(store, "pl.bn", config.embedding_dim)
    _add_fc(store, rng, "pl.fc", config.embedding_dim, config.embedding_dim)
    return store


def _bn(x: Tensor, params: ParamStore, name: str, config: ModelConfig, training: bool) -> Tensor:
    return batchnorm(
        x,
        params[f"{name}.gamma"],
        params[f"{name}.beta"],
        running=params.running_stats(name),
        training=training,
        eps=config.bn_eps,
        momentum=config.bn_momentum,
    )


def bl_block(x: Tensor, params: ParamStore, prefix: str, config: ModelConfig, training: bool = False) -> Tensor:
    """conv3x3 -> BN -> leaky -> residual(conv-BN-leaky-conv-BN + skip, leaky) -> avgpool 2"""
    if x.shape[-1] < POOL or x.shape[-2] < POOL:
        raise DimensionError(f"{prefix}: spatial dims {x.shape[-2:]} too small to pool")
    slope = config.leaky_slope
    h = leaky_relu(_bn(conv2d(x, params[f"{prefix}.conv.weight"], padding=1), params, f"{prefix}.bn", config, training), slope)

    r = conv2d(h, params[f"{prefix}.res1.conv.weight"], padding=1)
    r = leaky_relu(_bn(r, params, f"{prefix}.res1.bn", config, training), slope)
    r = conv2d(r, params[f"{prefix}.res2.conv.weight"], padding=1)
    r = _bn(r, params, f"{prefix}.res2.bn", config, training)

    return avg_pool2d(leaky_relu(r + h, slope), POOL)


def channel_excitation(
    x: Tensor,
    w_reduce: Tensor,
    b_reduce: Optional[Tensor],
    w_expand: Tensor,
    b_expand: Optional[Tensor],
    slope: float = 0.01,
) -> Tensor:
    """
    Channel squeeze-and-excitation.

    G = global average pool of x; G_hat = W_expand(leaky(W_reduce G));
    channel k of the output is sigmoid(G_hat_k) * x_k.
    """
    channels = x.shape[-3]
    if w_reduce.shape[1] != channels or w_expand.shape[0] != channels:
        raise DimensionError(
            f"channel excitation over {channels} channels got weights {w_reduce.shape}, {w_expand.shape}"
        )
    squeezed = global_avg_pool(x)
    excitation = fully_connected(leaky_relu(fully_connected(squeezed, w_reduce, b_reduce), slope), w_expand, b_expand)
    scale = sigmoid(excitation)
    return x * scale.reshape(*scale.shape, 1, 1)


def spatial_excitation(x: Tensor, q_weight: Tensor, q_bias: Optional[Tensor] = None) -> Tensor:
    """Per-location gate sigmoid(q_ij) from a 1x1 convolution collapsing channels"""
    return x * sigmoid(conv2d(x, q_weight, q_bias))


def cs_se(x: Tensor, params: ParamStore, prefix: str, config: ModelConfig) -> Tensor:
    """Sum of the channel and spatial excitation branches"""
    branches = []
    if config.se_branches in ("both", "channel"):
        branches.append(
            channel_excitation(
                x,
                params[f"{prefix}.fc_reduce.weight"],
                params[f"{prefix}.fc_reduce.bias"],
                params[f"{prefix}.fc_expand.weight"],
                params[f"{prefix}.fc_expand.bias"],
                config.leaky_slope,
            )
        )
    if config.se_branches in ("both", "spatial"):
        branches.append(spatial_excitation(x, params[f"{prefix}.spatial.weight"], params[f"{prefix}.spatial.bias"]))
    out = branches[0]
    for branch in branches[1:]:
        out = out + branch
    return out


def pl_block(x: Tensor, params: ParamStore, config: ModelConfig, training: bool = False) -> Tensor:
    """
    Projection layer.

    Fuses channel and frequency axes into [C*W', H'], then conv1d over time,
    BN, leaky-ReLU, average over time and a fully connected projection.
    """
    single = x.ndim == 3
    if single:
        x = x.reshape(1, *x.shape)
    n, c, frames, bins = x.shape
    fused = x.transpose(0, 1, 3, 2).reshape(n, c * bins, frames)
    h = conv1d(fused, params["pl.conv.weight"], padding=PL_KERNEL // 2)
    h = leaky_relu(_bn(h, params, "pl.bn", config, training), config.leaky_slope)
    pooled = h.mean(axis=2)
    out = fully_connected(pooled, params["pl.fc.weight"], params["pl.fc.bias"])
    return out.reshape(out.shape[1]) if single else out


class MCSNet:
    """Embedding network bound to its parameters"""

    def __init__(self, config: Optional[ModelConfig] = None, n_bins: int = 128, params: Optional[ParamStore] = None, seed: int = 0):
        self.config = config or ModelConfig()
        self.n_bins = n_bins
        self.params = params if params is not None else init_params(self.config, n_bins, seed)
        logger.debug(f"MCS-Net ready: {len(self.params)} parameter tensors, attention={self.config.attention}")

    def forward(self, features, training: bool = False) -> Tensor:
        """
        Embed one feature map or a batch.

        Args:
            features: [2, frames, bins] or [N, 2, frames, bins]
            training: batch statistics for BN (and running-stat updates)

        Returns:
            [embedding_dim] or [N, embedding_dim]
        """
        x = as_tensor(features, dtype=self.params["pl.fc.weight"].dtype)
        if x.ndim not in (3, 4) or x.shape[-3] != IN_CHANNELS:
            raise DimensionError(f"expected [2, frames, bins] feature maps, got {x.shape}")
        frames, bins = x.shape[-2:]
        if frames < MIN_FRAMES:
            raise InputError(
                f"input has {frames} frames; at least {MIN_FRAMES} are needed to survive {N_BL_BLOCKS} poolings"
            )
        if bins != self.n_bins:
            raise DimensionError(f"network built for {self.n_bins} bins, input has {bins}")

        single = x.ndim == 3
        if single:
            x = x.reshape(1, *x.shape)
        for index in range(1, N_BL_BLOCKS + 1):
            x = bl_block(x, self.params, f"bl{index}", self.config, training)
            if self.config.attention and index in self.config.se_placement:
                x = cs_se(x, self.params, f"se{index}", self.config)
        out = pl_block(x, self.params, self.config, training)
        return out.reshape(out.shape[1]) if single else out

    __call__ = forward

    def embed(self, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
        """Eval-mode embeddings of [N, 2, frames, bins] without building a graph"""
        outputs = []
        with no_grad():
            for start in range(0, len(batch), batch_size):
                outputs.append(self.forward(batch[start:start + batch_size], training=False).data)
        if not outputs:
            return np.zeros((0, self.config.embedding_dim), dtype=np.float32)
        return np.concatenate(outputs, axis=0)
