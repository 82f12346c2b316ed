"""The parallel 3D-CNN / LSTM-attention classifier and its ablation variants.

Default shapes, batch axis omitted::

    CNN branch   (30,30,22,1) -> multiscale conv (3,5,7) -> BN -> ReLU -> pool
                 (30,30,22,96) -> (15,15,11,96) -> (15,15,11,192) -> (8,8,6,192)
                 -> (8,8,6,384) -> (4,4,3,384) -> (4,4,3,384) -> (2,2,2,384) -> 3072
    LSTM branch  (30,30,22) -> reshape (900,22) -> LSTM 256 -> attention 256 -> BN -> 256
    head         concat 3328 -> dropout 0.3 -> dense 4 -> (softmax)

The ``serial`` topology feeds the pooled CNN output, read as a sequence of
spatial positions (8 steps x 384 features by default), through the LSTM and
attention instead of the raw signal; there is no concat, so its feature
width is the LSTM width. ``conv_dim=2`` treats the EEG channels as feature
maps of a 30x30 image: kernels (k,k,1) and pooling (2,2,1).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import functional as F
from .autodiff.checkpoint import load_arrays, save_arrays
from .autodiff.layers import LSTM, AttentionPool, BatchNorm, Dense, Dropout, MultiScaleConv3d
from .autodiff.tensor import Parameter, Tensor, make_node, no_grad
from .errors import BadConfig, ShapeMismatch


@dataclass
class ModelConfig:
    conv_dim: int = 3
    topology: str = "parallel"
    filters: tuple[int, ...] = (32, 64, 128, 128)
    kernel_scales: tuple[int, ...] = (3, 5, 7)
    lstm_units: int = 256
    attention: bool = True
    dropout_p: float = 0.3
    n_classes: int = 4
    input_dims: tuple[int, int, int] = (30, 30, 22)
    seed: int = 0
    dtype: str = "float32"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.filters = tuple(self.filters)
        self.kernel_scales = tuple(self.kernel_scales)
        self.input_dims = tuple(self.input_dims)

    def validate(self) -> None:
        if self.conv_dim not in (2, 3):
            raise BadConfig(f"conv_dim must be 2 or 3, got {self.conv_dim}")
        if self.topology not in ("parallel", "serial"):
            raise BadConfig(f"topology must be 'parallel' or 'serial', got {self.topology!r}")
        if not self.filters or any(f < 1 for f in self.filters):
            raise BadConfig("filters must be a non-empty list of positive counts")
        if not self.kernel_scales or any(k < 1 or k % 2 == 0 for k in self.kernel_scales):
            raise BadConfig("kernel scales must be odd positive integers")
        if self.lstm_units < 1 or self.n_classes < 2:
            raise BadConfig("lstm_units must be >= 1 and n_classes >= 2")
        if not 0 <= self.dropout_p < 1:
            raise BadConfig("dropout_p must lie in [0, 1)")
        if len(self.input_dims) != 3 or min(self.input_dims) < 1:
            raise BadConfig(f"input_dims must be (H, W, C), got {self.input_dims}")
        if self.dtype not in ("float32", "float64"):
            raise BadConfig("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("filters", "kernel_scales", "input_dims"):
            d[key] = list(d[key])
        return d


def ci_config(**overrides) -> ModelConfig:
    """Desk-scale profile: 10x10x8 input, two stages of 8 filters, 16 LSTM units."""
    base = ModelConfig(filters=(8, 8), lstm_units=16, input_dims=(10, 10, 8))
    return replace(base, **overrides)


def _select_last(h: Tensor) -> Tensor:
    def backward_fn(g):
        out = np.zeros_like(h.data)
        out[:, -1] = g
        return (out,)

    return make_node(h.data[:, -1].copy(), (h,), backward_fn)


class CLMIModel:
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        dtype = np.dtype(cfg.dtype)
        init_rng = np.random.default_rng([cfg.seed, 0])
        self.rng = np.random.default_rng([cfg.seed, 1])  # dropout masks
        h, w, c = cfg.input_dims

        if cfg.conv_dim == 3:
            self.cnn_input_shape = (h, w, c, 1)
            self.pool = (2, 2, 2)
        else:
            self.cnn_input_shape = (h, w, 1, c)
            self.pool = (2, 2, 1)
        in_feat = self.cnn_input_shape[-1]
        dims = list(self.cnn_input_shape[:3])
        self.conv_blocks: list[MultiScaleConv3d] = []
        self.conv_bns: list[BatchNorm] = []
        for f in cfg.filters:
            block = MultiScaleConv3d(in_feat, f, init_rng, cfg.kernel_scales, cfg.conv_dim, dtype)
            self.conv_blocks.append(block)
            self.conv_bns.append(BatchNorm(block.out_features, cfg.bn_momentum, cfg.bn_eps, dtype))
            in_feat = block.out_features
            dims = [-(-d // p) for d, p in zip(dims, self.pool)]
        self.cnn_out_shape = tuple(dims) + (in_feat,)
        self.cnn_width = int(np.prod(self.cnn_out_shape))

        if cfg.topology == "parallel":
            self.seq_shape = (h * w, c)
        else:
            self.seq_shape = (int(np.prod(dims)), in_feat)
        self.lstm = LSTM(self.seq_shape[1], cfg.lstm_units, init_rng, dtype)
        self.attention = AttentionPool(cfg.lstm_units, init_rng, dtype=dtype) if cfg.attention else None
        self.lstm_bn = BatchNorm(cfg.lstm_units, cfg.bn_momentum, cfg.bn_eps, dtype)

        self.feature_width = cfg.lstm_units + (self.cnn_width if cfg.topology == "parallel" else 0)
        self.dropout = Dropout(cfg.dropout_p)
        self.head = Dense(self.feature_width, cfg.n_classes, init_rng, dtype)

    # --- registry ----------------------------------------------------------

    def _named_layers(self):
        for i, (block, bn) in enumerate(zip(self.conv_blocks, self.conv_bns), start=1):
            yield f"cnn.conv{i}", block
            yield f"cnn.bn{i}", bn
        yield "lstm", self.lstm
        if self.attention is not None:
            yield "attention", self.attention
        yield "lstm_bn", self.lstm_bn
        yield "head", self.head

    def parameters(self) -> dict[str, Parameter]:
        return {f"{ln}.{pn}": p for ln, layer in self._named_layers() for pn, p in layer.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{bn}": b for ln, layer in self._named_layers() for bn, b in layer.buffers.items()}

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data for name, p in self.parameters().items()}
        state.update(self.buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        targets = {name: p.data for name, p in self.parameters().items()}
        targets.update(self.buffers())
        missing = set(targets) - set(state)
        extra = set(state) - set(targets)
        if missing or extra:
            raise ShapeMismatch(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, arr in targets.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ShapeMismatch(f"{name}: checkpoint shape {src.shape}, model shape {arr.shape}")
            arr[...] = src

    def save(self, path) -> None:
        save_arrays(self.state_dict(), path)

    def load(self, path) -> None:
        self.load_state_dict(load_arrays(path))

    # --- forward -----------------------------------------------------------

    def _cnn(self, x: Tensor, training: bool, trace):
        for i, (block, bn) in enumerate(zip(self.conv_blocks, self.conv_bns), start=1):
            x = block(x)
            if trace is not None:
                for letter, conv in zip("abcdefgh", block.branches):
                    trace.append((f"conv{i}{letter}", x.shape[1:-1] + (conv.weight.shape[-1],)))
                trace.append((f"conv{i}", x.shape[1:]))
            x = F.relu(bn(x, training))
            if trace is not None:
                trace.append((f"bn{i}", x.shape[1:]))
            x = F.maxpool3d_same(x, self.pool)
            if trace is not None:
                trace.append((f"pool{i}", x.shape[1:]))
        return x

    def _lstm_branch(self, seq: Tensor, training: bool, trace):
        hs = self.lstm(seq)
        if trace is not None:
            trace.append(("lstm_sequence", hs.shape[1:]))
        pooled = self.attention(hs) if self.attention is not None else _select_last(hs)
        if trace is not None:
            trace.append(("attention", pooled.shape[1:]))
        out = self.lstm_bn(pooled, training)
        if trace is not None:
            trace.append(("bn_lstm", out.shape[1:]))
        return out

    def forward(self, batch, training: bool = False, trace: list | None = None) -> tuple[Tensor, Tensor]:
        """Run a batch of (B, H, W, C) volumes.

        Returns pre-softmax logits (B, n_classes) and the pre-dropout feature
        vector (B, feature_width). ``trace``, if given, collects
        (layer name, output shape without batch axis) pairs.
        """
        vol = batch.data if isinstance(batch, Tensor) else np.asarray(batch)
        if vol.ndim != 4 or vol.shape[1:] != self.cfg.input_dims:
            raise ShapeMismatch(f"expected batch of shape (B, {', '.join(map(str, self.cfg.input_dims))}), got {vol.shape}")
        vol = Tensor(vol.astype(self.cfg.dtype, copy=False))
        bsz = vol.shape[0]
        if trace is not None:
            trace.append(("input", self.cnn_input_shape))
        cnn = self._cnn(F.reshape(vol, (bsz,) + self.cnn_input_shape), training, trace)
        if self.cfg.topology == "parallel":
            flat_cnn = F.flatten(cnn)
            if trace is not None:
                trace.append(("flatten_cnn", flat_cnn.shape[1:]))
            seq = F.reshape(vol, (bsz,) + self.seq_shape)
            if trace is not None:
                trace.append(("reshape", seq.shape[1:]))
            lstm_out = F.flatten(self._lstm_branch(seq, training, trace))
            if trace is not None:
                trace.append(("flatten_lstm", lstm_out.shape[1:]))
            features = F.concat([flat_cnn, lstm_out])
            if trace is not None:
                trace.append(("concat", features.shape[1:]))
        else:
            seq = F.reshape(cnn, (bsz,) + self.seq_shape)
            if trace is not None:
                trace.append(("reshape", seq.shape[1:]))
            features = F.flatten(self._lstm_branch(seq, training, trace))
        logits = self.head(self.dropout(features, self.rng, training))
        if trace is not None:
            trace.append(("logits", logits.shape[1:]))
        return logits, features

    __call__ = forward

    def predict_proba(self, batch, batch_size: int = 256) -> np.ndarray:
        out = []
        with no_grad():
            for s in range(0, len(batch), batch_size):
                logits, _ = self.forward(batch[s : s + batch_size], training=False)
                out.append(F.softmax(logits).data)
        return np.concatenate(out) if out else np.zeros((0, self.cfg.n_classes))

    def extract_features(self, batch, batch_size: int = 256) -> np.ndarray:
        out = []
        with no_grad():
            for s in range(0, len(batch), batch_size):
                out.append(self.forward(batch[s : s + batch_size], training=False)[1].data)
        return np.concatenate(out) if out else np.zeros((0, self.feature_width))

    def shape_trace(self, batch_size: int = 1) -> list[tuple[str, tuple[int, ...]]]:
        """Layer-by-layer output shapes from one inference pass on zeros."""
        trace: list = []
        with no_grad():
            self.forward(np.zeros((batch_size,) + self.cfg.input_dims, dtype=self.cfg.dtype), False, trace)
        return trace


def build_model(cfg: ModelConfig | None = None) -> CLMIModel:
    return CLMIModel(cfg or ModelConfig())


ABLATION_NAMES = (
    "2D CNN | CNN-LSTM parallel",
    "3D CNN | CNN-LSTM serial",
    "3D CNN | CNN-LSTM parallel",
)


def build_ablation_suite(base: ModelConfig | None = None) -> list[tuple[str, ModelConfig]]:
    """The three convolution-method x network-structure variants; the last is ``base`` itself."""
    base = base or ModelConfig()
    return [
        (ABLATION_NAMES[0], replace(base, conv_dim=2, topology="parallel")),
        (ABLATION_NAMES[1], replace(base, conv_dim=3, topology="serial")),
        (ABLATION_NAMES[2], replace(base)),
    ]
