"""The ROI quality network: a 4-stage convolutional encoder, the mask-based
feature extractor producing global-view and local-view tokens, and per-task
classification heads over the assembled token triple.

Token flow for one (image, mask) pair:
  encode        -> F_1..F_4 multi-level features (strides 4, 8, 16, 32)
  basic_tokens  -> B_j = FC_j(mask_pool(mask, F_j)), 1×P each
  global_attn   -> G_j = attention(SA(B_j), proj(F_j), proj(F_j)), 1×P each
  fuse_global   -> F_gvt = FC1(concat(FC2(ΣB_j), FC3(ΣG_j)))
  local_token   -> F_lvt = FC(SA(CNN(cropped, 32×32-resized ROI patch)))
  heads         -> logits from concat(image token, F_gvt, F_lvt, task embedding)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import DISTORTION_TYPES, ImageBuffer, RegionMask
from .masks import coverage_fractions, crop_to_min_rect
from .nn.layers import ChannelAffine, Conv2d, Linear, ParamStore, SelfAttention
from .nn.tensor import (
    Tensor,
    add,
    attention,
    concat,
    gelu,
    mask_pool_op,
    matmul,
    reshape,
    spatial_mean,
    transpose2d,
)
from .nn.checkpoint import load_checkpoint, save_checkpoint

LOCAL_PATCH_SIZE = 32

INSTRUCTION_KINDS = (
    "AIR-quality",
    "AIR-importance",
    "AIR-distortion",
    "JIR-quality",
    "JIR-importance",
    "JIR-distortion",
)


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64  # S, divisible by 32
    token_dim: int = 64  # P
    channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    local_channels: tuple[int, int] = (12, 24)
    head_hidden: int = 64
    use_global: bool = True  # ablation: zero F_gvt into the heads
    use_local: bool = True  # ablation: zero F_lvt into the heads
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.input_size % 32 != 0:
            raise ValueError(f"input_size must be divisible by 32, got {self.input_size}")
        if len(self.channels) != 4:
            raise ValueError("exactly 4 encoder channel widths required")

    def to_json_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "token_dim": self.token_dim,
            "channels": list(self.channels),
            "local_channels": list(self.local_channels),
            "head_hidden": self.head_hidden,
            "use_global": self.use_global,
            "use_local": self.use_local,
            "init_seed": self.init_seed,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ModelConfig":
        known = {
            "input_size", "token_dim", "channels", "local_channels",
            "head_hidden", "use_global", "use_local", "init_seed",
        }
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "channels" in kwargs:
            kwargs["channels"] = tuple(kwargs["channels"])
        if "local_channels" in kwargs:
            kwargs["local_channels"] = tuple(kwargs["local_channels"])
        return ModelConfig(**kwargs)


@dataclass(frozen=True)
class TaskQuery:
    """Which instruction a forward pass answers; conditions the judgment head."""

    kind: str  # one of INSTRUCTION_KINDS
    queried_level: Optional[int] = None  # 0..4 for JIR quality/importance
    queried_dtype: Optional[int] = None  # 0..5 for JIR distortion

    def __post_init__(self) -> None:
        if self.kind not in INSTRUCTION_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")


@dataclass
class TaskLogits:
    quality: Tensor  # 5
    importance: Tensor  # 5
    presence: Tensor  # 6, independent per-type binary
    severity: Tensor  # 6×5
    judgment: Tensor  # 2 (No, Yes)


def resize_bilinear(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Plain bilinear resize of an H×W×C array (half-pixel centers)."""
    h, w = data.shape[:2]
    if (h, w) == (out_h, out_w):
        return np.array(data)
    ro = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    co = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    r0 = np.clip(np.floor(ro).astype(np.int64), 0, h - 1)
    c0 = np.clip(np.floor(co).astype(np.int64), 0, w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = np.clip(ro - r0, 0.0, 1.0)[:, None, None]
    fc = np.clip(co - c0, 0.0, 1.0)[None, :, None]
    top = data[r0][:, c0] * (1 - fc) + data[r0][:, c1] * fc
    bot = data[r1][:, c0] * (1 - fc) + data[r1][:, c1] * fc
    return top * (1 - fr) + bot * fr


class _EncoderStage:
    def __init__(self, store: ParamStore, name: str, c_in: int, c_out: int):
        self.down = Conv2d(store, f"{name}.down", c_in, c_out, stride=2)
        self.conv = Conv2d(store, f"{name}.conv", c_out, c_out, stride=1)
        self.affine = ChannelAffine(store, f"{name}.affine", c_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.affine(self.conv(gelu(self.down(x))))


class RoiQualityModel:
    """Encoder + MFE + heads; one instance is single-threaded per pass."""

    def __init__(self, config: ModelConfig):
        self.config = config
        store = ParamStore(np.random.default_rng(config.init_seed))
        self.store = store
        c1, c2, c3, c4 = config.channels
        p = config.token_dim

        self.stem = Conv2d(store, "enc.stem", 3, c1, stride=2)
        self.stages = [
            _EncoderStage(store, "enc.stage1", c1, c1),
            _EncoderStage(store, "enc.stage2", c1, c2),
            _EncoderStage(store, "enc.stage3", c2, c3),
            _EncoderStage(store, "enc.stage4", c3, c4),
        ]

        self.basic_fc = [Linear(store, f"mfe.basic_fc{j}", c, p) for j, c in enumerate(config.channels, 1)]
        self.key_fc = [Linear(store, f"mfe.key_fc{j}", c, p) for j, c in enumerate(config.channels, 1)]
        self.basic_sa = SelfAttention(store, "mfe.basic_sa", p)
        self.fuse_basic = Linear(store, "mfe.fuse_basic", p, p)  # FC_2
        self.fuse_global_fc = Linear(store, "mfe.fuse_global", p, p)  # FC_3
        self.fuse_out = Linear(store, "mfe.fuse_out", 2 * p, p)  # FC_1

        lc1, lc2 = config.local_channels
        self.local_conv1 = Conv2d(store, "local.conv1", 3, lc1, stride=2)
        self.local_conv2 = Conv2d(store, "local.conv2", lc1, lc2, stride=2)
        self.local_sa = SelfAttention(store, "local.sa", lc2)
        self.local_fc = Linear(store, "local.fc", lc2, p)

        self.image_fc = Linear(store, "img.fc", c4, p)

        self.kind_emb = store.create("task.kind_emb", (len(INSTRUCTION_KINDS), p), fan_in=p)
        self.level_emb = store.create("task.level_emb", (5, p), fan_in=p)
        self.dtype_emb = store.create("task.dtype_emb", (len(DISTORTION_TYPES), p), fan_in=p)

        h = config.head_hidden
        self.heads = {
            name: (Linear(store, f"head.{name}.fc1", 4 * p, h), Linear(store, f"head.{name}.fc2", h, out))
            for name, out in (
                ("quality", 5),
                ("importance", 5),
                ("presence", len(DISTORTION_TYPES)),
                ("severity", len(DISTORTION_TYPES) * 5),
                ("judgment", 2),
            )
        }

    # -- encoder -----------------------------------------------------------

    def encode(self, img: ImageBuffer) -> list[Tensor]:
        """Resize to S×S and extract the four feature levels."""
        s = self.config.input_size
        resized = resize_bilinear(img.data, s, s)
        x = Tensor(np.transpose(resized, (2, 0, 1)))  # 3×S×S
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats

    # -- MFE ---------------------------------------------------------------

    def _coverages(self, mask: RegionMask) -> list[np.ndarray]:
        s = self.config.input_size
        return [coverage_fractions(mask, s // stride, s // stride) for stride in (4, 8, 16, 32)]

    def basic_tokens(self, feats: list[Tensor], mask: RegionMask) -> list[Tensor]:
        """B_j: coverage-weighted pooled features projected to 1×P per level."""
        if mask.popcount == 0:
            raise ValueError("empty mask")
        tokens = []
        for feat, fc, cov in zip(feats, self.basic_fc, self._coverages(mask)):
            pooled = mask_pool_op(feat, cov)  # C_j
            tokens.append(fc(reshape(pooled, (1, -1))))
        return tokens

    def global_attention(self, basic: Tensor, feat: Tensor, level: int) -> Tensor:
        """G_j: cross-attention of the self-attended basic token over level features."""
        c, hj, wj = feat.data.shape
        seq = transpose2d(reshape(feat, (c, hj * wj)))  # (H·W)×C
        keys = self.key_fc[level](seq)  # (H·W)×P
        query = self.basic_sa(basic)  # length-1 self-attention
        return attention(query, keys, keys)

    def fuse_global(self, basics: list[Tensor], globals_: list[Tensor]) -> Tensor:
        """F_gvt = FC1(concat(FC2(ΣB_j), FC3(ΣG_j)))."""
        if len(basics) != 4 or len(globals_) != 4:
            raise ValueError("expected 4 basic and 4 global tokens")
        b_sum = basics[0]
        for t in basics[1:]:
            b_sum = add(b_sum, t)
        g_sum = globals_[0]
        for t in globals_[1:]:
            g_sum = add(g_sum, t)
        fused = concat([self.fuse_basic(b_sum), self.fuse_global_fc(g_sum)], axis=-1)
        return self.fuse_out(fused)

    def global_view_token(self, feats: list[Tensor], mask: RegionMask) -> Tensor:
        basics = self.basic_tokens(feats, mask)
        globals_ = [self.global_attention(b, f, j) for j, (b, f) in enumerate(zip(basics, feats))]
        return self.fuse_global(basics, globals_)

    def local_token(self, img: ImageBuffer, mask: RegionMask) -> Tensor:
        """F_lvt from the cropped, background-zeroed, 32×32-resized ROI patch."""
        roi = crop_to_min_rect(img, mask)
        patch = resize_bilinear(roi.patch.data, LOCAL_PATCH_SIZE, LOCAL_PATCH_SIZE)
        x = Tensor(np.transpose(patch, (2, 0, 1)))
        x = gelu(self.local_conv1(x))
        x = gelu(self.local_conv2(x))  # lc2×8×8
        c = x.data.shape[0]
        seq = transpose2d(reshape(x, (c, 64)))  # 64 positions × lc2
        attended = self.local_sa(seq)
        pooled = matmul(Tensor(np.ones((1, 64)) / 64.0), attended)  # mean over positions
        return self.local_fc(pooled)

    def _task_embedding(self, query: TaskQuery) -> Tensor:
        from .nn.tensor import row_select

        emb = reshape(row_select(self.kind_emb, INSTRUCTION_KINDS.index(query.kind)), (1, -1))
        if query.queried_level is not None:
            emb = add(emb, reshape(row_select(self.level_emb, query.queried_level), (1, -1)))
        if query.queried_dtype is not None:
            emb = add(emb, reshape(row_select(self.dtype_emb, query.queried_dtype), (1, -1)))
        return emb

    # Each analysis head always sees its own instruction embedding; the
    # judgment head sees the queried condition.
    _HEAD_KINDS = {
        "quality": TaskQuery("AIR-quality"),
        "importance": TaskQuery("AIR-importance"),
        "presence": TaskQuery("AIR-distortion"),
        "severity": TaskQuery("AIR-distortion"),
    }

    # -- full forward --------------------------------------------------------

    def forward(self, img: ImageBuffer, mask: RegionMask,
                query: Optional[TaskQuery] = None) -> TaskLogits:
        if not mask.matches(img):
            raise ValueError("mask does not match image")
        p = self.config.token_dim
        feats = self.encode(img)
        image_token = self.image_fc(reshape(spatial_mean(feats[3]), (1, -1)))
        if self.config.use_global:
            gvt = self.global_view_token(feats, mask)
        else:
            gvt = Tensor(np.zeros((1, p)))
        if self.config.use_local:
            lvt = self.local_token(img, mask)
        else:
            lvt = Tensor(np.zeros((1, p)))

        def run_head(name: str, out_shape: tuple[int, ...], q: TaskQuery) -> Tensor:
            trunk = concat([image_token, gvt, lvt, self._task_embedding(q)], axis=-1)
            fc1, fc2 = self.heads[name]
            return reshape(fc2(gelu(fc1(trunk))), out_shape)

        judgment_query = query if query is not None else TaskQuery("JIR-quality")
        return TaskLogits(
            quality=run_head("quality", (5,), self._HEAD_KINDS["quality"]),
            importance=run_head("importance", (5,), self._HEAD_KINDS["importance"]),
            presence=run_head("presence", (len(DISTORTION_TYPES),), self._HEAD_KINDS["presence"]),
            severity=run_head("severity", (len(DISTORTION_TYPES), 5), self._HEAD_KINDS["severity"]),
            judgment=run_head("judgment", (2,), judgment_query),
        )

    # -- parameters ----------------------------------------------------------

    def parameters(self, freeze_encoder: bool = False) -> dict[str, Tensor]:
        params = dict(self.store.params)
        if freeze_encoder:
            params = {k: v for k, v in params.items() if not k.startswith("enc.")}
        return params

    def save(self, path: str | Path) -> None:
        path = Path(path)
        save_checkpoint(self.store.as_arrays(), path)
        with open(str(path) + ".json", "w", encoding="utf-8") as f:
            json.dump(self.config.to_json_dict(), f, indent=2)
            f.write("\n")

    @staticmethod
    def load(path: str | Path, config: Optional[ModelConfig] = None) -> "RoiQualityModel":
        path = Path(path)
        if config is None:
            with open(str(path) + ".json", "r", encoding="utf-8") as f:
                config = ModelConfig.from_json_dict(json.load(f))
        model = RoiQualityModel(config)
        model.store.load_arrays(load_checkpoint(path))
        return model
