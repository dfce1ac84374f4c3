"""
Hyperparameter records of a run and the flat key = value config file that
carries them.
"""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError

log = logging.getLogger(__name__)

STRATEGIES = ("random", "dimension", "pilot", "block")


class HymbaConfig(BaseModel):
    """Architecture of the encoder/decoder pair, including the patch layout."""
    model_config = ConfigDict(extra="forbid")

    depth: int = Field(..., ge=0, description="Number of hybrid blocks in the encoder.")
    embed_dim: int = Field(..., gt=0, description="Model width D. Must be divisible by 6 for 3D RoPE.")
    n_heads: int = Field(..., gt=0, description="Attention heads n_h; also the number of SSM heads.")
    head_dim: int = Field(..., gt=0, description="Per-head width d_k. Divisible by 6 since Q/K carry 3D RoPE.")
    window: int = Field(..., ge=1, description="Half-width W of the attention band, |i-j| <= W.")
    full_attention_layers: Optional[List[int]] = Field(None, description="""Encoder layers using full attention.
                                                       Defaults to the first, middle and last layer.""")
    ssm_state: int = Field(..., gt=0, description="SSM state size N_state per channel.")
    ssm_width: Optional[int] = Field(None, description="Width of the SSM branch, defaults to n_heads*head_dim.")
    n_meta: int = Field(..., ge=0, description="Number of learnable meta tokens prepended to the sequence.")
    decoder_depth: int = Field(..., ge=0, description="Number of decoder blocks.")
    decoder_dim: Optional[int] = Field(None, description="Decoder width, defaults to embed_dim.")
    decoder_type: Literal["hymba", "attention"] = Field("hymba", description="Hybrid decoder blocks or plain attention blocks.")
    mixer: Literal["hybrid", "attention"] = Field("hybrid", description="""Token mixer of the encoder blocks. 'attention' is the
                                                  full-attention baseline used by the latency benchmark.""")
    ffn_expansion: int = Field(4, gt=0, description="Hidden expansion of the feed-forward sublayer.")
    norm_eps: float = Field(1e-6, gt=0, description="Epsilon of every RMS normalization inside the blocks.")
    causal: bool = Field(False, description="Causal attention mask among sequence tokens.")
    meta_global: bool = Field(True, description="Meta tokens visible to every query regardless of the window.")
    patch_l: int = Field(..., gt=0, description="Patch length along time P_L.")
    patch_k: int = Field(..., gt=0, description="Patch length along frequency P_K.")
    patch_s: int = Field(..., gt=0, description="Patch length along the flattened antenna axis P_s.")
    dt_min: float = Field(1e-3, gt=0, description="Lower bound of the initial SSM step size.")
    dt_max: float = Field(1e-1, gt=0, description="Upper bound of the initial SSM step size.")
    init_std: float = Field(0.02, gt=0, description="Standard deviation of the weight initialization.")

    @model_validator(mode="after")
    def _check(self):
        if self.embed_dim % 6:
            raise ValueError(f"embed_dim={self.embed_dim} must be divisible by 6")
        if self.head_dim % 6:
            raise ValueError(f"head_dim={self.head_dim} must be divisible by 6")
        if self.decoder_dim is None:
            self.decoder_dim = self.embed_dim
        if self.decoder_dim % 6:
            raise ValueError(f"decoder_dim={self.decoder_dim} must be divisible by 6")
        if self.decoder_dim % self.n_heads or (self.decoder_dim // self.n_heads) % 6:
            raise ValueError(f"decoder_dim={self.decoder_dim} must split into {self.n_heads} heads of a width divisible by 6")
        if self.ssm_width is None:
            self.ssm_width = self.attn_width
        if self.ssm_width != self.attn_width:
            raise ValueError(f"ssm_width={self.ssm_width} must equal the attention width {self.attn_width}")
        if self.full_attention_layers is None:
            self.full_attention_layers = sorted({0, self.depth // 2, self.depth - 1}) if self.depth else []
        bad = [i for i in self.full_attention_layers if not 0 <= i < self.depth]
        if bad:
            raise ValueError(f"full_attention_layers {bad} outside [0, {self.depth})")
        if self.dt_min > self.dt_max:
            raise ValueError("dt_min must not exceed dt_max")
        return self

    @property
    def attn_width(self):
        return self.n_heads * self.head_dim

    @property
    def projection_width(self):
        """Width of the fused projection: Q, K, V, SSM input and gate."""
        return 3 * self.attn_width + 2 * self.ssm_width

    @property
    def decoder_head_dim(self):
        return self.decoder_dim // self.n_heads

    def patch_payload(self):
        return self.patch_l * self.patch_k * self.patch_s * 2


class TrainConfig(BaseModel):
    """Optimization protocol: AdamW with linear warmup and cosine annealing."""
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(8, gt=0, description="Samples per optimizer step.")
    epochs: int = Field(1, gt=0, description="Passes over the dataset.")
    max_steps: Optional[int] = Field(None, description="Hard cap on optimizer steps, overrides epochs when set.")
    weight_decay: float = Field(0.05, ge=0, description="Decoupled weight decay of AdamW.")
    beta1: float = Field(0.9, ge=0, lt=1, description="First-moment decay.")
    beta2: float = Field(0.95, ge=0, lt=1, description="Second-moment decay.")
    adam_eps: float = Field(1e-8, gt=0, description="AdamW denominator epsilon.")
    base_lr: float = Field(1e-5, ge=0, description="Learning rate at step 0.")
    max_lr: float = Field(1e-4, ge=0, description="Peak learning rate at the end of warmup.")
    min_lr: float = Field(1e-6, ge=0, description="Learning rate at the final step.")
    warmup_ratio: float = Field(0.05, description="Fraction of total steps spent in linear warmup.")
    mask_ratio_start: float = Field(0.5, ge=0, le=1, description="Curriculum masking ratio at step 0.")
    mask_ratio_end: float = Field(0.75, ge=0, le=1, description="Curriculum masking ratio at the final step.")
    strategy_weights: List[float] = Field([1.0, 1.0, 1.0, 1.0], description="""Sampling weights of the masking strategies
                                           in the order random, dimension, pilot, block.""")
    seed: int = Field(0, description="Seed of initialization, masking and batch order.")

    @model_validator(mode="after")
    def _check(self):
        if not self.min_lr <= self.base_lr <= self.max_lr:
            raise ValueError(f"need min_lr <= base_lr <= max_lr, got {self.min_lr}, {self.base_lr}, {self.max_lr}")
        if not 0.0 < self.warmup_ratio < 1.0:
            raise ValueError(f"warmup_ratio={self.warmup_ratio} must lie in (0, 1)")
        if self.mask_ratio_start > self.mask_ratio_end:
            raise ValueError("curriculum must be non-decreasing")
        if len(self.strategy_weights) != len(STRATEGIES) or min(self.strategy_weights) < 0:
            raise ValueError(f"strategy_weights needs {len(STRATEGIES)} non-negative entries")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        return self

    def total_steps(self, n_samples):
        if self.max_steps is not None:
            return self.max_steps
        per_epoch = -(-n_samples // self.batch_size)
        return self.epochs * per_epoch


class LossWeights(BaseModel):
    """Weights of the joint loss and the schedule gamma(t) of the physical terms."""
    model_config = ConfigDict(extra="forbid")

    lambda_stat: float = Field(1.0, gt=0, description="Weight of the masked MSE term.")
    lambda_energy: float = Field(0.1, ge=0, description="Weight of the energy consistency term.")
    lambda_phase: float = Field(0.1, ge=0, description="Weight of the phase alignment term.")
    activation_ratio: float = Field(0.4, ge=0, le=1, description="Fraction of the run before gamma leaves 0.")
    ramp_ratio: float = Field(0.2, ge=0, le=1, description="Fraction of the run over which gamma ramps to 1.")
    activation_step: Optional[int] = Field(None, description="Explicit activation step, filled from activation_ratio.")
    ramp_steps: Optional[int] = Field(None, description="Explicit ramp length in steps, filled from ramp_ratio.")
    plateau_patience: Optional[int] = Field(None, description="""Steps without L_stat improvement that activate gamma
                                            early. None disables the plateau trigger.""")
    plateau_min_delta: float = Field(0.0, ge=0, description="Minimum L_stat decrease that counts as improvement.")

    @model_validator(mode="after")
    def _check(self):
        if self.activation_step is not None and self.activation_step < 0:
            raise ValueError("activation_step must be non-negative")
        if self.ramp_steps is not None and self.ramp_steps < 0:
            raise ValueError("ramp_steps must be non-negative")
        return self

    def resolved(self, total_steps):
        """Copy with activation_step and ramp_steps filled for a run of total_steps."""
        update = {}
        if self.activation_step is None:
            update["activation_step"] = int(round(self.activation_ratio * total_steps))
        if self.ramp_steps is None:
            update["ramp_steps"] = int(round(self.ramp_ratio * total_steps))
        return self.model_copy(update=update)

    def gamma(self, step):
        if self.activation_step is None or self.ramp_steps is None:
            raise ConfigurationError("gamma schedule is unresolved, call resolved(total_steps) first")
        if step < self.activation_step:
            return 0.0
        if self.ramp_steps == 0:
            return 1.0
        return min(1.0, (step - self.activation_step) / self.ramp_steps)


def model_parameters(scale):
    """Return a HymbaConfig for a named scale.
    scale: "toy", "small", "medium" or "reference"
    """
    presets = {
        # two-layer model used by the gradient and learning checks
        "toy": dict(depth=2, embed_dim=24, n_heads=2, head_dim=12, window=4, ssm_state=4,
                    n_meta=2, decoder_depth=1, patch_l=2, patch_k=2, patch_s=2),
        "small": dict(depth=6, embed_dim=192, n_heads=4, head_dim=48, window=16, ssm_state=16,
                      n_meta=8, decoder_depth=2, patch_l=2, patch_k=4, patch_s=4),
        "medium": dict(depth=8, embed_dim=384, n_heads=8, head_dim=48, window=32, ssm_state=16,
                       n_meta=16, decoder_depth=2, patch_l=2, patch_k=4, patch_s=4),
        # 20-layer encoder and 4-layer decoder at D=504
        "reference": dict(depth=20, embed_dim=504, n_heads=6, head_dim=84, window=64, ssm_state=16,
                          n_meta=128, decoder_depth=4, patch_l=4, patch_k=4, patch_s=4),
    }
    if scale not in presets:
        raise ConfigurationError(f"unknown scale {scale!r}, expected one of {sorted(presets)}")
    return make_config(HymbaConfig, **presets[scale])


def make_config(cls, **values):
    """Build a config record, turning validation failures into ConfigurationError."""
    try:
        return cls(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(x) for x in first["loc"]) or cls.__name__
        raise ConfigurationError(f"{cls.__name__}: {where}: {first['msg']}") from e


def _field_owner():
    owner = {}
    for cls in (HymbaConfig, TrainConfig, LossWeights):
        for name in cls.model_fields:
            owner[name] = cls
    return owner


def read_config(filepath):
    """Read a flat key = value config file.

    Values are JSON literals (numbers, true/false, null, lists, quoted strings);
    bare words are taken as strings. The optional key `scale` selects the
    architecture preset the remaining keys override.

    Returns
    -------
    (HymbaConfig, TrainConfig, LossWeights)
    """
    owner = _field_owner()
    values = {HymbaConfig: {}, TrainConfig: {}, LossWeights: {}}
    scale = None
    for lineno, raw in enumerate(Path(filepath).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{filepath}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
        if key == "scale":
            scale = value
            continue
        if key not in owner:
            raise ConfigurationError(f"{filepath}:{lineno}: unknown config key {key!r}")
        values[owner[key]][key] = value

    hymba_values = values[HymbaConfig]
    if scale is not None:
        hymba_values = {**model_parameters(scale).model_dump(), **hymba_values}
        # derived fields follow their overridden sources unless set explicitly
        derived = {"full_attention_layers": ("depth",), "decoder_dim": ("embed_dim",), "ssm_width": ("n_heads", "head_dim")}
        for field, sources in derived.items():
            if field not in values[HymbaConfig] and any(s in values[HymbaConfig] for s in sources):
                hymba_values[field] = None
    model = make_config(HymbaConfig, **hymba_values)
    train = make_config(TrainConfig, **values[TrainConfig])
    loss = make_config(LossWeights, **values[LossWeights])
    log.debug("read config %s (scale=%s)", filepath, scale)
    return model, train, loss


def write_config(filepath, model, train, loss):
    """Write the three records as a flat key = value file readable by read_config."""
    lines = []
    for title, record in (("architecture", model), ("optimization", train), ("loss", loss)):
        lines.append(f"# {title}")
        for key, value in record.model_dump().items():
            lines.append(f"{key} = {json.dumps(value)}")
    Path(filepath).write_text("\n".join(lines) + "\n")
