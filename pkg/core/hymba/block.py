"""
Hybrid-head block and the encoder stack.

One block: pre-RMSNorm, one fused projection split into (Q, K, V, X_ssm, G),
attention and SSM heads in parallel, gated fusion with per-branch RMSNorm,
output projection and residual; then a SiLU feed-forward sublayer with its own
pre-norm and residual.
"""
import logging

import numpy as np

from core.patchify.rope import rope_tables
from core.tensor import tensor as T
from core.utils.errors import ShapeMismatchError
from .attention import full_attention, windowed_attention
from .ssm import SsmParams, init_ssm, ssm_scan

log = logging.getLogger(__name__)

__all__ = [
    "BlockShape", "encoder_shape", "decoder_shape", "init_block", "prepend_meta", "split_projection",
    "gated_fuse", "hymba_block", "attention_block", "run_blocks", "encoder_forward", "baseline_config",
]


class BlockShape:
    """Widths shared by every block of one stack."""

    def __init__(self, dim, n_heads, head_dim, ssm_state, window, mixer="hybrid", ffn_expansion=4,
                 norm_eps=1e-6, causal=False, meta_global=True, full_layers=(), dt_min=1e-3, dt_max=1e-1, std=0.02):
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = head_dim
        self.ssm_state = ssm_state
        self.window = window
        self.mixer = mixer
        self.ffn_expansion = ffn_expansion
        self.norm_eps = norm_eps
        self.causal = causal
        self.meta_global = meta_global
        self.full_layers = set(full_layers)
        self.dt_min, self.dt_max, self.std = dt_min, dt_max, std

    @property
    def attn_width(self):
        return self.n_heads * self.head_dim

    @property
    def ssm_width(self):
        return self.attn_width if self.mixer == "hybrid" else 0


def encoder_shape(config):
    return BlockShape(config.embed_dim, config.n_heads, config.head_dim, config.ssm_state, config.window,
                      config.mixer, config.ffn_expansion, config.norm_eps, config.causal, config.meta_global,
                      config.full_attention_layers, config.dt_min, config.dt_max, config.init_std)


def decoder_shape(config):
    mixer = "hybrid" if config.decoder_type == "hymba" and config.mixer == "hybrid" else "attention"
    full = range(config.decoder_depth) if mixer == "attention" else ()
    return BlockShape(config.decoder_dim, config.n_heads, config.decoder_head_dim, config.ssm_state, config.window,
                      mixer, config.ffn_expansion, config.norm_eps, config.causal, True, full,
                      config.dt_min, config.dt_max, config.init_std)


def init_block(rng, prefix, shape):
    """Parameters of one block as a name -> DiffTensor dict."""
    D, std = shape.dim, shape.std
    proj = 3 * shape.attn_width + 2 * shape.ssm_width
    hidden = shape.ffn_expansion * D

    def p(name, value):
        return f"{prefix}{name}", T.parameter(value, f"{prefix}{name}")

    params = dict([
        p("norm", np.ones(D)),
        p("in_proj.W", rng.normal(0.0, std, (D, proj))),
        p("in_proj.b", np.zeros(proj)),
        p("out_proj.W", rng.normal(0.0, std, (shape.attn_width, D))),
        p("out_proj.b", np.zeros(D)),
        p("ffn_norm", np.ones(D)),
        p("ffn.W1", rng.normal(0.0, std, (D, hidden))),
        p("ffn.b1", np.zeros(hidden)),
        p("ffn.W2", rng.normal(0.0, std, (hidden, D))),
        p("ffn.b2", np.zeros(D)),
    ])
    if shape.mixer == "hybrid":
        params.update([p("attn_norm", np.ones(shape.attn_width)), p("ssm_norm", np.ones(shape.ssm_width))])
        params.update(init_ssm(rng, prefix, shape.ssm_width, shape.n_heads, shape.ssm_state,
                               shape.dt_min, shape.dt_max, std))
    return params


def prepend_meta(x_vis, meta):
    """[n_meta + L_vis, D] = concat(meta, x_vis)."""
    x_vis, meta = T.as_tensor(x_vis), T.as_tensor(meta)
    if meta.shape[0] == 0:
        return x_vis
    if meta.shape[-1] != x_vis.shape[-1]:
        raise ShapeMismatchError(f"meta tokens {meta.shape} and visible tokens {x_vis.shape} differ in width")
    return T.concat([meta, x_vis], axis=0)


def split_projection(x, W, b, attn_width, ssm_width):
    """One fused affine map, split along features into (Q, K, V, X_ssm, G)."""
    expected = 3 * attn_width + 2 * ssm_width
    if W.shape[-1] != expected:
        raise ShapeMismatchError(f"projection width {W.shape[-1]} != 3*{attn_width} + 2*{ssm_width}")
    return T.split(T.add(T.matmul(x, W), b), [attn_width] * 3 + [ssm_width] * 2, axis=-1)


def gated_fuse(y_attn, y_ssm, gate, attn_scale, ssm_scale, W_out, b_out, residual, eps=1e-6):
    """residual + (RMSNorm(Y_attn) + RMSNorm(sigmoid(G) * Y_ssm)) W_out + b_out."""
    if y_attn.shape != y_ssm.shape or y_ssm.shape != gate.shape:
        raise ShapeMismatchError(f"branch widths differ: attn {y_attn.shape}, ssm {y_ssm.shape}, gate {gate.shape}")
    gated = T.mul(y_ssm, T.sigmoid(gate))
    fused = T.add(T.rms_norm(y_attn, attn_scale, eps), T.rms_norm(gated, ssm_scale, eps))
    return T.add(residual, T.add(T.matmul(fused, W_out), b_out))


def _heads(x, n_heads):
    n, width = x.shape
    return T.transpose(T.reshape(x, (n, n_heads, width // n_heads)), (1, 0, 2))


def _merge(y):
    heads, n, d = y.shape
    return T.reshape(T.transpose(y, (1, 0, 2)), (n, heads * d))


def _attend(q, k, v, shape, full, n_meta, rope):
    q, k, v = (_heads(t, shape.n_heads) for t in (q, k, v))
    if rope is not None:
        q = T.rotate_pairs(q, *rope)
        k = T.rotate_pairs(k, *rope)
    if full:
        y = full_attention(q, k, v, n_meta=n_meta, causal=shape.causal)
    else:
        y = windowed_attention(q, k, v, shape.window, n_meta=n_meta, causal=shape.causal,
                               meta_global=shape.meta_global)
    return _merge(y)


def _feed_forward(x, params, prefix, shape):
    h = T.rms_norm(x, params[f"{prefix}ffn_norm"], shape.norm_eps)
    h = T.silu(T.add(T.matmul(h, params[f"{prefix}ffn.W1"]), params[f"{prefix}ffn.b1"]))
    return T.add(x, T.add(T.matmul(h, params[f"{prefix}ffn.W2"]), params[f"{prefix}ffn.b2"]))


def hymba_block(x, params, prefix, shape, full=False, n_meta=0, rope=None):
    """One hybrid block on x [N, D]; `rope` is the (cos, sin) table for Q/K or None."""
    h = T.rms_norm(x, params[f"{prefix}norm"], shape.norm_eps)
    q, k, v, x_ssm, gate = split_projection(h, params[f"{prefix}in_proj.W"], params[f"{prefix}in_proj.b"],
                                            shape.attn_width, shape.ssm_width)
    y_attn = _attend(q, k, v, shape, full, n_meta, rope)
    y_ssm = ssm_scan(x_ssm, SsmParams.from_params(params, prefix))
    x = gated_fuse(y_attn, y_ssm, gate, params[f"{prefix}attn_norm"], params[f"{prefix}ssm_norm"],
                   params[f"{prefix}out_proj.W"], params[f"{prefix}out_proj.b"], x, shape.norm_eps)
    return _feed_forward(x, params, prefix, shape)


def attention_block(x, params, prefix, shape, full=True, n_meta=0, rope=None):
    """Plain pre-norm attention block, the mixer of the full-attention baseline."""
    h = T.rms_norm(x, params[f"{prefix}norm"], shape.norm_eps)
    q, k, v, _, _ = split_projection(h, params[f"{prefix}in_proj.W"], params[f"{prefix}in_proj.b"],
                                     shape.attn_width, 0)
    y = _attend(q, k, v, shape, full, n_meta, rope)
    x = T.add(x, T.add(T.matmul(y, params[f"{prefix}out_proj.W"]), params[f"{prefix}out_proj.b"]))
    return _feed_forward(x, params, prefix, shape)


def run_blocks(x, params, prefix, depth, shape, coords=None, n_meta=0):
    """Apply `depth` blocks named `{prefix}{i}.` to x [n_meta + L, D]."""
    rope = None
    if coords is not None:
        rope = rope_tables(coords, shape.head_dim, n_prefix=n_meta)
        rope = tuple(t.astype(x.value.dtype) for t in rope)
    block = hymba_block if shape.mixer == "hybrid" else attention_block
    for i in range(depth):
        x = block(x, params, f"{prefix}{i}.", shape, full=i in shape.full_layers, n_meta=n_meta, rope=rope)
    return x


def encoder_forward(tokens, params, config, coords=None):
    """
    Encoder stack on meta-prefixed tokens [n_meta + L_vis, D].

    Layers listed in config.full_attention_layers use full attention, the rest
    the band of half-width config.window. Depth 0 is the identity.
    """
    tokens = T.as_tensor(tokens)
    return run_blocks(tokens, params, "enc.", config.depth, encoder_shape(config), coords, config.n_meta)


def baseline_config(config):
    """Full-attention transformer of about the same parameter count.

    Every layer is full attention; the attention width grows by 1.5x to absorb
    the parameters of the missing SSM branch and gate.
    """
    head_dim = int(6 * round(1.5 * config.head_dim / 6))
    update = dict(mixer="attention", head_dim=head_dim, ssm_width=config.n_heads * head_dim, n_meta=0,
                  full_attention_layers=list(range(config.depth)), decoder_type="attention")
    return config.model_copy(update=update)
