"""
Asymmetric masked autoencoder around the hybrid encoder.

visible patches -> embed -> 3D RoPE -> [meta, tokens] -> encoder -> strip meta
-> decoder adapter -> realign with mask tokens -> 3D RoPE -> decoder -> head
"""
import logging

import numpy as np

from core.hymba.block import decoder_shape, encoder_forward, encoder_shape, init_block, prepend_meta, run_blocks
from core.patchify.patches import embed
from core.patchify.rope import apply_3d_rope
from core.tensor import tensor as T
from core.utils.errors import ShapeMismatchError

log = logging.getLogger(__name__)

__all__ = ["ComHymba", "realign", "decode", "count_parameters"]


class ComHymba:
    """
    Parameters and forward pass of the masked autoencoder.

    Parameters
    ----------
    config : HymbaConfig
    payload_dim : int
        Patch payload width E = P_L * P_K * P_s * 2.
    seed : int
        Seed of the weight initialization.
    """

    def __init__(self, config, payload_dim=None, seed=0):
        self.config = config
        self.payload_dim = payload_dim or config.patch_payload()
        self.params = self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        cfg, E, D, Dd = self.config, self.payload_dim, self.config.embed_dim, self.config.decoder_dim
        std = cfg.init_std

        def p(name, value):
            return name, T.parameter(value, name)

        params = dict([
            p("embed.W", rng.normal(0.0, std, (E, D))),
            p("embed.b", np.zeros(D)),
            p("meta", rng.normal(0.0, std, (cfg.n_meta, D))),
        ])
        enc = encoder_shape(cfg)
        for i in range(cfg.depth):
            params.update(init_block(rng, f"enc.{i}.", enc))
        params.update([
            p("enc_norm", np.ones(D)),
            p("dec_embed.W", rng.normal(0.0, std, (D, Dd))),
            p("dec_embed.b", np.zeros(Dd)),
            p("mask_token", rng.normal(0.0, std, Dd)),
        ])
        dec = decoder_shape(cfg)
        for i in range(cfg.decoder_depth):
            params.update(init_block(rng, f"dec.{i}.", dec))
        params.update([
            p("dec_norm", np.ones(Dd)),
            p("head.W", rng.normal(0.0, std, (Dd, E))),
            p("head.b", np.zeros(E)),
        ])
        return params

    def __getitem__(self, name):
        return self.params[name]

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def encode(self, payloads, coords, plan):
        """Latent tokens H_lat [|obs|, D] of the observed patches, meta rows stripped."""
        visible = plan.observed
        coords = np.asarray(coords)
        z = embed(T.as_tensor(np.asarray(payloads)[visible]), self["embed.W"], self["embed.b"])
        z = apply_3d_rope(z, coords[visible])
        x = prepend_meta(z, self["meta"])
        h = encoder_forward(x, self.params, self.config, coords[visible])
        if self.config.depth:
            h = T.rms_norm(h, self["enc_norm"], self.config.norm_eps)
        n_meta = self.config.n_meta
        return T.split(h, [n_meta, len(visible)], axis=0)[1] if n_meta else h

    def forward(self, payloads, coords, plan):
        """Reconstructed payloads [N_p, E] for every patch."""
        h_lat = self.encode(payloads, coords, plan)
        h_lat = T.add(T.matmul(h_lat, self["dec_embed.W"]), self["dec_embed.b"])
        h_full = realign(h_lat, self["mask_token"], plan, coords)
        return decode(h_full, self.params, self.config, coords)

    __call__ = forward

    def predict(self, payloads, coords, plan):
        with T.no_grad():
            return self.forward(payloads, coords, plan).value


def realign(h_lat, mask_token, plan, coords=None):
    """
    Scatter encoder outputs back to their grid positions, mask token elsewhere.

    Row i of the result is the encoded token of patch i when i is observed and
    the mask token otherwise; with `coords` the decoder-side 3D RoPE is applied.
    """
    h_lat = T.as_tensor(h_lat)
    observed = plan.observed
    if h_lat.shape[0] != len(observed):
        raise ShapeMismatchError(f"realign: {h_lat.shape[0]} encoder outputs for {len(observed)} observed patches")
    table = T.concat([h_lat, T.reshape(mask_token, (1, -1))], axis=0)
    index = np.full(plan.n_patches, len(observed), dtype=np.int64)
    index[observed] = np.arange(len(observed))
    h_full = T.take(table, index, axis=0)
    return h_full if coords is None else apply_3d_rope(h_full, coords)


def decode(h_full, params, config, coords=None):
    """Decoder stack, final norm and linear head to [N_p, E]. Depth 0 is the head alone."""
    h = run_blocks(T.as_tensor(h_full), params, "dec.", config.decoder_depth, decoder_shape(config), coords)
    if config.decoder_depth:
        h = T.rms_norm(h, params["dec_norm"], config.norm_eps)
    return T.add(T.matmul(h, params["head.W"]), params["head.b"])


def count_parameters(model, prefix=None):
    """Number of trainable scalars, optionally of the parameters whose name starts with `prefix`."""
    return int(sum(p.size for name, p in model.params.items() if prefix is None or name.startswith(prefix)))
