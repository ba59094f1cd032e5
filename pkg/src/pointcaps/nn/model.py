"""The assembled point-capsule auto-encoder."""
from __future__ import annotations

import numpy as np

from ..autodiff import ParameterStore, Tensor, as_tensor, no_grad, ops
from .decoder import CapsuleDecoder, DecoderConfig, PatchGrid, Reconstruction, sample_grid
from .encoder import CapsuleEncoder, EncoderConfig
from .routing import (
    CONV_ABLATION,
    DYNAMIC_ROUTING,
    ConvAblation,
    DynamicRouting,
    RoutingConfig,
)


class PointCapsuleAE:
    """Encoder, capsule routing and replication decoder over one store.

    All parameters are registered on construction from a seeded
    generator, so two models built with the same configs, dtype and seed
    start bit-identical.
    """

    def __init__(self, encoder_cfg=None, routing_cfg=None, decoder_cfg=None,
                 dtype=np.float32, seed=0, deterministic=False):
        self.encoder_cfg = encoder_cfg or EncoderConfig()
        self.routing_cfg = routing_cfg or RoutingConfig()
        self.decoder_cfg = decoder_cfg or DecoderConfig()
        self.encoder_cfg.validate()
        self.routing_cfg.validate()
        self.decoder_cfg.validate(self.routing_cfg.latent_dim)
        self.dtype = np.dtype(dtype)
        self.seed = int(seed)
        self.deterministic = bool(deterministic)

        self.store = ParameterStore(dtype=self.dtype)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, 0xCA9])))
        self.encoder = CapsuleEncoder(self.encoder_cfg, self.store, rng)
        if self.routing_cfg.mode == DYNAMIC_ROUTING:
            self.router = DynamicRouting(
                self.routing_cfg, self.encoder_cfg.branch_count, self.store, rng
            )
        else:
            self.router = ConvAblation(
                self.routing_cfg, self.encoder_cfg.branch_count, self.store, rng
            )
        self.decoder = CapsuleDecoder(
            self.decoder_cfg, self.routing_cfg.latent_count,
            self.routing_cfg.latent_dim, self.store, rng,
        )
        self.mode = "train"
        self.set_mode("train")

    # ----- mode handling -------------------------------------------------

    def _batchnorms(self):
        states = list(self.encoder.batchnorms())
        if isinstance(self.router, ConvAblation):
            states.extend(self.router.batchnorms())
        states.extend(self.decoder.batchnorms())
        return states

    def set_mode(self, mode):
        if mode not in ("train", "eval"):
            raise ValueError("model mode must be 'train' or 'eval', got %r" % (mode,))
        self.mode = mode
        for bn in self._batchnorms():
            if mode == "train":
                bn.train()
            else:
                bn.eval()
        return self

    # ----- forward passes -------------------------------------------------

    def _as_batch(self, points):
        arr = points.data if isinstance(points, Tensor) else np.asarray(points)
        if arr.ndim == 2:
            arr = arr[None]
        if isinstance(points, Tensor):
            return points if points.ndim == 3 else Tensor(arr)
        return Tensor(arr.astype(self.dtype, copy=False))

    def encode_primary(self, points):
        return self.encoder.encode_primary(
            self._as_batch(points), deterministic=self.deterministic
        )

    def encode(self, points, record_state=False):
        """Full encode: primary capsules routed into the latent grid."""
        primary = self.encode_primary(points)
        if isinstance(self.router, DynamicRouting):
            return self.router(
                primary, deterministic=self.deterministic, record_state=record_state
            )
        out = self.router(primary, deterministic=self.deterministic)
        if record_state:
            return out, None
        return out

    def decode(self, latent, grid):
        return self.decoder.decode(
            as_tensor(latent), grid, deterministic=self.deterministic
        )

    def forward(self, points, grid):
        latent = self.encode(points)
        return latent, self.decode(latent, grid)

    # ----- numpy-facing conveniences ---------------------------------------

    def eval_grid(self):
        """The fixed-seed grid used for evaluation and reconstruction."""
        return sample_grid(
            self.decoder_cfg, self.routing_cfg.latent_count,
            seed=self.decoder_cfg.grid_seed, dtype=self.dtype,
        )

    def encode_latent(self, points):
        """Encode one (n, 3) cloud to a (latent_count, latent_dim) array."""
        with no_grad():
            latent = self.encode(np.asarray(points, dtype=self.dtype))
        return np.array(latent.data[0])

    def reconstruct_cloud(self, points, grid=None):
        """Encode then decode one cloud; returns a Reconstruction."""
        grid = grid or self.eval_grid()
        with no_grad():
            latent = self.encode(np.asarray(points, dtype=self.dtype))
            out = self.decode(latent, grid)
        return Reconstruction(
            points=np.array(out.data[0]), attribution=self.decoder.attribution()
        )

    def decode_latent(self, latent, grid=None):
        """Decode one (latent_count, latent_dim) array to a Reconstruction."""
        grid = grid or self.eval_grid()
        with no_grad():
            out = self.decode(np.asarray(latent, dtype=self.dtype)[None], grid)
        return Reconstruction(
            points=np.array(out.data[0]), attribution=self.decoder.attribution()
        )

    def decode_patch(self, latent, capsule, grid=None):
        """Decode a single capsule's patch to an (m, 3) array."""
        grid = grid or self.eval_grid()
        with no_grad():
            out = self.decoder.decode_single_capsule(
                np.asarray(latent, dtype=self.dtype), capsule, grid
            )
        return np.array(out.data)

    # ----- bookkeeping ------------------------------------------------------

    def config_dict(self):
        """Flat key-value view of the architecture, for checkpoints."""
        e, r, d = self.encoder_cfg, self.routing_cfg, self.decoder_cfg
        return {
            "encoder.n_points": e.n_points,
            "encoder.point_dim": e.point_dim,
            "encoder.mlp_widths": ",".join(str(w) for w in e.mlp_widths),
            "encoder.branch_count": e.branch_count,
            "encoder.branch_width": e.branch_width,
            "routing.latent_count": r.latent_count,
            "routing.latent_dim": r.latent_dim,
            "routing.iterations": r.iterations,
            "routing.mode": r.mode,
            "decoder.replicas_per_capsule": d.replicas_per_capsule,
            "decoder.mlp_widths": ",".join(str(w) for w in d.widths_for(r.latent_dim)),
            "decoder.grid_mode": d.grid_mode,
            "decoder.grid_seed": d.grid_seed,
            "model.dtype": self.dtype.name,
            "model.seed": self.seed,
        }

    @classmethod
    def from_config_dict(cls, cfg, deterministic=False):
        enc = EncoderConfig(
            n_points=int(cfg["encoder.n_points"]),
            point_dim=int(cfg["encoder.point_dim"]),
            mlp_widths=tuple(int(w) for w in str(cfg["encoder.mlp_widths"]).split(",")),
            branch_count=int(cfg["encoder.branch_count"]),
            branch_width=int(cfg["encoder.branch_width"]),
        )
        rod = RoutingConfig(
            latent_count=int(cfg["routing.latent_count"]),
            latent_dim=int(cfg["routing.latent_dim"]),
            iterations=int(cfg["routing.iterations"]),
            mode=str(cfg["routing.mode"]),
        )
        dec = DecoderConfig(
            replicas_per_capsule=int(cfg["decoder.replicas_per_capsule"]),
            mlp_widths=tuple(int(w) for w in str(cfg["decoder.mlp_widths"]).split(",")),
            grid_mode=str(cfg["decoder.grid_mode"]),
            grid_seed=int(cfg["decoder.grid_seed"]),
        )
        return cls(
            enc, rod, dec,
            dtype=np.dtype(str(cfg.get("model.dtype", "float32"))),
            seed=int(cfg.get("model.seed", 0)),
            deterministic=deterministic,
        )
