"""Model configuration and parameter layouts for the three architectures
(plus the text-only attentive baseline they extend)."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from ..embedding_io import PAD_ID

KINDS = ("nmt", "da", "imagination", "vag")
VISUAL_KINDS = {"da": "spatial", "imagination": "global", "vag": "global"}


@dataclass
class ModelConfig:
    kind: str
    src_vocab: int
    tgt_vocab: int
    emb_dim: int = 300
    hidden: int = 256
    att_dim: int = 0  # 0 -> same as hidden
    out_dim: int = 0  # pre-output size; 0 -> emb_dim
    spatial_dim: int = 1024
    global_dim: int = 2048
    shared_dim: int = 512
    rho: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.att_dim == 0:
            self.att_dim = self.hidden
        if self.out_dim == 0:
            self.out_dim = self.emb_dim

    def to_dict(self):
        return asdict(self)


def _gru_shapes(prefix, n_in, hidden):
    return {
        f"{prefix}_Wz": (hidden, n_in), f"{prefix}_Wr": (hidden, n_in), f"{prefix}_W": (hidden, n_in),
        f"{prefix}_Uz": (hidden, hidden), f"{prefix}_Ur": (hidden, hidden), f"{prefix}_U": (hidden, hidden),
    }


def param_shapes(cfg):
    """Parameter names and shapes in their declared (checkpoint) order."""
    E, H, A, O = cfg.emb_dim, cfg.hidden, cfg.att_dim, cfg.out_dim
    C = 2 * H
    shapes = {
        "src_emb": (cfg.src_vocab, E),
        "tgt_emb": (cfg.tgt_vocab, E),
        **_gru_shapes("enc_fwd", E, H),
        **_gru_shapes("enc_bwd", E, H),
        **_gru_shapes("dec", E, H),
        "dec_init": (H, C),
    }
    if cfg.kind == "da":
        P = cfg.spatial_dim
        shapes.update({
            "txt_U": (A, H), "txt_W": (A, C), "txt_v": (A,),
            "vis_U": (A, H), "vis_W": (A, P), "vis_v": (A,),
            "gate_W": (1, H), "gate_b": (1,),
            "comb_Wzt": (H, C), "comb_Wzv": (H, P), "comb_Wz": (H, H),
            "comb_Wrt": (H, C), "comb_Wrv": (H, P), "comb_Wr": (H, H),
            "comb_Wht": (H, C), "comb_Whv": (H, P), "comb_U": (H, H),
            "L_s": (O, H), "L_w": (O, E), "L_t": (O, C), "L_i": (O, P),
        })
    else:
        shapes.update({
            "att_W": (A, H), "att_U": (A, C), "att_v": (A,),
            **_gru_shapes("ctx", C, H),
            "pre_s": (O, H), "pre_e": (O, E), "pre_c": (O, C),
        })
    shapes.update({"out_W": (cfg.tgt_vocab, O), "out_b": (cfg.tgt_vocab,)})
    if cfg.kind == "imagination":
        shapes["img_W"] = (cfg.global_dim, C)
    if cfg.kind == "vag":
        S, G = cfg.shared_dim, cfg.global_dim
        shapes.update({
            "vag_Wv": (A, G), "vag_Wh": (A, C),
            "vag_Wt": (S, C), "vag_bt": (S,),
            "vag_Wimg": (S, G), "vag_bimg": (S,),
        })
    return shapes


def _is_bias(name):
    return name.endswith("_b") or name in ("vag_bt", "vag_bimg", "gate_b")


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, cfg, seed=0, src_table=None, tgt_table=None):
        """Glorot-uniform weights, zero biases, zero PAD rows.

        Each parameter draws from its own generator keyed on (seed, name), so
        adding a parameter to a model never changes the others.
        """
        arrays = {}
        for name, shape in param_shapes(cfg).items():
            rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
            if _is_bias(name):
                arrays[name] = np.zeros(shape)
                continue
            if name.endswith("_emb"):
                bound = np.sqrt(3.0 / shape[1])
            else:
                fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
                bound = np.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        for name, table in (("src_emb", src_table), ("tgt_emb", tgt_table)):
            if table is not None:
                matrix = table.matrix if hasattr(table, "matrix") else np.asarray(table)
                if matrix.shape != arrays[name].shape:
                    raise ValueError(
                        f"{name}: table shape {matrix.shape} != expected {arrays[name].shape}"
                    )
                arrays[name] = np.array(matrix, dtype=np.float64)
        arrays["src_emb"][PAD_ID] = 0.0
        arrays["tgt_emb"][PAD_ID] = 0.0
        return cls(cfg, arrays)

    @property
    def kind(self):
        return self.config.kind

    def names(self):
        return list(param_shapes(self.config))

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def size(self):
        return sum(a.size for a in self.arrays.values())
