from .model import (
    Batch,
    EncoderOutput,
    attend_text,
    attend_visual_gated,
    bahdanau_decoder_step,
    da_decoder_step,
    encode_bigru,
    forward_loss,
    greedy_decode,
    imagination_batch_margin_loss,
    imagination_latent,
    imagination_margin_loss,
    make_batch,
    multitask_loss,
    sequence_nll,
    vag_decoder_init,
    vag_pair_margin_loss,
    vag_sentence_representation,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .params import KINDS, ModelConfig, ModelParams, param_shapes

__all__ = [
    "Batch",
    "EncoderOutput",
    "KINDS",
    "ModelConfig",
    "ModelParams",
    "attend_text",
    "attend_visual_gated",
    "bahdanau_decoder_step",
    "da_decoder_step",
    "encode_bigru",
    "forward_loss",
    "greedy_decode",
    "load_checkpoint",
    "save_checkpoint",
    "imagination_batch_margin_loss",
    "imagination_latent",
    "imagination_margin_loss",
    "make_batch",
    "multitask_loss",
    "param_shapes",
    "sequence_nll",
    "vag_decoder_init",
    "vag_pair_margin_loss",
    "vag_sentence_representation",
]
