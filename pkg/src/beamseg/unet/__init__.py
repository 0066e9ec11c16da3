from .loss import tversky_loss, tversky_loss_grad
from .model import (ATTENTION_MODES, ProbabilityMask, UNetConfig, forward,
                    forward_batch, gradients, infer_probabilities,
                    init_params, open_attention_gates, pad_image,
                    pad_to_multiple, param_count)
from .train import (TrainingSet, TrainResult, load_checkpoint,
                    save_checkpoint, train)

__all__ = [
    "ATTENTION_MODES", "ProbabilityMask", "UNetConfig", "forward",
    "forward_batch", "gradients", "infer_probabilities", "init_params",
    "open_attention_gates", "pad_image", "pad_to_multiple", "param_count",
    "tversky_loss", "tversky_loss_grad", "TrainingSet", "TrainResult",
    "load_checkpoint", "save_checkpoint", "train",
]
