from .losses import (
    BatchTargets,
    LossConfig,
    LossWeights,
    loss_clipped_logcosh,
    loss_contrastive,
    loss_gauss,
    loss_total,
)
from .model import (
    HeadOutputs,
    PredictorHead,
    forward,
    init_head,
    load_checkpoint,
    pool,
    save_checkpoint,
)
from .optim import LambState, lamb_step, noam_lr
