from slotmvd.diffusion.losses import GuidanceConfig, TrainItem, draw_dropout, training_loss
from slotmvd.diffusion.sampler import (
    SamplerConfig,
    SamplerRng,
    cfg_combine,
    ddpm_sample,
    denoise_range,
)
from slotmvd.diffusion.schedule import (
    DiffusionSchedule,
    alpha,
    forward_diffuse,
    schedule_eval,
    sigma,
)

__all__ = [
    "DiffusionSchedule",
    "GuidanceConfig",
    "SamplerConfig",
    "SamplerRng",
    "TrainItem",
    "alpha",
    "cfg_combine",
    "ddpm_sample",
    "denoise_range",
    "draw_dropout",
    "forward_diffuse",
    "schedule_eval",
    "sigma",
    "training_loss",
]
