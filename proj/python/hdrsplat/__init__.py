from ._core import (
    Checkpoint,
    IoError,
    NumericalError,
    Scene,
    config_text,
    generate_scene,
    gradcheck,
    load_checkpoint,
    load_scene,
    mu_law,
    psnr,
    reference_crf,
    scale_factor,
    spearman,
    ssim,
    train,
)

__all__ = [
    "Checkpoint",
    "IoError",
    "NumericalError",
    "Scene",
    "config_text",
    "generate_scene",
    "gradcheck",
    "load_checkpoint",
    "load_scene",
    "mu_law",
    "psnr",
    "reference_crf",
    "scale_factor",
    "spearman",
    "ssim",
    "train",
]
