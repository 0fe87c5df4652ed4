"""Cooperative neural receiver simulator."""

from ._core import (
    BerCurve,
    Constellation,
    LdpcCode,
    ModelConfig,
    bmd_loss,
    count_params,
    decode_min_sum,
    ebno_from_noise_variance,
    estimate_flops,
    kernel_smooth,
    noise_variance_from_ebno,
    profile_names,
    run_sweep,
    sweep_defaults,
    train,
    train_defaults,
    write_curves,
)

__all__ = [
    "BerCurve",
    "Constellation",
    "LdpcCode",
    "ModelConfig",
    "bmd_loss",
    "count_params",
    "decode_min_sum",
    "ebno_from_noise_variance",
    "estimate_flops",
    "kernel_smooth",
    "noise_variance_from_ebno",
    "profile_names",
    "run_sweep",
    "sweep_defaults",
    "train",
    "train_defaults",
    "write_curves",
]
