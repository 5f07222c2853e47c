"""SNR-controlled additive noise for channel matrices."""

from __future__ import annotations

import numpy as np

from .scenario import NoiseSpec


def inject_noise(H, spec: NoiseSpec, seed):
    """Add circularly-symmetric complex Gaussian noise at a random per-sample SNR.

    ``H`` is one (M, S) matrix or a batch (N, M, S). For each sample the SNR
    in dB is drawn from Normal(mean_snr_db, std_snr_db) and the noise
    variance is set so that ||H||_F^2 / E||n||_F^2 equals that SNR.
    A disabled spec returns ``H`` unchanged.
    """
    if not spec.enabled:
        return H
    H = np.asarray(H)
    batch = H[None] if H.ndim == 2 else H
    rng = np.random.default_rng(seed)
    n = batch.shape[0]
    snr_db = rng.normal(spec.mean_snr_db, spec.std_snr_db, size=n) if spec.std_snr_db > 0 else np.full(n, spec.mean_snr_db)
    per_entry = batch.shape[1] * batch.shape[2]
    power = (np.abs(batch) ** 2).sum(axis=(1, 2)) / per_entry
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)[:, None, None]
    noise = scale * (rng.standard_normal(batch.shape) + 1j * rng.standard_normal(batch.shape))
    out = (batch + noise).astype(np.result_type(batch.dtype, np.complex64))
    return out[0] if H.ndim == 2 else out
