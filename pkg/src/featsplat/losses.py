"""Training losses with hand-written gradients.

The photometric loss mixes mean absolute error with structural
dissimilarity, (1 - lambda) * L1 + lambda * (1 - SSIM) / 2, computed on
[0, 1] images with the usual 11x11 Gaussian window (sigma 1.5) and
constants C1 = 0.01^2, C2 = 0.03^2.  The feature loss is a plain mean
absolute error over all entries.  Both return (scalar, gradient w.r.t.
the rendered input).
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

from .scene import FeatureMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _ssim_kernel() -> np.ndarray:
    half = SSIM_WINDOW // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return k / k.sum()


_KERNEL = _ssim_kernel()


def _blur(img: np.ndarray) -> np.ndarray:
    """Separable Gaussian blur with zero padding (self-adjoint)."""
    out = correlate1d(img, _KERNEL, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _KERNEL, axis=1, mode="constant", cval=0.0)


def l1_loss(rendered: np.ndarray, target: np.ndarray):
    diff = rendered - target
    loss = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return loss, grad


def dssim_loss(rendered: np.ndarray, target: np.ndarray):
    """(1 - SSIM)/2 and its gradient w.r.t. ``rendered``."""
    x = rendered
    y = target
    mu_x = _blur(x)
    mu_y = _blur(y)
    p_xx = _blur(x * x)
    p_xy = _blur(x * y)
    p_yy = _blur(y * y)
    sig_x = p_xx - mu_x ** 2
    sig_y = p_yy - mu_y ** 2
    sig_xy = p_xy - mu_x * mu_y

    A = 2.0 * mu_x * mu_y + SSIM_C1
    B = 2.0 * sig_xy + SSIM_C2
    C = mu_x ** 2 + mu_y ** 2 + SSIM_C1
    D = sig_x + sig_y + SSIM_C2
    ssim_map = (A * B) / (C * D)
    loss = float((1.0 - ssim_map.mean()) / 2.0)

    # d loss / d ssim_map, then pointwise partials w.r.t. the moment maps.
    g_s = np.full_like(ssim_map, -0.5 / ssim_map.size)
    g_mu_x = g_s * (2.0 * mu_y * B / (C * D) - 2.0 * mu_x * A * B / (C ** 2 * D))
    g_sig_x = g_s * (-A * B / (C * D ** 2))
    g_sig_xy = g_s * (2.0 * A / (C * D))

    # sig_x = p_xx - mu_x^2 and sig_xy = p_xy - mu_x mu_y also feed mu_x.
    g_mu_x = g_mu_x + g_sig_x * (-2.0 * mu_x) + g_sig_xy * (-mu_y)
    g_p_xx = g_sig_x
    g_p_xy = g_sig_xy

    # Adjoints: mu_x = blur(x), p_xx = blur(x*x), p_xy = blur(x*y).
    grad = _blur(g_mu_x) + 2.0 * x * _blur(g_p_xx) + y * _blur(g_p_xy)
    return loss, grad


def photometric_loss(rendered: np.ndarray, target: np.ndarray,
                     lambda_dssim: float):
    """Blend of L1 and D-SSIM; returns (loss, gradient image)."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValueError(
            f"resolution mismatch: {rendered.shape} vs {target.shape}")
    loss_l1, grad_l1 = l1_loss(rendered, target)
    if lambda_dssim == 0.0:
        return loss_l1, grad_l1
    loss_ds, grad_ds = dssim_loss(rendered, target)
    loss = (1.0 - lambda_dssim) * loss_l1 + lambda_dssim * loss_ds
    grad = (1.0 - lambda_dssim) * grad_l1 + lambda_dssim * grad_ds
    return loss, grad


def feature_loss(rendered: FeatureMap, target: FeatureMap):
    """Mean absolute error between two feature maps of equal shape."""
    if rendered.data.shape != target.data.shape:
        raise ValueError(
            f"shape mismatch: {rendered.data.shape} vs {target.data.shape}")
    return l1_loss(rendered.data, target.data)


def psnr(rendered: np.ndarray, target: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images."""
    mse = float(np.mean((np.asarray(rendered) - np.asarray(target)) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)
