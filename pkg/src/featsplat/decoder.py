"""Per-pixel linear channel decoder and bilinear resizing.

The decoder lifts a rendered N-channel feature map to the teacher's M
channels with a single 1x1 linear map (out = W @ in + b per pixel), so the
scene can carry a low-dimensional feature while supervision happens in the
teacher's space.  There is deliberately no nonlinearity and no spatial
mixing.  Both operations come with hand-written backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import FeatureMap


@dataclass
class ChannelDecoder:
    """Learnable channel map: weights (M, N) and bias (M,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("decoder weights must be (M, N) with bias (M,)")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "ChannelDecoder":
        return ChannelDecoder(self.weights.copy(), self.bias.copy())

    @staticmethod
    def create(in_dim: int, out_dim: int, seed: int = 0) -> "ChannelDecoder":
        """Variance-preserving random init: W ~ N(0, 1/N), zero bias."""
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
        return ChannelDecoder(weights=w, bias=np.zeros(out_dim))

    @staticmethod
    def identity(dim: int) -> "ChannelDecoder":
        return ChannelDecoder(weights=np.eye(dim), bias=np.zeros(dim))

    def map_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """Apply the channel map to a (K, N) batch of feature vectors."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape[-1] != self.in_dim:
            raise ValueError(
                f"feature dim {vectors.shape[-1]} != decoder in_dim {self.in_dim}")
        return vectors @ self.weights.T + self.bias


def decode(fmap: FeatureMap, dec: ChannelDecoder) -> FeatureMap:
    """Per-pixel linear lift from N to M channels."""
    if fmap.dim != dec.in_dim:
        raise ValueError(f"feature dim {fmap.dim} != decoder in_dim {dec.in_dim}")
    out = fmap.data @ dec.weights.T + dec.bias
    return FeatureMap(out)


def decode_backward(grad_out: np.ndarray, fmap_in: FeatureMap,
                    dec: ChannelDecoder):
    """Gradients of ``decode`` w.r.t. weights, bias, and the input map.

    Returns (dW, db, d_input) where dW sums the per-pixel outer products
    grad_out x input, db sums grad_out, and d_input = W^T @ grad_out per
    pixel.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (fmap_in.height, fmap_in.width, dec.out_dim):
        raise ValueError("upstream gradient shape mismatch")
    flat_g = grad_out.reshape(-1, dec.out_dim)
    flat_in = fmap_in.data.reshape(-1, dec.in_dim)
    d_w = flat_g.T @ flat_in
    d_b = flat_g.sum(axis=0)
    d_in = (flat_g @ dec.weights).reshape(fmap_in.data.shape)
    return d_w, d_b, d_in


def _resize_axis_weights(src: int, dst: int):
    """Source indices and blend weights for edge-aligned bilinear resize.

    Corner pixel centers map onto corner pixel centers; a 1-pixel source
    axis broadcasts its single value.
    """
    if dst < 1:
        raise ValueError("target size must be positive")
    if src == 1 or dst == 1:
        pos = np.zeros(dst)
    else:
        pos = np.arange(dst) * (src - 1) / (dst - 1)
    lo = np.minimum(np.floor(pos).astype(int), src - 1)
    hi = np.minimum(lo + 1, src - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(fmap: FeatureMap, height: int, width: int) -> FeatureMap:
    """Bilinear resampling with the edge-aligned corner convention."""
    if height == fmap.height and width == fmap.width:
        return FeatureMap(fmap.data.copy())
    ylo, yhi, fy = _resize_axis_weights(fmap.height, height)
    xlo, xhi, fx = _resize_axis_weights(fmap.width, width)
    data = fmap.data
    rows_lo = data[ylo]
    rows_hi = data[yhi]
    rows = rows_lo + fy[:, None, None] * (rows_hi - rows_lo)
    cols_lo = rows[:, xlo]
    cols_hi = rows[:, xhi]
    out = cols_lo + fx[None, :, None] * (cols_hi - cols_lo)
    return FeatureMap(out)


def resize_bilinear_backward(grad_out: np.ndarray, src_height: int,
                             src_width: int) -> np.ndarray:
    """Adjoint of ``resize_bilinear``: scatter gradients by the same weights."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    dst_h, dst_w, dim = grad_out.shape
    if dst_h == src_height and dst_w == src_width:
        return grad_out.copy()
    ylo, yhi, fy = _resize_axis_weights(src_height, dst_h)
    xlo, xhi, fx = _resize_axis_weights(src_width, dst_w)
    # Undo the column interpolation first (it was applied last).
    rows_grad = np.zeros((dst_h, src_width, dim))
    np.add.at(rows_grad, (slice(None), xlo), grad_out * (1.0 - fx)[None, :, None])
    np.add.at(rows_grad, (slice(None), xhi), grad_out * fx[None, :, None])
    grad_src = np.zeros((src_height, src_width, dim))
    np.add.at(grad_src, ylo, rows_grad * (1.0 - fy)[:, None, None])
    np.add.at(grad_src, yhi, rows_grad * fy[:, None, None])
    return grad_src
