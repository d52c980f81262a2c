"""Fourier-domain utilities shared by all correlation filters.

Grids are plain numpy arrays with 1 to 3 axes. The DFT convention is
numpy's: unnormalized forward transform, 1/N inverse. Desired-response
grids place the zero-shift bin at index (0, ..., 0), so a detection
argmax is decoded as a signed circular offset (see ``signed_offset``).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "dft_forward",
    "dft_inverse",
    "hann_window",
    "gaussian_response",
    "interpolate_scores",
    "signed_offset",
    "circular_offsets",
]


def _check_grid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 0 or x.size == 0:
        raise ValueError("grid must have at least one element per axis")
    return x


def dft_forward(x: np.ndarray) -> np.ndarray:
    """Unnormalized multi-dimensional DFT over all axes of ``x``."""
    return np.fft.fftn(_check_grid(x))


def dft_inverse(X: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dft_forward` (1/N-normalized)."""
    return np.fft.ifftn(_check_grid(X))


def hann_window(dims) -> np.ndarray:
    """Separable symmetric Hann window, outer product of 1-D windows.

    Per axis w[n] = 0.5 * (1 - cos(2*pi*n / (N - 1))); a length-1 axis
    degenerates to [1].
    """
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    if any(d < 1 for d in dims):
        raise ValueError(f"window extents must be positive, got {dims}")
    out = np.ones(dims)
    for axis, n in enumerate(dims):
        if n == 1:
            w = np.ones(1)
        else:
            w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / (n - 1)))
        shape = [1] * len(dims)
        shape[axis] = n
        out = out * w.reshape(shape)
    return out


def signed_offset(index: int, length: int) -> int:
    """Decode a circular grid index into a signed shift.

    Index k on an axis of length L maps to k for k <= L/2 and to k - L
    otherwise.
    """
    return index if index <= length // 2 else index - length


def circular_offsets(length: int) -> np.ndarray:
    """Signed wrap-around offsets of every bin on an axis."""
    k = np.arange(length)
    return np.where(k <= length // 2, k, k - length)


def gaussian_response(dims, sigmas) -> np.ndarray:
    """Circularly wrapped Gaussian peaked (value exactly 1) at index 0.

    g(n) = exp(-sum_k n_k^2 / (2*sigma_k^2)) where n_k is the signed
    circular offset of the bin from the zero-shift bin.
    """
    dims = tuple(int(d) for d in np.atleast_1d(dims))
    sigmas = tuple(float(s) for s in np.atleast_1d(sigmas))
    if len(sigmas) != len(dims):
        raise ValueError("need one sigma per axis")
    if any(s <= 0 for s in sigmas):
        raise ValueError(f"sigmas must be positive, got {sigmas}")
    expo = np.zeros(dims)
    for axis, (n, sigma) in enumerate(zip(dims, sigmas)):
        off = circular_offsets(n).astype(float)
        shape = [1] * len(dims)
        shape[axis] = n
        expo = expo + (off**2 / (2.0 * sigma**2)).reshape(shape)
    return np.exp(-expo)


def _pad_spectrum_axis(a: np.ndarray, axis: int, target: int) -> np.ndarray:
    """Zero-pad the high frequencies of one axis of a DFT spectrum.

    For an even source length the Nyquist coefficient is split equally
    between the +N/2 and -N/2 bins of the padded spectrum, which keeps
    the interpolant real-valued for real input.
    """
    src = a.shape[axis]
    if target == src:
        return a
    shape = list(a.shape)
    shape[axis] = target
    out = np.zeros(shape, dtype=complex)

    even = src % 2 == 0
    pos = (src - 1) // 2  # highest non-Nyquist positive frequency
    neg = src - (pos + 1) - (1 if even else 0)

    def sl(arr, lo, hi):
        idx = [slice(None)] * arr.ndim
        idx[axis] = slice(lo, hi)
        return tuple(idx)

    out[sl(out, 0, pos + 1)] = a[sl(a, 0, pos + 1)]
    if neg:
        out[sl(out, target - neg, target)] = a[sl(a, src - neg, src)]
    if even:
        ny = [slice(None)] * a.ndim
        ny[axis] = src // 2
        half = 0.5 * a[tuple(ny)]
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[axis] = src // 2
        hi[axis] = target - src // 2
        out[tuple(lo)] = half
        out[tuple(hi)] += half
    return out


def interpolate_scores(Y: np.ndarray, target_dims) -> np.ndarray:
    """Trigonometric (zero-padding) interpolation of correlation scores.

    ``Y`` is the DFT of the scores. Returns the real part of the inverse
    DFT of the zero-padded spectrum, scaled by prod(target)/prod(source),
    which evaluates the interpolating trigonometric polynomial on the
    refined grid. Original grid points are reproduced.
    """
    Y = np.asarray(_check_grid(Y), dtype=complex)
    target_dims = tuple(int(d) for d in np.atleast_1d(target_dims))
    if len(target_dims) != Y.ndim:
        raise ValueError("target_dims arity must match the spectrum")
    for t, s in zip(target_dims, Y.shape):
        if t < s:
            raise ValueError(f"cannot shrink axis from {s} to {t}")
    out = Y
    for axis, t in enumerate(target_dims):
        out = _pad_spectrum_axis(out, axis, t)
    scale = float(np.prod(target_dims)) / float(np.prod(Y.shape))
    return np.real(np.fft.ifftn(out)) * scale
