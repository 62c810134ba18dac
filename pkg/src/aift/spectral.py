"""2-D discrete Fourier transform and the frequency-domain image encoding.

Two independent evaluation routes are kept on purpose: a radix-2
Cooley-Tukey fast path for power-of-two extents and a dense DFT-matrix
product for everything else.  They must agree to near machine precision,
which the test suite checks; neither route delegates to numpy's FFT.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Radix-2 decimation-in-time FFT along the last axis (length power of 2)."""
    n = x.shape[-1]
    if n == 1:
        return x.astype(np.complex128)
    even = _fft_pow2(x[..., 0::2])
    odd = _fft_pow2(x[..., 1::2])
    twiddle = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    t = twiddle * odd
    return np.concatenate([even + t, even - t], axis=-1)


def _dft_matrix(n: int) -> np.ndarray:
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(-2j * np.pi * j * k / n)


def _validate_2d(a: np.ndarray, op: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"{op} expects a 2-D array, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{op}: empty axis in shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{op}: input contains non-finite values")
    return a


def dft2(image: np.ndarray) -> np.ndarray:
    """2-D DFT of a real or complex [H, W] array, returned as complex128.

    Power-of-two extents take the fast recursive path; other sizes fall back
    to explicit DFT-matrix multiplication.
    """
    image = _validate_2d(image, "dft2")
    h, w = image.shape
    if _is_pow2(h) and _is_pow2(w):
        rows = _fft_pow2(np.asarray(image, dtype=np.complex128))
        return _fft_pow2(rows.T).T
    fh = _dft_matrix(h)
    fw = _dft_matrix(w)
    return fh @ np.asarray(image, dtype=np.complex128) @ fw.T


def idft2(spectrum: np.ndarray) -> np.ndarray:
    """Inverse 2-D DFT; returns the real part as float64.

    Uses the conjugation identity idft(X) = conj(dft(conj(X))) / (H * W), so
    both forward routes are reused unchanged.
    """
    spectrum = _validate_2d(spectrum, "idft2")
    h, w = spectrum.shape
    back = np.conj(dft2(np.conj(spectrum)))
    return np.ascontiguousarray((back / (h * w)).real)


def center_shift(a: np.ndarray) -> np.ndarray:
    """Move the zero-frequency bin to the array center (roll by half extents)."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DimensionError(f"center_shift expects a 2-D array, got shape {a.shape}")
    return np.roll(a, (a.shape[0] // 2, a.shape[1] // 2), axis=(0, 1))


def spectrum_image(image: np.ndarray) -> np.ndarray:
    """Encode an [H, W] image in [0, 1] as a same-shaped frequency image.

    Pipeline: magnitude of the 2-D DFT, log1p compression, zero-frequency
    bin moved to the center, then min-max rescaling to [0, 1].  An all-zero
    input has a flat spectrum; by convention it maps to zeros with a single
    1.0 marking the (centered) zero-frequency bin.
    """
    image = _validate_2d(image, "spectrum_image")
    if np.min(image) < 0.0 or np.max(image) > 1.0:
        raise DomainError("spectrum_image expects values in [0, 1]; normalize first")
    mag = np.log1p(np.abs(dft2(image)))
    shifted = center_shift(mag)
    lo = shifted.min()
    hi = shifted.max()
    if hi > lo:
        return (shifted - lo) / (hi - lo)
    flat = np.zeros_like(shifted)
    flat[image.shape[0] // 2, image.shape[1] // 2] = 1.0
    return flat


def conjugate_symmetry_error(spectrum_img: np.ndarray) -> float:
    """Largest deviation of a real image's frequency encoding from the
    M[a, b] == M[-a mod H, -b mod W] symmetry (measured before centering)."""
    spectrum_img = _validate_2d(spectrum_img, "conjugate_symmetry_error")
    h, w = spectrum_img.shape
    unshifted = np.roll(spectrum_img, (-(h // 2), -(w // 2)), axis=(0, 1))
    mirrored = unshifted[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    return float(np.max(np.abs(unshifted - mirrored)))
