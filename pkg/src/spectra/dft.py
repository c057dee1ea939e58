"""
2D discrete Fourier transforms for arbitrary rectangular grids.

Conventions: the forward transform is unnormalized,

    F(u, v) = sum_x sum_y I(x, y) exp(-2j*pi*(u*x/H + v*y/W))

and the inverse carries the 1/(H*W) factor. ``x``/``u`` index rows and
``y``/``v`` index columns.

The fast path is a separable 1D FFT applied along columns then rows. Each 1D
transform uses a mixed-radix Cooley-Tukey decimation when every prime factor
of the length is small, and Bluestein's chirp-z reduction to a power-of-two
length otherwise. Inputs are never zero-padded.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CenteringError, NonRealResultError, ShapeError, SizeExceededError
from .image_io import ImageGrid, as_grid

# largest prime radix handled by a dense butterfly; bigger primes go through Bluestein
MAX_RADIX = 31
NAIVE_MAX_BINS = 4096
IMAG_ABS_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex frequency field (complex128, i.e. interleaved float64 pairs)."""

    data: np.ndarray
    dc_centered: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"Spectrum needs a non-empty 2D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


# ---------------------------------------------------------------------------
# 1D kernels


def _prime_factors(n: int) -> list[int]:
    out = []
    p = 2
    while p * p <= n:
        while n % p == 0:
            out.append(p)
            n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def _radices(n: int) -> tuple[int, ...]:
    factors = _prime_factors(n)
    # pair up 2s into radix-4 stages: fewer passes, same dense butterfly code
    radices = []
    twos = factors.count(2)
    radices += [4] * (twos // 2) + [2] * (twos % 2)
    radices += [f for f in factors if f != 2]
    return tuple(radices)


def _unit_roots(num: np.ndarray, n: int) -> np.ndarray:
    """exp(-2j*pi*num/n) with the integer numerator reduced mod n first."""
    return np.exp(-2j * np.pi * (np.asarray(num) % n) / n)


@lru_cache(maxsize=None)
def _stage(n: int, p: int):
    m = n // p
    r = np.arange(p)
    twiddle = _unit_roots(np.outer(r, np.arange(m)), n)
    butterfly = _unit_roots(np.outer(r, r), p)
    return twiddle, butterfly


def _mixed_radix(x: np.ndarray, radices: tuple[int, ...]) -> np.ndarray:
    n = x.shape[-1]
    if n == 1:
        return x
    p = radices[0]
    m = n // p
    # x[j*p + r] -> subsequence r; transform each of the p subsequences of length m
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    sub = _mixed_radix(sub, radices[1:])
    twiddle, butterfly = _stage(n, p)
    # X[k + m*q] = sum_r W_p^{rq} * W_n^{rk} * Y_r[k]
    out = np.matmul(butterfly, sub * twiddle)
    return out.reshape(x.shape[:-1] + (n,))


@lru_cache(maxsize=None)
def _bluestein_plan(n: int):
    m = 1
    while m < 2 * n - 1:
        m *= 2
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    kernel = np.zeros(m, dtype=np.complex128)
    kernel[:n] = np.conj(chirp)
    kernel[m - n + 1:] = np.conj(chirp[1:])[::-1]
    radices = _radices(m)
    kernel_f = _mixed_radix(kernel, radices)
    return m, chirp, kernel_f, radices


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m, chirp, kernel_f, radices = _bluestein_plan(n)
    padded = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    padded[..., :n] = x * chirp
    conv = _mixed_radix(padded, radices) * kernel_f
    # inverse via conjugation: ifft(z) = conj(fft(conj(z))) / m
    conv = np.conj(_mixed_radix(np.conj(conv), radices)) / m
    return conv[..., :n] * chirp


def fft1d(x: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT along the last axis, any length."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n <= 1:
        return x.copy()
    radices = _radices(n)
    if max(radices) > MAX_RADIX:
        return _bluestein(x)
    return _mixed_radix(x, radices)


def _fft2(a: np.ndarray) -> np.ndarray:
    # rows (sum over y for each x), then columns (sum over x)
    rows = fft1d(a)
    return np.swapaxes(fft1d(np.swapaxes(rows, 0, 1)), 0, 1)


# ---------------------------------------------------------------------------
# public transforms


def dft_forward(img) -> Spectrum:
    """Uncentered, unnormalized 2D DFT of an image."""
    return Spectrum(_fft2(as_grid(img).data), dc_centered=False)


def dft_inverse(spec: Spectrum) -> ImageGrid:
    """Inverse 2D DFT with 1/(H*W) normalization, returned as a real grid.

    Raises NonRealResultError when the imaginary residue is large compared to
    the real part, which means the spectrum was not conjugate-symmetric.
    """
    if spec.dc_centered:
        raise CenteringError("dft_inverse expects an uncentered spectrum; call uncenter first")
    h, w = spec.shape
    out = np.conj(_fft2(np.conj(spec.data))) / (h * w)
    imag = np.max(np.abs(out.imag))
    real = np.max(np.abs(out.real))
    # absolute floor (intensity units) so an all-rounding-noise result, e.g. the
    # high-pass of a constant image, is not mistaken for an asymmetric spectrum
    if imag > max(1e-6 * real, IMAG_ABS_FLOOR):
        raise NonRealResultError(
            f"inverse transform is not real: max|imag|={imag:.3e}, max|real|={real:.3e}"
        )
    return ImageGrid(out.real)


def dft_naive(img) -> Spectrum:
    """Direct double-sum evaluation of the forward DFT (reference oracle).

    No separability, no factorization: every bin is the full sum over every
    pixel. Limited to ``NAIVE_MAX_BINS`` pixels.
    """
    data = as_grid(img).data
    h, w = data.shape
    n = h * w
    if n > NAIVE_MAX_BINS:
        raise SizeExceededError(f"dft_naive is limited to {NAIVE_MAX_BINS} pixels, got {h}x{w}")
    x, y = np.divmod(np.arange(n), w)
    flat = data.reshape(-1)
    out = np.empty(n, dtype=np.complex128)
    chunk = max(1, (1 << 20) // n)
    for start in range(0, n, chunk):
        u, v = np.divmod(np.arange(start, min(n, start + chunk)), w)
        # u*x/H + v*y/W == (u*x*W + v*y*H) / (H*W); keep the numerator integral
        num = np.outer(u, x) * w + np.outer(v, y) * h
        out[start:start + len(u)] = np.exp(-2j * np.pi * (num % n) / n) @ flat
    return Spectrum(out.reshape(h, w), dc_centered=False)


def magnitude(spec: Spectrum) -> ImageGrid:
    return ImageGrid(np.hypot(spec.data.real, spec.data.imag))


def phase(spec: Spectrum) -> ImageGrid:
    """Per-bin angle in (-pi, pi]; the bin 0+0j maps to 0."""
    re, im = spec.data.real, spec.data.imag
    # adding +0.0 turns -0.0 into +0.0, so atan2 gives +pi (not -pi) on the negative real axis
    angle = np.arctan2(im + 0.0, re)
    return ImageGrid(np.where((im == 0) & (re == 0), 0.0, angle))


def center(spec: Spectrum) -> Spectrum:
    """Move DC from (0, 0) to (H//2, W//2)."""
    if spec.dc_centered:
        raise CenteringError("spectrum is already centered")
    h, w = spec.shape
    return Spectrum(np.roll(spec.data, (h // 2, w // 2), axis=(0, 1)), dc_centered=True)


def uncenter(spec: Spectrum) -> Spectrum:
    if not spec.dc_centered:
        raise CenteringError("spectrum is already uncentered")
    h, w = spec.shape
    return Spectrum(np.roll(spec.data, (-(h // 2), -(w // 2)), axis=(0, 1)), dc_centered=False)


def log_magnitude_image(img) -> ImageGrid:
    """Centered log(1 + |F|), min-max normalized, for visual inspection."""
    from .enhance import normalize_minmax

    spec = center(dft_forward(img))
    return normalize_minmax(ImageGrid(np.log1p(np.abs(spec.data))))
