"""
Frequency-domain enhancement: radial filter masks, filtering by spectrum
multiplication, unsharp-mask style detail boosting and tonal adjustments.

Boundary handling is circular everywhere because filtering is done by DFT
multiplication. ``convolve_freq`` computes a true (flipped-kernel) circular
convolution; the CNN layers in ``spectra.cnn`` use cross-correlation instead.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .dft import Spectrum, center, dft_forward, dft_inverse, uncenter
from .errors import ConfigError, ShapeError
from .image_io import ImageGrid, as_grid, quantize


FILTER_KINDS = ("ideal", "gaussian", "butterworth")


@dataclass(frozen=True, eq=False)
class FilterMask:
    """Real transfer function laid out with DC at (H//2, W//2)."""

    data: np.ndarray
    kind: str
    cutoff: float
    order: int = 1
    highpass: bool = False

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"FilterMask needs a 2D array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def dc_centered(self) -> bool:
        return True


def radial_distance(h: int, w: int) -> np.ndarray:
    """Normalized distance from the centered DC bin; 1.0 at the half-band edge."""
    du = (np.arange(h) - h // 2) / (h / 2)
    dv = (np.arange(w) - w // 2) / (w / 2)
    return np.sqrt(du[:, None] ** 2 + dv[None, :] ** 2)


def build_lowpass(h: int, w: int, kind: str = "gaussian", cutoff: float = 0.3, order: int = 2) -> FilterMask:
    if h < 1 or w < 1:
        raise ShapeError(f"mask shape must be positive, got {h}x{w}")
    if not 0.0 < cutoff <= 1.0:
        raise ConfigError(f"cutoff must lie in (0, 1], got {cutoff}")
    d = radial_distance(h, w)
    if kind == "ideal":
        data = (d <= cutoff).astype(np.float64)
    elif kind == "gaussian":
        data = np.exp(-(d ** 2) / (2.0 * cutoff ** 2))
    elif kind == "butterworth":
        if int(order) != order or order < 1:
            raise ConfigError(f"butterworth order must be a positive integer, got {order}")
        data = 1.0 / (1.0 + (d / cutoff) ** (2 * int(order)))
    else:
        raise ConfigError(f"unknown filter kind {kind!r}; expected one of {FILTER_KINDS}")
    return FilterMask(data, kind, float(cutoff), int(order), highpass=False)


def highpass_from_lowpass(lp: FilterMask) -> FilterMask:
    return FilterMask(1.0 - lp.data, lp.kind, lp.cutoff, lp.order, highpass=not lp.highpass)


def apply_filter(img, mask: FilterMask) -> ImageGrid:
    """Multiply the centered spectrum by ``mask`` and transform back.

    The result is not renormalized.
    """
    img = as_grid(img)
    if img.shape != mask.shape:
        raise ShapeError(f"image {img.shape} and mask {mask.shape} differ in shape")
    spec = center(dft_forward(img))
    filtered = Spectrum(spec.data * mask.data, dc_centered=True)
    return dft_inverse(uncenter(filtered))


def convolve_freq(img, kernel) -> ImageGrid:
    """Circular convolution via the DFT, kernel anchored at (0, 0)."""
    img, kernel = as_grid(img), as_grid(kernel)
    kh, kw = kernel.shape
    if kh > img.height or kw > img.width:
        raise ShapeError(f"kernel {kernel.shape} larger than image {img.shape}")
    padded = np.zeros(img.shape)
    padded[:kh, :kw] = kernel.data
    product = dft_forward(img).data * dft_forward(padded).data
    return dft_inverse(Spectrum(product))


def gaussian_kernel(h: int, w: int, sigma: float) -> ImageGrid:
    """Normalized periodic gaussian of image size with its peak at (0, 0).

    Negative offsets wrap to the far edge, so convolving with it smooths the
    image without shifting it.
    """
    dx = np.minimum(np.arange(h), h - np.arange(h))
    dy = np.minimum(np.arange(w), w - np.arange(w))
    # sigma**2 may underflow; the floor degrades the kernel to a delta instead of 0/0
    var = max(sigma ** 2, np.finfo(np.float64).tiny)
    with np.errstate(over="ignore"):
        g = np.exp(-(dx[:, None] ** 2 + dy[None, :] ** 2) / (2.0 * var))
    return ImageGrid(g / g.sum())


def normalize_minmax(img) -> ImageGrid:
    data = as_grid(img).data
    lo, hi = data.min(), data.max()
    if hi - lo < 1e-12:
        return ImageGrid(np.full(data.shape, 0.5))
    return ImageGrid((data - lo) / (hi - lo))


def adjust_brightness_contrast(img, brightness: float = 0.0, contrast: float = 1.0) -> ImageGrid:
    if not contrast > 0:
        raise ConfigError(f"contrast must be positive, got {contrast}")
    data = as_grid(img).data
    # gamma*(v - 0.5) + 0.5 + beta, grouped so beta=0, gamma=1 is bit-exact identity
    return ImageGrid(np.clip(contrast * data + (0.5 - 0.5 * contrast + brightness), 0.0, 1.0))


def equalization_lut(levels: np.ndarray) -> np.ndarray | None:
    """Level -> output value table for 8-bit ``levels``; None for a single level."""
    hist = np.bincount(levels.reshape(-1), minlength=256)
    cdf = np.cumsum(hist) / levels.size
    cdf_min = cdf[cdf > 0].min()
    if cdf_min >= 1.0:
        return None
    return (cdf - cdf_min) / (1.0 - cdf_min)


def histogram_equalize(img) -> ImageGrid:
    img = as_grid(img)
    levels = quantize(img)
    lut = equalization_lut(levels)
    if lut is None:
        return img
    return ImageGrid(np.clip(lut[levels], 0.0, 1.0))


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class EnhanceConfig:
    filter: str = "gaussian"
    cutoff: float = 0.3
    order: int = 2
    alpha: float = 1.0
    pre_smooth: float = 0.0
    brightness: float = 0.0
    contrast: float = 1.0
    equalize: bool = True

    def __post_init__(self):
        if self.filter not in FILTER_KINDS:
            raise ConfigError(f"unknown filter kind {self.filter!r}; expected one of {FILTER_KINDS}")
        if not 0.0 < self.cutoff <= 1.0:
            raise ConfigError(f"cutoff must lie in (0, 1], got {self.cutoff}")
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"order must be a positive integer, got {self.order}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.pre_smooth < 0:
            raise ConfigError(f"pre_smooth must be nonnegative, got {self.pre_smooth}")
        if not -1.0 <= self.brightness <= 1.0:
            raise ConfigError(f"brightness must lie in [-1, 1], got {self.brightness}")
        if not self.contrast > 0:
            raise ConfigError(f"contrast must be positive, got {self.contrast}")

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, base: "EnhanceConfig | None" = None) -> "EnhanceConfig":
        """Parse ``key = value`` lines; ``#`` starts a comment."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in types:
                raise ConfigError(f"line {lineno}: cannot parse {raw!r}")
            values[key] = _coerce(types[key], value.strip(), lineno)
        return replace(base or cls(), **values)

    @classmethod
    def load(cls, path) -> "EnhanceConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _coerce(type_name, value: str, lineno: int):
    try:
        if type_name in ("bool", bool):
            return parse_bool(value)
        if type_name in ("int", int):
            return int(value)
        if type_name in ("float", float):
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from exc


def enhance(img, cfg: EnhanceConfig = EnhanceConfig()) -> ImageGrid:
    """Run the full enhancement chain on one image.

    Stages: optional gaussian pre-smoothing, detail extraction with the
    complement of the configured low-pass, recombination ``f + alpha*detail``,
    min-max normalization, optional histogram equalization and finally the
    brightness/contrast map. The output lies in [0, 1].
    """
    img = as_grid(img)
    if cfg.pre_smooth > 0:
        img = convolve_freq(img, gaussian_kernel(img.height, img.width, cfg.pre_smooth))
    lowpass = build_lowpass(img.height, img.width, cfg.filter, cfg.cutoff, cfg.order)
    if cfg.alpha > 0:
        detail = apply_filter(img, highpass_from_lowpass(lowpass))
        img = ImageGrid(img.data + cfg.alpha * detail.data)
    out = normalize_minmax(img)
    if cfg.equalize:
        out = histogram_equalize(out)
    return adjust_brightness_contrast(out, cfg.brightness, cfg.contrast)
