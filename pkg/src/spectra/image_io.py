"""
Grayscale image I/O and dataset ingestion.

Intensities live in memory as float64 in [0, 1]; 8-bit quantization only
happens when reading or writing files. The dataset scanner understands the
four-class Alzheimer MRI layout (one directory per class, optionally under
``train/`` and ``test/``).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    EmptyDatasetError,
    ImageDecodeError,
    ImageNotFoundError,
    ImageWriteError,
    MissingClassDirectoryError,
    ShapeError,
    UnsupportedBitDepthError,
)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

# ITU-R BT.601 luma weights
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """A 2D real intensity field stored row-major as float64."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"ImageGrid needs a non-empty 2D array, got shape {arr.shape}")
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

    def __repr__(self):
        return f"ImageGrid({self.height}x{self.width}, range=[{self.data.min():.4g}, {self.data.max():.4g}])"


def as_grid(img) -> ImageGrid:
    return img if isinstance(img, ImageGrid) else ImageGrid(img)


class ClassLabel(IntEnum):
    NonDemented = 0
    VeryMildDemented = 1
    MildDemented = 2
    ModerateDemented = 3

    @classmethod
    def parse(cls, text: str) -> "ClassLabel":
        """Accept an index ("2") or any spelling of a class name ("Mild_Demented")."""
        text = text.strip()
        if text.isdigit():
            return cls(int(text))
        key = normalize_class_name(text)
        for label in cls:
            if normalize_class_name(label.name) == key:
                return label
        raise ValueError(f"unknown class label {text!r}")


CLASS_NAMES = [label.name for label in ClassLabel]


def normalize_class_name(name: str) -> str:
    return re.sub(r"[\s_]+", "", name).lower()


# ---------------------------------------------------------------------------
# single images


def _luminance(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    lum = _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b
    # gray pixels keep their exact value; the weighted sum can be off by an ulp
    gray = (r == g) & (g == b)
    return np.where(gray, r, lum)


def load_grayscale(path) -> ImageGrid:
    """Read a PNG/JPEG with 8-bit channels into an ImageGrid in [0, 1].

    Colour images are reduced with BT.601 luminance weights. Alpha channels
    are dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(path, "file not found")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            if mode in ("L", "LA"):
                arr = np.asarray(im)
                arr = arr[..., 0] if arr.ndim == 3 else arr
                values = arr.astype(np.float64)
            elif mode in ("RGB", "RGBA", "RGBX"):
                values = _luminance(np.asarray(im)[..., :3])
            else:
                raise UnsupportedBitDepthError(path, f"unsupported pixel mode {mode!r} (need 8-bit channels)")
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, UnsupportedBitDepthError):
            raise
        raise ImageDecodeError(path, f"cannot decode image ({exc})") from exc
    return ImageGrid(values / 255.0)


def quantize(img) -> np.ndarray:
    """Round-half-up v*255 and clamp to uint8."""
    data = as_grid(img).data
    q = np.floor(data * 255.0 + 0.5)
    return np.clip(q, 0, 255).astype(np.uint8)


def save_grayscale(img, path) -> None:
    """Write an 8-bit grayscale PNG."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(quantize(img)).save(path, format="PNG")
    except OSError as exc:
        raise ImageWriteError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset layout


@dataclass(frozen=True)
class DatasetManifest:
    """Labeled image paths for one split, sorted by path.

    ``rejected`` lists image-suffixed files that failed to decode during the
    scan; they are not part of ``entries``.
    """

    entries: tuple[tuple[Path, ClassLabel], ...]
    split: str
    root: Path
    rejected: tuple[Path, ...] = field(default=())

    def __len__(self):
        return len(self.entries)

    def counts(self) -> dict[ClassLabel, int]:
        out = {label: 0 for label in ClassLabel}
        for _, label in self.entries:
            out[label] += 1
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["path", "label_index", "label_name"])
            for p, label in self.entries:
                writer.writerow([p.as_posix(), int(label), label.name])


def _decodes(path: Path) -> bool:
    try:
        load_grayscale(path)
    except (ImageDecodeError, UnsupportedBitDepthError):
        return False
    return True


def _split_root(root: Path, split: str) -> Path:
    for child in sorted(root.iterdir()) if root.is_dir() else ():
        if child.is_dir() and child.name.lower() == split:
            return child
    return root


def scan_dataset(root, split: str = "train") -> DatasetManifest:
    """Build a manifest of every decodable image under the four class directories.

    ``root`` may either hold the class directories directly or hold a
    ``train``/``test`` directory that does.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    root = Path(root)
    if not root.is_dir():
        raise EmptyDatasetError(f"{root}: not a directory")
    base = _split_root(root, split)

    class_dirs: dict[ClassLabel, list[Path]] = {label: [] for label in ClassLabel}
    for child in sorted(base.iterdir()):
        if not child.is_dir():
            continue
        try:
            label = ClassLabel.parse(child.name)
        except ValueError:
            continue
        class_dirs[label].append(child)
    missing = [label.name for label, dirs in class_dirs.items() if not dirs]
    if missing:
        raise MissingClassDirectoryError(base, missing)

    entries = []
    rejected = []
    for label, dirs in class_dirs.items():
        for d in dirs:
            for p in d.rglob("*"):
                if not p.is_file() or p.suffix.lower() not in IMAGE_SUFFIXES:
                    continue
                if _decodes(p):
                    entries.append((p, label))
                else:
                    rejected.append(p)
    if not entries:
        raise EmptyDatasetError(f"{base}: no decodable images found")
    entries.sort(key=lambda e: e[0].as_posix())
    rejected.sort(key=lambda p: p.as_posix())
    return DatasetManifest(tuple(entries), split, base, tuple(rejected))
