"""File formats: PNG images, raw SPT1 tensors and JSON model checkpoints."""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .data import DataFormatError, Dataset, read_idx
from .models import ReferenceModel

SPT_MAGIC = b"SPT1"


def read_png(path):
    """Read an 8-bit gray or RGB PNG as an ``(H, W, C)`` image in [0, 1]."""
    try:
        with PILImage.open(path) as img:
            img.load()
            if img.format != "PNG":
                raise DataFormatError(f"{path}: not a PNG file")
            if img.mode not in ("L", "RGB"):
                raise DataFormatError(f"{path}: unsupported PNG mode {img.mode!r}; need 8-bit gray or RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise DataFormatError(f"{path}: cannot read PNG ({exc})") from exc
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr / 255.0


def to_bytes(x):
    return np.round(np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, x):
    """Write an ``(H, W, C)`` image in [0, 1] as an 8-bit PNG (values rounded)."""
    arr = to_bytes(x)
    if arr.ndim != 3 or arr.shape[-1] not in (1, 3):
        raise ValueError(f"expected an (H, W, 1|3) image, got {arr.shape}")
    mode = "L" if arr.shape[-1] == 1 else "RGB"
    PILImage.fromarray(arr[..., 0] if mode == "L" else arr, mode=mode).save(path, format="PNG")


def write_tensor(path, tensor):
    """Write ``tensor`` as SPT1: magic, rank, dims (uint32 LE), float32 LE payload."""
    arr = np.asarray(tensor, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(SPT_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_tensor(path):
    """Read an SPT1 file as a float32 array."""
    raw = Path(path).read_bytes()
    if raw[:4] != SPT_MAGIC:
        raise DataFormatError(f"{path}: bad magic {raw[:4]!r}, expected {SPT_MAGIC!r}")
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header")
    (rank,) = struct.unpack("<I", raw[4:8])
    header = 8 + 4 * rank
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated header")
    dims = struct.unpack(f"<{rank}I", raw[8:header])
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    if len(raw) - header != expected:
        raise DataFormatError(f"{path}: payload has {len(raw) - header} bytes, dims {dims} need {expected}")
    return np.frombuffer(raw, dtype="<f4", offset=header).reshape(dims).astype(np.float32)


def read_image(path):
    """Read an image from ``.png`` or ``.spt``; SPT tensors may be (H, W) or (H, W, C)."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)
    arr = read_tensor(path).astype(np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[-1] not in (1, 3):
        raise DataFormatError(f"{path}: tensor of shape {arr.shape} is not an image")
    if not np.all((arr >= 0) & (arr <= 1)):
        raise DataFormatError(f"{path}: image components outside [0, 1]")
    return arr


def save_model(path, model):
    # json writes floats with repr(), the shortest string that round-trips
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return ReferenceModel.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_dataset(out_dir, name, dataset):
    """Write ``{name}-images.spt`` / ``{name}-labels.spt`` plus a ``meta.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(out_dir / f"{name}-images.spt", dataset.images)
    write_tensor(out_dir / f"{name}-labels.spt", dataset.labels)
    meta_path = out_dir / "meta.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    meta["n_classes"] = int(dataset.n_classes)
    meta.setdefault("splits", {})[name] = {"size": len(dataset), "shape": list(dataset.shape)}
    meta_path.write_text(json.dumps(meta, indent=2))


def load_dataset(images_path, labels_path, n_classes=None):
    """Load a dataset from an SPT1 pair or an IDX (MNIST) pair.

    ``n_classes`` defaults to the ``meta.json`` next to the images, else 10
    for IDX files, else the largest label plus one.
    """
    images_path, labels_path = Path(images_path), Path(labels_path)
    meta_path = images_path.parent / "meta.json"
    if n_classes is None and meta_path.exists():
        n_classes = json.loads(meta_path.read_text()).get("n_classes")
    if images_path.suffix == ".spt":
        images = read_tensor(images_path).astype(np.float64)
        labels = read_tensor(labels_path)
        if images.ndim == 3:
            images = images[..., None]
        if labels.ndim != 1 or np.any(labels != np.round(labels)):
            raise DataFormatError(f"{labels_path}: labels must be a 1-D tensor of integers")
        if images.shape[0] != labels.shape[0]:
            raise DataFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        labels = labels.astype(np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 1
        try:
            return Dataset(images, labels, int(n_classes))
        except ValueError as exc:
            raise DataFormatError(str(exc)) from exc
    return read_idx(images_path, labels_path, n_classes or 10)
