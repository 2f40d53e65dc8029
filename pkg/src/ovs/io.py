"""Disk formats: PNG frames, PGM masks, Middlebury .flo flow files."""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .core import Canvas, FlowField

FLO_MAGIC = b"PIEH"
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm")


def read_frame(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise FileNotFoundError(f"cannot read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0


def to_uint8(frame: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)


def write_frame(path, frame: np.ndarray) -> None:
    rgb = to_uint8(frame)
    if not cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise OSError(f"cannot write {path}")


def read_mask(path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FileNotFoundError(f"cannot read mask {path}")
    return img >= 128


def write_mask(path, mask: np.ndarray) -> None:
    data = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"cannot write {path}")


def read_flo(path) -> np.ndarray:
    """Read a Middlebury flow file into an (H, W, 2) float32 array."""
    raw = Path(path).read_bytes()
    if raw[:4] != FLO_MAGIC:
        raise ValueError(f"{path}: bad .flo magic {raw[:4]!r}")
    w, h = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    data = np.frombuffer(raw, dtype="<f4", count=int(w) * int(h) * 2, offset=12)
    return data.reshape(int(h), int(w), 2).copy()


def write_flo(path, uv: np.ndarray) -> None:
    uv = np.asarray(uv, dtype="<f4")
    h, w = uv.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(uv).tobytes())


def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return files


def read_sequence(directory, prefix: str | None = None) -> list[np.ndarray]:
    files = list_frames(directory)
    if prefix is not None:
        files = [p for p in files if p.name.startswith(prefix)]
    return [read_frame(p) for p in files]


def write_sequence(directory, frames, prefix: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = directory / f"{prefix}_{i:06d}.png"
        write_frame(path, frame)
        paths.append(path)
    return paths


def write_canvases(directory, canvases, prefix: str = "canvas") -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, canvas in enumerate(canvases):
        write_frame(directory / f"{prefix}_{i:06d}.png", canvas.image)
        write_mask(directory / f"mask_{i:06d}.pgm", canvas.mask)


def read_canvases(directory, pad: int, prefix: str = "canvas") -> list[Canvas]:
    directory = Path(directory)
    images = sorted(directory.glob(f"{prefix}_*.png"))
    out = []
    for path in images:
        idx = path.stem.split("_")[-1]
        mask_path = directory / f"mask_{idx}.pgm"
        image = read_frame(path)
        mask = read_mask(mask_path) if mask_path.exists() else np.ones(image.shape[:2], bool)
        out.append(Canvas(image * mask[..., None], mask, pad))
    return out


def flow_filename(ref_index: int, tgt_index: int) -> str:
    return f"flow_{ref_index:06d}_{tgt_index:06d}.flo"


def write_flow_field(path, flow: FlowField) -> None:
    write_flo(path, flow.uv)


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serialisable: {type(obj)!r}")
