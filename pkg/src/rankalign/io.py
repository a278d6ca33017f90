"""Image and transform-file input/output."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .exceptions import ArgumentError
from .geometry import Canvas, CellGrid

LUMA = np.array([0.299, 0.587, 0.114])
FORMAT = "rankalign-transforms/1"


class UserInputError(ArgumentError):
    """Problem with a user-supplied file."""


def read_image(path, color: bool = False) -> np.ndarray:
    """Read a PNG or PGM file as floats in [0, 255].

    Colour inputs become grayscale by Rec. 601 luma unless ``color`` is set,
    in which case an ``(h, w, 3)`` array is returned.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I"):
                arr = np.asarray(im, dtype=float) * (255.0 / 65535.0)
            elif im.mode in ("L", "P", "RGB", "RGBA", "LA", "1"):
                arr = np.asarray(im.convert("RGB" if im.mode in ("P", "RGBA", "LA") else im.mode), dtype=float)
                if im.mode == "1":
                    arr = arr * 255.0
            else:
                arr = np.asarray(im.convert("RGB"), dtype=float)
    except FileNotFoundError as exc:
        raise UserInputError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UserInputError(f"{path}: cannot decode image ({exc})") from exc
    if arr.ndim == 3:
        if arr.shape[2] < 3:
            raise UserInputError(f"{path}: unsupported channel count {arr.shape[2]}")
        rgb = arr[..., :3]
        return rgb if color else rgb @ LUMA
    if arr.ndim != 2:
        raise UserInputError(f"{path}: unsupported image dimensions {arr.shape}")
    return np.repeat(arr[..., None], 3, axis=2) if color else arr


def write_png(path, image) -> None:
    arr = np.clip(np.rint(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(Path(path), format="PNG")


def transforms_document(paths, transforms, shapes, canvas: Canvas, reference: int = 0) -> dict:
    """JSON-ready document of pixel-frame transforms (8-vectors or cell grids)."""
    images = []
    for p, t, (h, w) in zip(paths, transforms, shapes):
        if isinstance(t, CellGrid):
            grid, bounds, cells = [t.rows, t.cols], list(t.bounds), t.params.tolist()
        else:
            grid, bounds, cells = [1, 1], [0.0, 0.0, float(w), float(h)], [np.asarray(t, float).tolist()]
        images.append({"path": str(p), "width": int(w), "height": int(h), "grid": grid,
                       "bounds": [float(b) for b in bounds], "cells": cells})
    return {"format": FORMAT, "reference": int(reference), "images": images,
            "canvas": {"origin": [int(canvas.origin[0]), int(canvas.origin[1])],
                       "width": int(canvas.width), "height": int(canvas.height)}}


def write_transforms(path, doc: dict) -> None:
    # json writes floats with their shortest exact round-trip representation
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_transforms(path):
    """Parse a transform file into ``(paths, transforms, canvas, reference)``.

    Single-cell entries come back as 8-vectors, others as cell grids.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UserInputError(f"{path}: no such file") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise UserInputError(f"{path}: not a valid transform file ({exc})") from exc
    try:
        paths, transforms = [], []
        for entry in doc["images"]:
            rows, cols = (int(v) for v in entry["grid"])
            cells = np.asarray(entry["cells"], dtype=float)
            if cells.shape != (rows * cols, 8):
                raise UserInputError(f"{path}: image {entry['path']} has {cells.shape} cell parameters, "
                                     f"expected {(rows * cols, 8)}")
            paths.append(entry["path"])
            if rows * cols == 1:
                transforms.append(cells[0])
            else:
                transforms.append(CellGrid(rows, cols, tuple(float(b) for b in entry["bounds"]), cells))
        c = doc["canvas"]
        canvas = Canvas((int(c["origin"][0]), int(c["origin"][1])), int(c["width"]), int(c["height"]))
        reference = int(doc.get("reference", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise UserInputError(f"{path}: malformed transform file ({exc})") from exc
    return paths, transforms, canvas, reference
