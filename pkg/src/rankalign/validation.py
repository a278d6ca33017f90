"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numpy as np

from .exceptions import ArgumentError


def check_matrix(X, name: str = "matrix", allow_empty: bool = False) -> np.ndarray:
    """Return ``X`` as a finite 2-D float array."""
    try:
        A = np.asarray(X, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ArgumentError(f"{name} is not numeric: {exc}") from exc
    if A.ndim != 2:
        raise ArgumentError(f"{name} must be 2-D, got {A.ndim}-D")
    if not allow_empty and A.size == 0:
        raise ArgumentError(f"{name} is empty")
    if not np.all(np.isfinite(A)):
        raise ArgumentError(f"{name} contains non-finite values")
    return A


def check_image(img, name: str = "image", min_size: int = 2) -> np.ndarray:
    A = check_matrix(img, name)
    if min(A.shape) < min_size:
        raise ArgumentError(f"{name} is {A.shape[1]}x{A.shape[0]}, needs at least {min_size}x{min_size}")
    return A


def check_images(images, min_count: int = 2, min_size: int = 2) -> list[np.ndarray]:
    imgs = [check_image(im, f"image {k}", min_size) for k, im in enumerate(images)]
    if len(imgs) < min_count:
        raise ArgumentError(f"need at least {min_count} images, got {len(imgs)}")
    return imgs


def check_jacobians(jacobians, m: int, n: int) -> np.ndarray:
    """Stack per-column Jacobians into an ``(n, m, d)`` array."""
    J = [check_matrix(j, f"jacobian {k}") for k, j in enumerate(jacobians)]
    if len(J) != n:
        raise ArgumentError(f"expected {n} Jacobians, got {len(J)}")
    shapes = {j.shape for j in J}
    if len(shapes) != 1 or next(iter(shapes))[0] != m:
        raise ArgumentError(f"Jacobians must all be {m} x d, got shapes {sorted(shapes)}")
    return np.stack(J)


def check_fraction(x: float, name: str, closed_low: bool = True, closed_high: bool = False) -> float:
    lo_ok = x >= 0 if closed_low else x > 0
    hi_ok = x <= 1 if closed_high else x < 1
    if not (lo_ok and hi_ok):
        raise ArgumentError(f"{name} must be a fraction, got {x}")
    return float(x)
