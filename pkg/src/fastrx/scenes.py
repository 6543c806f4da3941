"""Synthetic spectral scenes with planted anomalies.

``nonlinearity="none"`` draws the background from one Gaussian, which is
the setting where linear RX is optimal.  ``"mixture"`` draws it from three
well separated Gaussians and plants the anomalies near the overall mean,
off the plane of the component means.  A single global covariance then
explains the anomalies about as well as the background, while a kernel
density model does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidData
from .features import haar_orthogonal
from .linalg import DataMatrix

__all__ = ["SceneBundle", "synth_scene", "plant_blobs"]


@dataclass(frozen=True)
class SceneBundle:
    image: DataMatrix
    truth: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.truth is not None:
            t = np.asarray(self.truth).astype(np.uint8).ravel()
            if t.shape[0] != self.image.n:
                raise InvalidData(
                    f"mask has {t.shape[0]} pixels, image has {self.image.n}")
            object.__setattr__(self, "truth", t)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


def plant_blobs(height: int, width: int, count: int, rng: np.random.Generator,
                max_radius: int = 2) -> np.ndarray:
    """Boolean mask with exactly ``count`` pixels set, grouped in small square blobs."""
    mask = np.zeros((height, width), dtype=bool)
    total = 0
    while total < count:
        cy, cx = rng.integers(height), rng.integers(width)
        rad = int(rng.integers(0, max_radius + 1))
        ys = np.arange(max(cy - rad, 0), min(cy + rad + 1, height))
        xs = np.arange(max(cx - rad, 0), min(cx + rad + 1, width))
        for y in ys:
            for x in xs:
                if total == count:
                    break
                if not mask[y, x]:
                    mask[y, x] = True
                    total += 1
    return mask.ravel()


def _factor(bands: int, rng: np.random.Generator, scales: np.ndarray) -> np.ndarray:
    return haar_orthogonal(bands, rng) * scales[None, :]


def synth_scene(height: int = 100, width: int = 100, bands: int = 20,
                anomaly_fraction: float = 0.01, separation: float = 4.0,
                nonlinearity: str = "none", seed: int = 0) -> SceneBundle:
    """Generate a scene and its ground-truth mask.

    ``separation`` is the anomaly offset in units of the background standard
    deviation along the offset direction.  The number of anomalous pixels is
    ``round(anomaly_fraction * height * width)`` (at least one).
    """
    if not 0.0 < anomaly_fraction <= 0.1:
        raise InvalidData(f"anomaly_fraction must be in (0, 0.1], got {anomaly_fraction}")
    if height < 1 or width < 1 or bands < 1:
        raise InvalidData("height, width and bands must be >= 1")
    if nonlinearity == "mixture" and bands < 3:
        raise InvalidData("the mixture scene needs at least 3 bands")
    if separation < 0:
        raise InvalidData("separation must be >= 0")
    rng = np.random.default_rng(seed)
    n = height * width
    n_anom = max(1, int(round(anomaly_fraction * n)))
    mask = plant_blobs(height, width, n_anom, rng)
    n_bg = n - n_anom
    scales = np.linspace(1.0, 0.3, bands)
    offset = rng.uniform(0.0, 10.0, size=bands)

    X = np.empty((n, bands))
    if nonlinearity == "none":
        L = _factor(bands, rng, scales)
        X[~mask] = offset + rng.standard_normal((n_bg, bands)) @ L.T
        u = rng.standard_normal(bands)
        u /= np.linalg.norm(u)
        shift = separation * (L @ u)
        X[mask] = offset + shift + rng.standard_normal((n_anom, bands)) @ L.T
    elif nonlinearity == "mixture":
        basis = haar_orthogonal(bands, rng)
        plane, normal = basis[:, :2], basis[:, 2]
        radius = 6.0
        angles = 2.0 * np.pi * np.arange(3) / 3.0 + rng.uniform(0, 2 * np.pi)
        means = radius * (np.cos(angles)[:, None] * plane[:, 0] + np.sin(angles)[:, None] * plane[:, 1])
        factors = [_factor(bands, rng, 0.5 * scales) for _ in range(3)]
        comp = rng.integers(0, 3, size=n_bg)
        bg = np.empty((n_bg, bands))
        for k in range(3):
            sel = comp == k
            bg[sel] = means[k] + rng.standard_normal((int(sel.sum()), bands)) @ factors[k].T
        X[~mask] = offset + bg
        # global spread of the background along the offset direction
        std_normal = float(np.std(bg @ normal))
        centre = means.mean(axis=0)
        X[mask] = (offset + centre + separation * std_normal * normal
                   + 0.5 * rng.standard_normal((n_anom, bands)) @ factors[0].T)
    else:
        raise InvalidData(f"nonlinearity must be 'none' or 'mixture', got {nonlinearity!r}")

    image = DataMatrix(X, (height, width))
    prov = (f"synth height={height} width={width} bands={bands} fraction={anomaly_fraction} "
            f"separation={separation} nonlinearity={nonlinearity} seed={seed}")
    return SceneBundle(image, mask.astype(np.uint8), prov)
