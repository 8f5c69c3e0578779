"""Restoration quality metrics: PSNR and single-scale SSIM on [0, 1] pixels.

Both metrics are computed per image (column) and reported as the mean over
images.  SSIM uses the standard 11x11 Gaussian window (sigma 1.5, K1=0.01,
K2=0.03, L=1) with valid-window boundary handling; color images average the
per-channel values.
"""

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0

_CHUNK = 2048  # images per SSIM convolution batch, keeps temporaries small


def _check_pair(reference, test):
    if reference.images.shape != test.images.shape:
        raise ValueError(
            f"shape mismatch: reference {reference.images.shape} vs test {test.images.shape}"
        )
    if (reference.height, reference.width, reference.channels) != (
        test.height,
        test.width,
        test.channels,
    ):
        raise ValueError("geometry mismatch between reference and test image sets")


def psnr_per_image(reference, test):
    """Per-image 10*log10(1/MSE); +inf where the images are identical."""
    _check_pair(reference, test)
    diff = reference.images - test.images
    mse = np.mean(diff * diff, axis=0)
    with np.errstate(divide="ignore"):
        return -10.0 * np.log10(mse)


def psnr(reference, test):
    """Mean PSNR in dB over images; identical images are excluded from the mean."""
    values = psnr_per_image(reference, test)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return math.inf
    return float(finite.mean())


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


@lru_cache(maxsize=32)
def _conv_matrix(length, size=SSIM_WINDOW):
    # Banded Toeplitz matrix so the valid 1-D convolution is a BLAS matmul.
    out = length - size + 1
    if out < 1:
        raise ValueError(f"image extent {length} smaller than SSIM window {size}")
    kernel = _gaussian_window(size)
    t = np.zeros((length, out))
    for j in range(out):
        t[j : j + size, j] = kernel
    return t


def _window_mean(stack, th, tw):
    # stack (N, c, h, w); convolve h then w.
    a = np.tensordot(stack, th, axes=([2], [0]))  # (N, c, w, oh)
    a = np.tensordot(a, tw, axes=([2], [0]))  # (N, c, oh, ow)
    return a


def ssim_per_image(reference, test):
    """Per-image mean SSIM over valid windows (and channels, for color)."""
    _check_pair(reference, test)
    h, w = reference.height, reference.width
    th = _conv_matrix(h)
    tw = _conv_matrix(w)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    xs = reference.as_stack()
    ys = test.as_stack()
    count = reference.count
    values = np.empty(count)
    for start in range(0, count, _CHUNK):
        x = xs[start : start + _CHUNK]
        y = ys[start : start + _CHUNK]
        mu_x = _window_mean(x, th, tw)
        mu_y = _window_mean(y, th, tw)
        sxx = _window_mean(x * x, th, tw) - mu_x * mu_x
        syy = _window_mean(y * y, th, tw) - mu_y * mu_y
        sxy = _window_mean(x * y, th, tw) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
        values[start : start + x.shape[0]] = (num / den).mean(axis=(1, 2, 3))
    return values


def ssim(reference, test):
    """Mean single-scale SSIM over images."""
    return float(ssim_per_image(reference, test).mean())


@dataclass
class MetricReport:
    """Mean metrics for one restored/reference pair."""

    psnr_db: float
    ssim: float
    count: int
    inf_count: int = 0
    per_image_psnr: list = None
    per_image_ssim: list = None

    def to_json(self):
        return json.dumps(
            {
                "psnr_db": self.psnr_db,
                "ssim": self.ssim,
                "count": self.count,
                "inf_count": self.inf_count,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            psnr_db=d["psnr_db"],
            ssim=d["ssim"],
            count=d["count"],
            inf_count=d.get("inf_count", 0),
        )


def evaluate(reference, test, keep_per_image=False):
    """MetricReport for a restored set against its reference.

    SSIM is reported as nan when the geometry cannot fit the 11x11 window
    (e.g. synthetic point clouds stored as x-by-1 images).
    """
    p = psnr_per_image(reference, test)
    finite = p[np.isfinite(p)]
    mean_psnr = float(finite.mean()) if finite.size else math.inf
    if min(reference.height, reference.width) >= SSIM_WINDOW:
        s = ssim_per_image(reference, test)
        mean_ssim = float(s.mean())
    else:
        s = None
        mean_ssim = math.nan
    return MetricReport(
        psnr_db=mean_psnr,
        ssim=mean_ssim,
        count=reference.count,
        inf_count=int(np.sum(~np.isfinite(p))),
        per_image_psnr=p.tolist() if keep_per_image else None,
        per_image_ssim=(s.tolist() if (keep_per_image and s is not None) else None),
    )
