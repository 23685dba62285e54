"""Inpaint results and the paste rule: only occluded pixels ever change."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .images import NPHASE, Micrograph, Rect, Region, decode_argmax


def ceil_multiple(v: int, m: int) -> int:
    return ((v + m - 1) // m) * m


def generator_window(region: Region, img_width: int, img_height: int) -> Rect:
    """The rectangle the generator output covers for this region.

    The occlusion bounding box is rounded up to multiples of 8 per axis, then
    expanded by 16 pixels per side; the window is clamped inside the image.
    For rectangular regions with the default annulus this equals the region
    window itself.
    """
    bb = region.bbox
    d_x = ceil_multiple(bb.w, 8)
    d_y = ceil_multiple(bb.h, 8)
    w, h = d_x + 32, d_y + 32
    if w > img_width or h > img_height:
        raise ValueError(f"generator window {w}x{h} exceeds the image")
    x = bb.x - (w - bb.w) // 2
    y = bb.y - (h - bb.h) // 2
    x = min(max(x, 0), img_width - w)
    y = min(max(y, 0), img_height - h)
    win = Rect(x, y, w, h)
    if not win.contains(bb):
        raise ValueError("generator window cannot cover the region inside the image")
    return win


def postprocess_output(out: torch.Tensor, kind: str) -> np.ndarray:
    """Generator output (channels, h, w) -> channels-last array ready to paste.

    N-phase softmax confidences are collapsed to one-hot via per-pixel argmax.
    """
    arr = out.detach().to(torch.float32).cpu().numpy().transpose(1, 2, 0)
    if kind == NPHASE:
        labels = decode_argmax(arr)
        arr = np.eye(arr.shape[2], dtype=np.float32)[labels]
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class InpaintResult:
    """A micrograph with one region replaced by synthetic content."""

    image: Micrograph
    region: Region
    method: str
    seed_digest: str = ""
    resample_warning: bool = False

    def verify_against(self, source: Micrograph) -> None:
        """Paste audit: every pixel outside the region must match the source."""
        if self.image.data.shape != source.data.shape:
            raise ValueError("result and source shapes differ")
        occl = self.region.occlusion_mask(source.height, source.width)
        if not np.array_equal(self.image.data[~occl], source.data[~occl]):
            raise AssertionError("paste audit failed: pixels outside the region changed")


def paste_window(
    source: Micrograph,
    region: Region,
    window: Rect,
    window_data: np.ndarray,
    method: str,
    seed_digest: str = "",
    resample_warning: bool = False,
) -> InpaintResult:
    """Replace only the occluded pixels inside ``window`` with ``window_data``.

    ``window_data`` is channels-last and must match the window extent; known
    pixels (the annulus and anything outside the occlusion) always come from
    the source, so the paste audit holds by construction.
    """
    if window_data.shape[:2] != (window.h, window.w):
        raise ValueError(
            f"window data {window_data.shape[:2]} does not match window {window.h}x{window.w}"
        )
    if window_data.shape[2] != source.channels:
        raise ValueError("window data channel count mismatch")
    occl = region.occlusion_mask(source.height, source.width)
    out = source.data.copy()
    sub = occl[window.y : window.y1, window.x : window.x1]
    view = out[window.y : window.y1, window.x : window.x1]
    view[sub] = window_data.astype(np.float32)[sub]
    result = InpaintResult(
        image=source.with_data(out),
        region=region,
        method=method,
        seed_digest=seed_digest,
        resample_warning=resample_warning,
    )
    result.verify_against(source)
    return result
