"""Micrograph loading, phase encoding, region geometry and patch sampling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image

NPHASE = "nphase"
GRAYSCALE = "grayscale"
COLOUR = "colour"

GRAY_COEFFS = np.array([0.2989, 0.5870, 0.1140], dtype=np.float64)

# Images with at most this many distinct scalar values are treated as segmented.
NPHASE_DETECT_MAX = 10


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Micrograph:
    """A homogeneous micrograph with typed channel encoding.

    ``data`` is float32 of shape (height, width, channels) with values in
    [0, 1].  N-phase images are stored one-hot over ``n_phases`` channels and
    remember the original pixel values in ``phase_values`` so exports map
    phases back to the source gray levels.
    """

    data: np.ndarray
    kind: str
    n_phases: int | None = None
    phase_values: tuple[float, ...] | None = None
    source_hash: str = ""

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("micrograph data must be (height, width, channels)")
        if self.data.size == 0:
            raise ValueError("zero-area image")
        if self.data.dtype != np.float32:
            object.__setattr__(self, "data", self.data.astype(np.float32))
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"channel values outside [0,1]: min={lo}, max={hi}")
        if self.kind == NPHASE:
            if self.n_phases is None or self.n_phases < 2:
                raise ValueError("n-phase image needs n_phases >= 2")
            if self.data.shape[2] != self.n_phases:
                raise ValueError("channel count must equal n_phases")
            sums = self.data.sum(axis=2)
            if not (np.all(np.isin(self.data, (0.0, 1.0))) and np.all(sums == 1.0)):
                raise ValueError("n-phase data must be exactly one-hot")
            if self.phase_values is None:
                object.__setattr__(
                    self,
                    "phase_values",
                    tuple(i / (self.n_phases - 1) for i in range(self.n_phases)),
                )
            if len(self.phase_values) != self.n_phases:
                raise ValueError("phase_values length must equal n_phases")
            if any(b <= a for a, b in zip(self.phase_values, self.phase_values[1:])):
                raise ValueError("phase_values must be strictly increasing")
        elif self.kind == GRAYSCALE:
            if self.data.shape[2] != 1:
                raise ValueError("grayscale image must have 1 channel")
        elif self.kind == COLOUR:
            if self.data.shape[2] != 3:
                raise ValueError("colour image must have 3 channels")
        else:
            raise ValueError(f"unknown image kind: {self.kind!r}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def grayscale(cls, values: np.ndarray, source_hash: str = "") -> "Micrograph":
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h = source_hash or _sha256(arr.tobytes())
        return cls(arr, GRAYSCALE, source_hash=h)

    @classmethod
    def colour(cls, values: np.ndarray, source_hash: str = "") -> "Micrograph":
        arr = np.asarray(values, dtype=np.float32)
        h = source_hash or _sha256(arr.tobytes())
        return cls(arr, COLOUR, source_hash=h)

    def labels(self) -> np.ndarray:
        """Per-pixel phase indices (n-phase images only)."""
        if self.kind != NPHASE:
            raise ValueError("labels() requires an n-phase image")
        return decode_argmax(self.data)

    def gray(self) -> np.ndarray:
        """Single-channel view in [0,1]: phases map to equally spaced levels,
        colour goes through the luma transform."""
        if self.kind == NPHASE:
            return (self.labels() / (self.n_phases - 1)).astype(np.float32)
        if self.kind == GRAYSCALE:
            return self.data[:, :, 0]
        return rgb_to_gray(self.data)

    def with_data(self, data: np.ndarray) -> "Micrograph":
        return replace(self, data=data)


def rgb_to_gray(c: np.ndarray) -> np.ndarray:
    """Luma transform: dot product with (0.2989, 0.5870, 0.1140)."""
    arr = np.asarray(c, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError("expected 3 channels")
    return (arr @ GRAY_COEFFS).astype(np.float32)


def encode_onehot(
    labels: np.ndarray,
    n: int,
    phase_values: tuple[float, ...] | None = None,
    source_hash: str = "",
) -> Micrograph:
    """One-hot encode a label image into an n-phase micrograph."""
    lab = np.asarray(labels)
    if n < 2:
        raise ValueError("n_phases must be >= 2")
    if lab.min() < 0 or lab.max() >= n:
        raise ValueError(f"labels must lie in [0, {n})")
    onehot = np.eye(n, dtype=np.float32)[lab.astype(np.int64)]
    h = source_hash or _sha256(lab.astype(np.int64).tobytes())
    return Micrograph(onehot, NPHASE, n_phases=n, phase_values=phase_values, source_hash=h)


def decode_argmax(channels: np.ndarray) -> np.ndarray:
    """Per-pixel index of the maximal channel; ties break to the lowest index."""
    arr = np.asarray(channels)
    if arr.ndim != 3:
        raise ValueError("expected (height, width, channels)")
    return np.argmax(arr, axis=2)


def _normalise_raster(img: Image.Image) -> np.ndarray:
    """PIL image -> float32 array in [0,1], shape (h, w, 1) or (h, w, 3)."""
    if img.mode in ("P", "CMYK", "RGBA", "LA"):
        img = img.convert("RGB" if img.mode != "LA" else "L")
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    elif arr.dtype == np.uint16:
        arr = arr.astype(np.float32) / 65535.0
    elif arr.dtype == np.int32:  # PIL mode "I"
        arr = arr.astype(np.float32) / float(max(arr.max(), 1))
    else:
        arr = arr.astype(np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr


def load_micrograph(path: str | Path, kind_hint: str | None = None) -> Micrograph:
    """Load a raster image and detect its kind.

    Detection: single-channel data (including colour files whose channels are
    all equal) with at most 10 distinct values becomes n-phase with one phase
    per value; otherwise 1 channel is grayscale and 3 channels colour.  A
    ``kind_hint`` overrides detection.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise ValueError(f"unreadable image file {path}: {exc}") from None
    arr = _normalise_raster(img)
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("zero-area image")
    return micrograph_from_array(arr, kind_hint=kind_hint, source_hash=_sha256(raw))


def micrograph_from_array(
    arr: np.ndarray, kind_hint: str | None = None, source_hash: str = ""
) -> Micrograph:
    """Build a micrograph from a float array in [0,1] using the same kind
    detection as :func:`load_micrograph`."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    source_hash = source_hash or _sha256(arr.tobytes())
    # collapse colour files that are really gray renderings
    if arr.shape[2] == 3 and np.all(arr[:, :, 0] == arr[:, :, 1]) and np.all(
        arr[:, :, 1] == arr[:, :, 2]
    ):
        scalar = arr[:, :, :1]
    elif arr.shape[2] == 1:
        scalar = arr
    else:
        scalar = None

    if kind_hint is None:
        if scalar is not None:
            values = np.unique(scalar)
            if values.size <= NPHASE_DETECT_MAX:
                kind_hint = NPHASE
            else:
                kind_hint = GRAYSCALE
        else:
            kind_hint = COLOUR

    if kind_hint == NPHASE:
        if scalar is None:
            raise ValueError("n-phase images must carry a single scalar value per pixel")
        values = np.unique(scalar)
        if values.size > NPHASE_DETECT_MAX:
            raise ValueError(
                f"{values.size} distinct values is too many for an n-phase image"
            )
        labels = np.searchsorted(values, scalar[:, :, 0])
        return encode_onehot(
            labels, values.size, tuple(float(v) for v in values), source_hash
        )
    if kind_hint == GRAYSCALE:
        if scalar is None:
            scalar = rgb_to_gray(arr)[:, :, None]
        return Micrograph(scalar, GRAYSCALE, source_hash=source_hash)
    if kind_hint == COLOUR:
        if arr.shape[2] != 3:
            raise ValueError("colour hint requires a 3-channel source")
        return Micrograph(arr, COLOUR, source_hash=source_hash)
    raise ValueError(f"unknown kind hint: {kind_hint!r}")


def render_uint8(m: Micrograph) -> np.ndarray:
    """Render to uint8 for export; phases map back through phase_values."""
    if m.kind == NPHASE:
        values = np.array(m.phase_values, dtype=np.float32)
        out = values[m.labels()]
        return np.round(out * 255.0).astype(np.uint8)
    arr = np.round(m.data * 255.0).astype(np.uint8)
    return arr[:, :, 0] if m.kind == GRAYSCALE else arr


def save_png(m: Micrograph, path: str | Path) -> None:
    Image.fromarray(render_uint8(m)).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("rectangle must have positive extent")

    @property
    def x1(self) -> int:
        return self.x + self.w

    @property
    def y1(self) -> int:
        return self.y + self.h

    def expand(self, margin: int) -> "Rect":
        return Rect(self.x - margin, self.y - margin, self.w + 2 * margin, self.h + 2 * margin)

    def contains(self, other: "Rect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def intersects(self, other: "Rect") -> bool:
        return not (
            other.x >= self.x1 or other.x1 <= self.x or other.y >= self.y1 or other.y1 <= self.y
        )


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    """True when the open segments p1p2 and p3p4 cross or overlap."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(
            a[1], b[1]
        )

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and on_segment(p3, p4, p1):
        return True
    if d2 == 0 and on_segment(p3, p4, p2):
        return True
    if d3 == 0 and on_segment(p1, p2, p3):
        return True
    if d4 == 0 and on_segment(p1, p2, p4):
        return True
    return False


@dataclass(frozen=True)
class RectRegion:
    """Rectangular occlusion; extents must be positive multiples of 8."""

    rect: Rect
    annulus_width: int = 16

    def __post_init__(self):
        if self.rect.w % 8 or self.rect.h % 8:
            raise ValueError(
                f"rectangle extents must be multiples of 8, got {self.rect.w}x{self.rect.h}"
            )
        if self.annulus_width <= 0:
            raise ValueError("annulus width must be positive")

    @property
    def bbox(self) -> Rect:
        return self.rect

    @property
    def window(self) -> Rect:
        return self.rect.expand(self.annulus_width)

    def occlusion_mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=bool)
        mask[self.rect.y : self.rect.y1, self.rect.x : self.rect.x1] = True
        return mask

    def to_json(self) -> dict:
        r = self.rect
        return {"shape": "rect", "x": r.x, "y": r.y, "w": r.w, "h": r.h}


@dataclass(frozen=True)
class PolygonRegion:
    """Simple-polygon occlusion; vertices are integer pixel coordinates."""

    vertices: tuple[tuple[int, int], ...]
    annulus_width: int = 16

    def __post_init__(self):
        verts = tuple((int(x), int(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if len(set(verts)) != len(verts):
            raise ValueError("polygon has repeated vertices")
        n = len(verts)
        edges = [(verts[i], verts[(i + 1) % n]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue  # adjacent edges share an endpoint by construction
                if _segments_properly_intersect(*edges[i], *edges[j]):
                    raise ValueError("polygon is self-intersecting")
        if self.bbox.w <= 0 or self.bbox.h <= 0:
            raise ValueError("polygon has zero area")
        if self.annulus_width <= 0:
            raise ValueError("annulus width must be positive")

    @property
    def bbox(self) -> Rect:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return Rect(min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))

    @property
    def window(self) -> Rect:
        return self.bbox.expand(self.annulus_width)

    def occlusion_mask(self, height: int, width: int) -> np.ndarray:
        """Even-odd scanline fill sampled at pixel centres."""
        mask = np.zeros((height, width), dtype=bool)
        verts = self.vertices
        n = len(verts)
        bb = self.bbox
        for y in range(max(bb.y, 0), min(bb.y1, height)):
            yc = y + 0.5
            xs = []
            for i in range(n):
                (x1, y1), (x2, y2) = verts[i], verts[(i + 1) % n]
                if (y1 <= yc) != (y2 <= yc):
                    xs.append(x1 + (yc - y1) * (x2 - x1) / (y2 - y1))
            xs.sort()
            for a, b in zip(xs[::2], xs[1::2]):
                lo = max(int(np.ceil(a - 0.5)), 0)
                hi = min(int(np.ceil(b - 0.5)), width)
                if hi > lo:
                    mask[y, lo:hi] = True
        return mask

    def to_json(self) -> dict:
        return {"shape": "polygon", "vertices": [list(v) for v in self.vertices]}


Region = RectRegion | PolygonRegion


def region_from_json(obj: dict | str, annulus_width: int = 16) -> Region:
    if isinstance(obj, str):
        obj = json.loads(obj)
    shape = obj.get("shape")
    if shape == "rect":
        return RectRegion(
            Rect(int(obj["x"]), int(obj["y"]), int(obj["w"]), int(obj["h"])),
            annulus_width=annulus_width,
        )
    if shape == "polygon":
        return PolygonRegion(
            tuple((int(x), int(y)) for x, y in obj["vertices"]), annulus_width=annulus_width
        )
    raise ValueError(f"unknown region shape: {shape!r}")


def validate_region(region: Region, m: Micrograph) -> None:
    """Check the derived window fits the micrograph and the annulus is non-empty."""
    w = region.window
    img = Rect(0, 0, m.width, m.height)
    if not img.contains(w):
        raise ValueError(
            f"region window {w} exceeds the {m.width}x{m.height} micrograph"
        )
    win = region.window
    interior = region.occlusion_mask(m.height, m.width)[win.y : win.y1, win.x : win.x1]
    if interior.all():
        raise ValueError("annulus is empty: occlusion covers the whole window")


def annulus_mask(region: Region) -> np.ndarray:
    """Boolean mask over the region window marking the matching target.

    Rectangles mark exactly the band between window and interior; polygons
    mark every window pixel outside the polygon interior, so all known pixels
    in the window participate in boundary matching.
    """
    win = region.window
    if isinstance(region, RectRegion):
        mask = np.ones((win.h, win.w), dtype=bool)
        a = region.annulus_width
        mask[a : a + region.rect.h, a : a + region.rect.w] = False
        return mask
    # polygon: rasterise relative to the window origin
    shifted = PolygonRegion(
        tuple((x - win.x, y - win.y) for x, y in region.vertices),
        annulus_width=region.annulus_width,
    )
    return ~shifted.occlusion_mask(win.h, win.w)


# ---------------------------------------------------------------------------
# Patch sampling

AUG_NONE = "none"
AUG_FLIPS_AND_ROT90 = "flips_and_rot90"


class PatchSet:
    """Training patches drawn from the unoccluded area of a micrograph.

    Every sampled patch is fully disjoint from the exclusion region's window,
    so the masked-off pixels can never leak into the training distribution.
    """

    def __init__(
        self,
        source: Micrograph,
        exclusion: Region | None = None,
        patch_size: int = 64,
        augmentation: str = AUG_FLIPS_AND_ROT90,
    ):
        if patch_size > min(source.width, source.height):
            raise ValueError("patch size exceeds the micrograph")
        if augmentation not in (AUG_NONE, AUG_FLIPS_AND_ROT90):
            raise ValueError(f"unknown augmentation: {augmentation!r}")
        if exclusion is not None:
            validate_region(exclusion, source)
        self.source = source
        self.exclusion = exclusion
        self.patch_size = patch_size
        self.augmentation = augmentation
        self._tensor = torch.from_numpy(
            np.ascontiguousarray(source.data.transpose(2, 0, 1))
        )
        self._positions = self._valid_positions()
        if len(self._positions) == 0:
            raise ValueError("no valid patch position outside the excluded window")

    def _valid_positions(self) -> torch.Tensor:
        p = self.patch_size
        nx = self.source.width - p + 1
        ny = self.source.height - p + 1
        xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
        xs, ys = xs.ravel(), ys.ravel()
        if self.exclusion is not None:
            win = self.exclusion.window
            overlap = (xs < win.x1) & (xs + p > win.x) & (ys < win.y1) & (ys + p > win.y)
            xs, ys = xs[~overlap], ys[~overlap]
        return torch.from_numpy(np.stack([xs, ys], axis=1))

    @property
    def n_positions(self) -> int:
        return len(self._positions)

    def sample(self, count: int, rng: torch.Generator) -> torch.Tensor:
        """Draw ``count`` patches as a (count, channels, p, p) float tensor."""
        p = self.patch_size
        idx = torch.randint(self.n_positions, (count,), generator=rng)
        if self.augmentation == AUG_FLIPS_AND_ROT90:
            ks = torch.randint(4, (count,), generator=rng)
            flips = torch.randint(2, (count,), generator=rng)
        else:
            ks = flips = torch.zeros(count, dtype=torch.long)
        out = torch.empty((count, self.source.channels, p, p), dtype=torch.float32)
        for i in range(count):
            x, y = self._positions[idx[i]].tolist()
            patch = self._tensor[:, y : y + p, x : x + p]
            if ks[i]:
                patch = torch.rot90(patch, int(ks[i]), dims=(1, 2))
            if flips[i]:
                patch = torch.flip(patch, dims=(2,))
            out[i] = patch
        return out


def sample_patches(ps: PatchSet, count: int, rng: torch.Generator) -> torch.Tensor:
    return ps.sample(count, rng)
