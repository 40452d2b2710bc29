"""Synthetic vessel images, the rotation pretext task, and PGM ingestion.

A negative image is a few bright curvilinear strokes (cubic Bezier curves
with a Gaussian cross-section) over smooth low-frequency background.  The
main vessel always runs from the top edge towards the bottom, so the images
have a canonical orientation.  A positive image additionally has a local
narrowing of the main vessel's stroke width.
"""

from __future__ import annotations

import csv
import enum
import os
from dataclasses import dataclass, field

import numpy as np

from .rng import stream

SIZE = 32

_yy, _xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
_PIX = np.stack([_yy.ravel(), _xx.ravel()], axis=1)


class IngestionError(ValueError):
    pass


class Difficulty(str, enum.Enum):
    EASY = "easy"
    HARD = "hard"


# narrowing: fraction of stroke width removed; extent: stenosis length as a
# fraction of the vessel; jitter: natural width modulation; noise: pixel sigma
_PROFILE = {
    Difficulty.EASY: dict(narrowing=(0.50, 0.85), extent=0.15, jitter=0.0, noise=0.02, branches=(1, 2)),
    Difficulty.HARD: dict(narrowing=(0.15, 0.85), extent=0.15, jitter=0.04, noise=0.04, branches=(1, 3)),
}


@dataclass
class Sample:
    image: np.ndarray  # 1×32×32, values in [0, 1]
    label: int
    id: str
    true_label: int | None = None

    def __post_init__(self):
        if self.true_label is None:
            self.true_label = self.label


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 2000
    n_val: int = 400
    n_test: int = 120
    positive_fraction: float = 0.5
    label_noise: float = 0.0
    difficulty: Difficulty = Difficulty.HARD
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "difficulty", Difficulty(self.difficulty))
        for name in ("n_train", "n_val", "n_test"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2")
        if not 0.0 < self.positive_fraction < 1.0:
            raise ValueError("positive_fraction must lie in (0, 1)")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")


@dataclass
class Splits:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]
    spec: DatasetSpec | None = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.train, self.val, self.test))


# --- rendering ----------------------------------------------------------------

def _bezier(ctrl: np.ndarray, n: int = 96) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    p0, p1, p2, p3 = ctrl
    return (1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * p1 + 3 * (1 - t) * t ** 2 * p2 + t ** 3 * p3


def _stroke(points: np.ndarray, sigma: np.ndarray, gain: np.ndarray | None = None) -> np.ndarray:
    # max over curve points of gain * exp(-d^2 / 2s^2) == exp of the min exponent
    dy = _PIX[:, 0:1] - points[None, :, 0]
    dx = _PIX[:, 1:2] - points[None, :, 1]
    expo = (dy * dy + dx * dx) * (0.5 / (sigma * sigma))[None, :]
    if gain is not None:
        expo = expo - np.log(gain)[None, :]
    return np.exp(-expo.min(axis=1)).reshape(SIZE, SIZE)


def _smooth_field(rng: np.random.Generator, grid: int = 5) -> np.ndarray:
    return resize_bilinear(rng.random((grid, grid)), SIZE, SIZE)


def _width_jitter(rng, n, amount):
    if amount == 0.0:
        return np.ones(n)
    t = np.linspace(0.0, 1.0, n)
    phase, freq = rng.uniform(0, 2 * np.pi), rng.uniform(1.0, 3.0)
    return 1.0 + amount * np.sin(2 * np.pi * freq * t + phase)


def render_vessels(rng: np.random.Generator, difficulty=Difficulty.HARD, stenosis: bool = False) -> np.ndarray:
    """Draw one 32×32 vessel image; with ``stenosis`` the main vessel is narrowed locally."""
    prof = _PROFILE[Difficulty(difficulty)]
    img = 0.05 + 0.15 * _smooth_field(rng)
    # main vessel: top edge to bottom edge
    ctrl = np.array([
        [rng.uniform(-2, 2), rng.uniform(8, 24)],
        [rng.uniform(6, 14), rng.uniform(4, 28)],
        [rng.uniform(18, 26), rng.uniform(4, 28)],
        [rng.uniform(30, 34), rng.uniform(8, 24)],
    ])
    pts = _bezier(ctrl)
    n = len(pts)
    t = np.linspace(0.0, 1.0, n)
    width = _width_jitter(rng, n, prof["jitter"])
    t0 = rng.uniform(0.3, 0.7)
    r = rng.uniform(*prof["narrowing"])
    if stenosis:
        width = width * (1.0 - r * np.exp(-0.5 * ((t - t0) / prof["extent"]) ** 2))
    sigma = rng.uniform(1.2, 1.8) * width
    contrast = rng.uniform(0.6, 0.8)
    # projected opacity follows the local lumen width
    vessels = contrast * _stroke(pts, sigma, width if prof.get("projected", True) else None)
    # side branches leave the main vessel towards the right
    for _ in range(rng.integers(prof["branches"][0], prof["branches"][1] + 1)):
        k = int(rng.integers(n // 5, 4 * n // 5))
        start = pts[k]
        bctrl = np.array([
            start,
            start + [rng.uniform(2, 8), rng.uniform(2, 8)],
            start + [rng.uniform(4, 14), rng.uniform(6, 16)],
            start + [rng.uniform(6, 18), rng.uniform(10, 22)],
        ])
        bs = rng.uniform(0.7, 1.1) * _width_jitter(rng, n, prof["jitter"])
        vessels = np.maximum(vessels, rng.uniform(0.45, 0.7) * _stroke(_bezier(bctrl), bs))
    img = img + vessels + rng.normal(0.0, prof["noise"], size=img.shape)
    return np.clip(img, 0.0, 1.0)[None]


def _split_labels(n: int, fraction: float, rng) -> np.ndarray:
    n_pos = int(round(fraction * n))
    labels = np.zeros(n, dtype=int)
    labels[:n_pos] = 1
    return rng.permutation(labels)


def _make_split(name: str, n: int, spec: DatasetSpec) -> list[Sample]:
    rng = stream(spec.seed, f"data:{name}")
    labels = _split_labels(n, spec.positive_fraction, rng)
    return [
        Sample(render_vessels(rng, spec.difficulty, bool(y)), int(y), f"{name}-{i:05d}")
        for i, y in enumerate(labels)
    ]


def generate(spec: DatasetSpec) -> Splits:
    train = _make_split("train", spec.n_train, spec)
    if spec.label_noise > 0:
        flips = stream(spec.seed, "data:labels").random(len(train)) < spec.label_noise
        for s, f in zip(train, flips):
            if f:
                s.label = 1 - s.label
    return Splits(train, _make_split("val", spec.n_val, spec), _make_split("test", spec.n_test, spec), spec)


def rotate(image: np.ndarray, k: int) -> np.ndarray:
    """Rotate by ``k`` quarter turns (counter-clockwise) in the image plane."""
    return np.ascontiguousarray(np.rot90(image, k % 4, axes=(-2, -1)))


def generate_pretext(n: int, seed: int, difficulty=Difficulty.HARD) -> list[tuple[np.ndarray, int]]:
    """Vessel images rotated by k*90 degrees and labeled with k; class counts differ by at most one."""
    if n < 4:
        raise ValueError("pretext set needs n >= 4")
    rng = stream(seed, "pretext")
    ks = rng.permutation(np.arange(n) % 4)
    return [(rotate(render_vessels(rng, difficulty, bool(rng.random() < 0.5)), int(k)), int(k)) for k in ks]


def stack(samples) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.image for s in samples]), np.array([s.label for s in samples], dtype=int)


# --- bilinear resampling and PGM IO -------------------------------------------

def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with pixel-centre alignment and edge clamping."""
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = axis(in_h, out_h)
    x0, x1, fx = axis(in_w, out_w)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def write_pgm(path, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0]
    q = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{q.shape[1]} {q.shape[0]}\n255\n".encode())
        fh.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5) into a float array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise IngestionError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise IngestionError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise IngestionError(f"{path}: malformed PGM header") from exc
    if maxval != 255 or w < 1 or h < 1:
        raise IngestionError(f"{path}: only 8-bit PGM with maxval 255 is supported")
    body = raw[pos:pos + w * h]
    if len(body) != w * h:
        raise IngestionError(f"{path}: PGM payload shorter than {w}x{h}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def write_split(directory, samples) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "filename", "label"])
        for s in samples:
            fname = f"{s.id}.pgm"
            write_pgm(os.path.join(directory, fname), s.image)
            w.writerow([s.id, fname, s.label])


def load_directory(path, manifest: str = "manifest.csv") -> list[Sample]:
    manifest_path = manifest if os.path.isabs(manifest) else os.path.join(path, manifest)
    if not os.path.exists(manifest_path):
        raise IngestionError(f"manifest not found: {manifest_path}")
    samples = []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["id", "filename", "label"]:
            raise IngestionError(f"{manifest_path}: header must be id,filename,label")
        for lineno, row in enumerate(reader, start=2):
            where = f"{manifest_path} line {lineno} (id={row['id']!r})"
            if row["label"] not in ("0", "1"):
                raise IngestionError(f"{where}: label {row['label']!r} is not 0 or 1")
            fpath = os.path.join(path, row["filename"])
            if not os.path.exists(fpath):
                raise IngestionError(f"{where}: missing file {row['filename']}")
            try:
                img = read_pgm(fpath)
            except IngestionError as exc:
                raise IngestionError(f"{where}: {exc}") from exc
            if img.shape != (SIZE, SIZE):
                img = resize_bilinear(img, SIZE, SIZE)
            samples.append(Sample(img[None], int(row["label"]), row["id"]))
    return samples
