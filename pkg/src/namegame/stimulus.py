"""Color-patch stimulus generation in CIE-L*u*v* and rendering to sRGB images."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

__all__ = [
    "ColorPoint",
    "GaussianComponentSpec",
    "StimulusSet",
    "builtin_dataset_specs",
    "sample_stimuli",
    "luv_to_srgb",
    "render_patch",
    "patch_png_bytes",
    "write_manifest",
    "read_manifest",
    "write_patch_images",
    "D65_WHITE_XYZ",
]

# D65 reference white in XYZ (2-degree observer), the sRGB native white point.
D65_WHITE_XYZ = (0.95047, 1.0, 1.08883)

# Linear-light XYZ -> sRGB primaries (IEC 61966-2-1, D65).
_XYZ_TO_SRGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)

_KAPPA = 24389.0 / 27.0  # CIE lightness threshold constant


@dataclass(frozen=True)
class ColorPoint:
    """A point in CIE-L*u*v*. Stored unclamped; clamping happens at render time."""

    l: float
    u: float
    v: float

    def __post_init__(self):
        if not all(np.isfinite([self.l, self.u, self.v])):
            raise ValueError("color components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.u, self.v], dtype=float)


@dataclass(frozen=True)
class GaussianComponentSpec:
    """Mean and covariance of one stimulus-generating Gaussian component."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.shape != (3,):
            raise ValueError(f"mean must be a 3-vector, got shape {mean.shape}")
        if cov.shape != (3, 3):
            raise ValueError(f"covariance must be 3x3, got shape {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        eigvals = np.linalg.eigvalsh(cov)
        if np.min(eigvals) <= 0:
            raise ValueError("covariance must be positive-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class StimulusSet:
    """An ordered stimulus dataset: color points with their generating component."""

    id: str
    stimuli: tuple[tuple[ColorPoint, int], ...]
    seed: int

    def __len__(self) -> int:
        return len(self.stimuli)

    def observations(self) -> np.ndarray:
        """All stimuli as an (n, 3) array of raw L*u*v* values."""
        return np.array([p.as_array() for p, _ in self.stimuli])

    def component_indices(self) -> np.ndarray:
        """1-based generating-component index per stimulus."""
        return np.array([k for _, k in self.stimuli], dtype=int)


def builtin_dataset_specs() -> tuple[list[GaussianComponentSpec], list[GaussianComponentSpec]]:
    """The two built-in three-component mixtures: (hard, easy).

    The hard mixture has closely spaced chroma means, the easy one widely
    spaced means; lightness variance is shared.
    """
    hard = [
        GaussianComponentSpec(np.array([60.0, -10.0, 20.0]), np.diag([25.0, 81.0, 81.0])),
        GaussianComponentSpec(np.array([60.0, -20.0, -10.0]), np.diag([25.0, 81.0, 81.0])),
        GaussianComponentSpec(np.array([60.0, 20.0, 10.0]), np.diag([25.0, 81.0, 81.0])),
    ]
    easy = [
        GaussianComponentSpec(np.array([60.0, 30.0, 30.0]), np.diag([25.0, 100.0, 100.0])),
        GaussianComponentSpec(np.array([60.0, 30.0, -30.0]), np.diag([25.0, 100.0, 100.0])),
        GaussianComponentSpec(np.array([60.0, -30.0, -30.0]), np.diag([25.0, 100.0, 100.0])),
    ]
    return hard, easy


def dataset_specs(name: str) -> list[GaussianComponentSpec]:
    """Look up a built-in mixture by name ('hard' or 'easy')."""
    hard, easy = builtin_dataset_specs()
    try:
        return {"hard": hard, "easy": easy}[name]
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; expected 'hard' or 'easy'") from None


def sample_stimuli(
    spec: list[GaussianComponentSpec],
    n: int,
    seed: int,
    dataset_id: str = "dataset",
) -> StimulusSet:
    """Draw n stimuli: uniform component choice, then a draw from that Gaussian.

    Deterministic for a given (spec, n, seed).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not spec:
        raise ValueError("spec must contain at least one component")
    chols = [np.linalg.cholesky(c.covariance) for c in spec]  # re-validates PD
    rng = np.random.default_rng(seed)
    components = rng.integers(0, len(spec), size=n)
    stimuli = []
    for k in components:
        x = spec[k].mean + chols[k] @ rng.standard_normal(3)
        stimuli.append((ColorPoint(*x), int(k) + 1))
    return StimulusSet(id=dataset_id, stimuli=tuple(stimuli), seed=seed)


def _luv_to_xyz(l: float, u: float, v: float, white_point) -> np.ndarray:
    xn, yn, zn = white_point
    if l <= 0:
        return np.zeros(3)
    denom_n = xn + 15.0 * yn + 3.0 * zn
    un = 4.0 * xn / denom_n
    vn = 9.0 * yn / denom_n
    if l > 8.0:
        y = yn * ((l + 16.0) / 116.0) ** 3
    else:
        y = yn * l / _KAPPA
    u_prime = u / (13.0 * l) + un
    v_prime = v / (13.0 * l) + vn
    if v_prime <= 0:
        # degenerate chromaticity; out of any physical gamut
        return np.array([0.0, y, 0.0])
    x = y * 9.0 * u_prime / (4.0 * v_prime)
    z = y * (12.0 - 3.0 * u_prime - 20.0 * v_prime) / (4.0 * v_prime)
    return np.array([x, y, z])


def luv_to_srgb(p: ColorPoint, white_point=D65_WHITE_XYZ) -> tuple[float, float, float]:
    """Convert L*u*v* to gamma-encoded sRGB in [0, 1], clamping out-of-gamut channels."""
    xyz = _luv_to_xyz(p.l, p.u, p.v, white_point)
    linear = _XYZ_TO_SRGB @ xyz
    srgb = np.where(
        linear <= 0.0031308,
        12.92 * linear,
        1.055 * np.sign(linear) * np.abs(linear) ** (1.0 / 2.4) - 0.055,
    )
    r, g, b = np.clip(srgb, 0.0, 1.0)
    return float(r), float(g), float(b)


def render_patch(
    p: ColorPoint,
    size_px: int,
    background: tuple[int, int, int] = (128, 128, 128),
    margin_frac: float = 0.08,
) -> Image.Image:
    """Render a filled color circle on a neutral background.

    L* is clamped to [0, 100] here (raw samples may exceed it). Output bytes are
    deterministic for fixed inputs.
    """
    if size_px < 16:
        raise ValueError("size_px must be >= 16")
    clamped = ColorPoint(min(max(p.l, 0.0), 100.0), p.u, p.v)
    rgb = luv_to_srgb(clamped)
    fill = tuple(int(round(255 * c)) for c in rgb)
    img = Image.new("RGB", (size_px, size_px), background)
    draw = ImageDraw.Draw(img)
    margin = int(round(size_px * margin_frac))
    draw.ellipse([margin, margin, size_px - 1 - margin, size_px - 1 - margin], fill=fill)
    return img


def patch_png_bytes(p: ColorPoint, size_px: int, **kwargs) -> bytes:
    """PNG encoding of render_patch; byte-identical across calls."""
    buf = io.BytesIO()
    render_patch(p, size_px, **kwargs).save(buf, format="PNG")
    return buf.getvalue()


def manifest_dict(sset: StimulusSet, spec: list[GaussianComponentSpec]) -> dict:
    """Manifest document for a stimulus set; field order is stable."""
    return {
        "schema": 1,
        "id": sset.id,
        "seed": sset.seed,
        "spec": [
            {"mean": list(c.mean), "covariance": [list(row) for row in c.covariance]}
            for c in spec
        ],
        "stimuli": [
            {"l": p.l, "u": p.u, "v": p.v, "component_index": k}
            for p, k in sset.stimuli
        ],
    }


def write_manifest(sset: StimulusSet, spec: list[GaussianComponentSpec], path) -> None:
    Path(path).write_text(json.dumps(manifest_dict(sset, spec), indent=2) + "\n")


def read_manifest(path) -> tuple[StimulusSet, list[GaussianComponentSpec]]:
    doc = json.loads(Path(path).read_text())
    return manifest_from_dict(doc)


def manifest_from_dict(doc: dict) -> tuple[StimulusSet, list[GaussianComponentSpec]]:
    spec = [
        GaussianComponentSpec(np.array(c["mean"]), np.array(c["covariance"]))
        for c in doc["spec"]
    ]
    stimuli = tuple(
        (ColorPoint(s["l"], s["u"], s["v"]), int(s["component_index"]))
        for s in doc["stimuli"]
    )
    sset = StimulusSet(id=doc["id"], stimuli=stimuli, seed=int(doc["seed"]))
    return sset, spec


def write_patch_images(sset: StimulusSet, out_dir, size_px: int = 128) -> list[Path]:
    """Write one PNG per stimulus, named <dataset>_<index>.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (p, _) in enumerate(sset.stimuli):
        path = out / f"{sset.id}_{i}.png"
        path.write_bytes(patch_png_bytes(p, size_px))
        paths.append(path)
    return paths
