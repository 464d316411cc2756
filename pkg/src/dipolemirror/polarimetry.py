"""Imaging Stokes polarimetry of radially polarized beams.

A rotating quarter-wave plate in front of a fixed horizontal polarizer and
a camera yields a stack of intensity frames I(theta). Per pixel,

    I(theta) = (S0 + S1 c^2 + S2 s c - S3 s) / 2,
    c = cos(2 theta), s = sin(2 theta),

which this module inverts by least squares to recover the Stokes vector,
converts to ellipse parameters, and scores against the ideal radially
polarized target mode.

Conventions
-----------
Angles are radians. The orientation angle psi = atan2(S2, S1)/2 is folded
into [0, pi); the ellipticity angle chi = asin(S3/S0)/2 lies in
[-pi/4, pi/4], with chi = 0 for linear polarization. Pixel coordinates map
to the transverse plane through a PolarizationMap's center (row, col) and
pixel_scale, giving the radius in the same focal-length-normalized units
the radial mode profiles use.

The projection of the measured polarization onto the radial direction at
azimuth phi is

    p = sgn * cos(chi) * cos(psi - phi),

where sgn is +1 in the upper half plane and -1 in the lower. Because psi
is only defined modulo pi, this canonicalization makes a perfect radial
pattern score +1 at every pixel; genuine orientation errors still show up
as p < 1, and pixels whose linear component is closer to the azimuthal
direction go negative. ``rectify=True`` scores |p| instead, the pattern a
segmented half-wave corrector would produce.

Frames are stored on disk as 16-bit binary PGM plus a manifest listing
each file's wave-plate angle; the 16-bit quantization limits round-trip
fidelity to about 1e-5 in relative intensity.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError, DeterminacyError, DomainError
from .geometry import ApertureSpec
from .gridio import write_grid
from .modes import RadialMode

__all__ = [
    "FrameStack",
    "StokesMap",
    "PolarizationMap",
    "qwp_intensity",
    "stokes_from_frames",
    "ellipse_angles",
    "radial_projection",
    "measured_overlap",
    "OverlapResult",
    "write_pgm",
    "read_pgm",
    "save_frame_stack",
    "load_frame_stack",
    "export_polarization",
]

MIN_FRAMES = 5
PGM_MAXVAL = 65535


def qwp_intensity(stokes, theta):
    """Detected intensity for Stokes vector(s) behind the polarimeter.

    stokes has shape (4,) or (4, ...); theta is scalar. Used to model the
    instrument; the inverse problem is ``stokes_from_frames``.
    """
    stokes = np.asarray(stokes, dtype=float)
    if stokes.shape[0] != 4:
        raise DomainError("stokes must have leading dimension 4")
    c = math.cos(2.0 * theta)
    s = math.sin(2.0 * theta)
    return 0.5 * (stokes[0] + stokes[1] * c * c + stokes[2] * s * c - stokes[3] * s)


@dataclass(frozen=True)
class FrameStack:
    """Polarimeter frames with their wave-plate angles.

    frames has shape (n_angles, rows, cols); angles_rad matches the first
    axis. center is the (row, col) of the optical axis in pixel
    coordinates and pixel_scale converts pixels to focal-length units.
    """

    angles_rad: tuple
    frames: np.ndarray
    pixel_scale: float
    center: tuple

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "angles_rad", tuple(float(a) for a in self.angles_rad))
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if frames.ndim != 3:
            raise DomainError("frames must be a (n_angles, rows, cols) array")
        if frames.shape[0] != len(self.angles_rad):
            raise DomainError("one angle per frame required")
        if not np.all(np.isfinite(frames)) or frames.min() < 0:
            raise DomainError("frame intensities must be finite and non-negative")
        if self.pixel_scale <= 0:
            raise DomainError("pixel_scale must be positive")
        distinct = sorted(set(self.angles_rad))
        if len(distinct) < MIN_FRAMES:
            raise DeterminacyError(
                f"{len(distinct)} distinct wave-plate angles; "
                f"at least {MIN_FRAMES} needed to separate four Stokes parameters"
            )
        if distinct[-1] - distinct[0] < math.pi * (1.0 - 1e-9):
            raise DeterminacyError(
                "wave-plate angles must span at least pi for a well-conditioned inversion"
            )


@dataclass(frozen=True)
class StokesMap:
    """Per-pixel Stokes parameters recovered from a frame stack."""

    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    pixel_scale: float
    center: tuple

    def degree_of_polarization(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.s1**2 + self.s2**2 + self.s3**2) / self.s0


def stokes_from_frames(stack: FrameStack) -> StokesMap:
    """Invert the frame stack to Stokes parameters, pixel by pixel."""
    thetas = np.asarray(stack.angles_rad)
    c = np.cos(2.0 * thetas)
    s = np.sin(2.0 * thetas)
    design = 0.5 * np.column_stack([np.ones_like(c), c * c, s * c, -s])
    if np.linalg.matrix_rank(design) < 4:
        raise DeterminacyError("wave-plate angle set leaves the Stokes vector underdetermined")
    n, rows, cols = stack.frames.shape
    coef, *_ = np.linalg.lstsq(design, stack.frames.reshape(n, rows * cols), rcond=None)
    s0, s1, s2, s3 = (coef[i].reshape(rows, cols) for i in range(4))
    return StokesMap(s0=s0, s1=s1, s2=s2, s3=s3,
                     pixel_scale=stack.pixel_scale, center=stack.center)


@dataclass(frozen=True)
class PolarizationMap:
    """Intensity and ellipse angles per pixel, with a validity mask.

    psi and chi are NaN outside the mask. center/pixel_scale place the
    pixel grid in the transverse plane.
    """

    s0: np.ndarray
    psi: np.ndarray
    chi: np.ndarray
    mask: np.ndarray
    pixel_scale: float
    center: tuple

    def grid_polar(self):
        """(rho, phi) of every pixel center in focal-length units."""
        rows, cols = self.s0.shape
        y = (np.arange(rows) - self.center[0]) * self.pixel_scale
        x = (np.arange(cols) - self.center[1]) * self.pixel_scale
        xx, yy = np.meshgrid(x, y)
        return np.hypot(xx, yy), np.arctan2(yy, xx)


def ellipse_angles(stokes: StokesMap, noise_floor: float = 0.01) -> PolarizationMap:
    """Convert Stokes parameters to orientation and ellipticity angles.

    Pixels with s0 below noise_floor times the peak are masked out; pass
    noise_floor=0 to keep everything with positive intensity. S3/S0 is
    clamped to [-1, 1] so noise cannot push chi out of range.
    """
    if not 0.0 <= noise_floor < 1.0:
        raise DomainError("noise_floor must be in [0, 1)")
    peak = float(stokes.s0.max()) if stokes.s0.size else 0.0
    if peak <= 0:
        raise DomainError("no positive intensity in Stokes map")
    mask = stokes.s0 > noise_floor * peak
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = 0.5 * np.arctan2(stokes.s2, stokes.s1)
        psi = np.mod(psi, math.pi)
        chi = 0.5 * np.arcsin(np.clip(stokes.s3 / stokes.s0, -1.0, 1.0))
    psi = np.where(mask, psi, np.nan)
    chi = np.where(mask, chi, np.nan)
    return PolarizationMap(s0=stokes.s0, psi=psi, chi=chi, mask=mask,
                           pixel_scale=stokes.pixel_scale, center=stokes.center)


def radial_projection(pmap: PolarizationMap, rectify: bool = False):
    """Per-pixel projection of the measured polarization on the radial target.

    NaN outside the mask. See the module docstring for the half-plane sign
    canonicalization; rectify takes the absolute value.
    """
    _, phi = pmap.grid_polar()
    sign = np.where(np.sin(phi) >= 0.0, 1.0, -1.0)
    proj = sign * np.cos(pmap.chi) * np.cos(pmap.psi - phi)
    if rectify:
        proj = np.abs(proj)
    return np.where(pmap.mask, proj, np.nan)


@dataclass(frozen=True)
class OverlapResult:
    """Field overlap of a measured map with the target mode."""

    eta: float
    coverage: float
    n_pixels: int
    rectified: bool


def measured_overlap(
    pmap: PolarizationMap,
    aperture: ApertureSpec,
    reference: RadialMode | None = None,
    rectify: bool = False,
    trim_outer: float = 0.0,
    max_missing: float = 0.05,
) -> OverlapResult:
    """Overlap of the measured beam with the ideal mode over the aperture.

    The measured field amplitude is sqrt(s0) times the radial projection
    of its polarization; the reference defaults to the mode a linear
    dipole radiates into the mirror. All three sums run over the annulus
    pixels that survive the validity mask:

        eta = sum(a p b) / sqrt(sum(a^2) sum(b^2)).

    trim_outer shrinks the outer annulus radius by that fraction to drop
    rim artifacts. If more than max_missing of the annulus is masked out
    the estimate is refused (CoverageError carries the missing fraction).
    """
    if reference is None:
        reference = RadialMode.dipole()
    if not 0.0 <= trim_outer < 1.0:
        raise DomainError("trim_outer must be in [0, 1)")
    rho, _ = pmap.grid_polar()
    outer = aperture.rho_max * (1.0 - trim_outer)
    annulus = (rho >= aperture.rho_bore) & (rho <= outer)
    n_annulus = int(annulus.sum())
    if n_annulus == 0:
        raise CoverageError("no pixels fall inside the aperture annulus", missing_fraction=1.0)
    valid = annulus & pmap.mask
    missing = 1.0 - valid.sum() / n_annulus
    if missing > max_missing:
        raise CoverageError(
            f"{missing:.1%} of the aperture annulus is masked out "
            f"(limit {max_missing:.1%}); refusing an extrapolated overlap",
            missing_fraction=float(missing),
        )
    proj = radial_projection(pmap, rectify=rectify)
    a = np.sqrt(np.maximum(pmap.s0[valid], 0.0))
    p = proj[valid]
    b = reference.amplitude(rho[valid])
    denom = math.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    if denom == 0.0:
        raise DomainError("zero-energy field in overlap")
    eta = float(np.sum(a * p * b)) / denom
    return OverlapResult(eta=eta, coverage=1.0 - float(missing),
                         n_pixels=int(valid.sum()), rectified=bool(rectify))


def write_pgm(path, values):
    """Write a 2-d array scaled to [0, 1] as 16-bit binary PGM."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DomainError("PGM frames are 2-d")
    if values.min() < 0 or values.max() > 1.0 + 1e-12:
        raise DomainError("PGM values must be pre-scaled to [0, 1]")
    rows, cols = values.shape
    data = np.round(values * PGM_MAXVAL).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    """Read a binary PGM into floats in [0, 1]."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise DomainError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(m.group(i)) for i in (1, 2, 3))
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.frombuffer(raw[m.end():], dtype=dtype, count=rows * cols)
    return pixels.reshape(rows, cols).astype(float) / maxval


def save_frame_stack(stack: FrameStack, directory):
    """Write the frames as PGM files plus a manifest in ``directory``.

    One global intensity scale is applied to every frame so the relative
    intensities the Stokes inversion needs survive the trip.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    scale = float(stack.frames.max())
    if scale <= 0:
        raise DomainError("cannot save an all-dark frame stack")
    lines = [
        "# polarimeter frame manifest: filename angle_deg",
        f"# intensity_scale: {scale:.9e}",
        f"# pixel_scale: {stack.pixel_scale:.9e}",
        f"# center: {stack.center[0]:.3f} {stack.center[1]:.3f}",
    ]
    for k, (angle, frame) in enumerate(zip(stack.angles_rad, stack.frames)):
        name = f"frame_{k:03d}.pgm"
        write_pgm(directory / name, frame / scale)
        lines.append(f"{name} {math.degrees(angle):.6f}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_frame_stack(directory, threads: int = 1) -> FrameStack:
    """Read back a frame stack saved by ``save_frame_stack``.

    ``threads`` > 1 reads the PGM files concurrently; the frame order (and
    therefore every downstream result) does not depend on it.
    """
    directory = Path(directory)
    manifest = directory / "manifest.txt" if directory.is_dir() else directory
    directory = manifest.parent
    scale, pixel_scale, center = 1.0, None, None
    names, angles = [], []
    for raw in manifest.read_text().splitlines():
        line = raw.strip()
        if line.startswith("#"):
            for key, pattern in (
                ("intensity_scale", r"#\s*intensity_scale:\s*(\S+)"),
                ("pixel_scale", r"#\s*pixel_scale:\s*(\S+)"),
            ):
                m = re.match(pattern, line)
                if m:
                    if key == "intensity_scale":
                        scale = float(m.group(1))
                    else:
                        pixel_scale = float(m.group(1))
            m = re.match(r"#\s*center:\s*(\S+)\s+(\S+)", line)
            if m:
                center = (float(m.group(1)), float(m.group(2)))
            continue
        if not line:
            continue
        name, _, angle = line.partition(" ")
        names.append(name)
        angles.append(math.radians(float(angle)))
    if pixel_scale is None or center is None:
        raise DomainError(f"{manifest}: manifest lacks pixel_scale or center")
    if not names:
        raise DomainError(f"{manifest}: manifest lists no frames")
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            loaded = list(pool.map(lambda n: read_pgm(directory / n), names))
    else:
        loaded = [read_pgm(directory / name) for name in names]
    frames = np.stack(loaded) * scale
    return FrameStack(angles_rad=tuple(angles), frames=frames,
                      pixel_scale=pixel_scale, center=center)


def export_polarization(pmap: PolarizationMap, basepath):
    """Write s0/psi/chi grids next to each other for external plotting."""
    base = Path(basepath)
    meta = {
        "pixel_scale": pmap.pixel_scale,
        "center_row": pmap.center[0],
        "center_col": pmap.center[1],
    }
    write_grid(base.with_suffix(".s0.txt"), pmap.s0, {**meta, "kind": "intensity"})
    write_grid(base.with_suffix(".psi.txt"), np.where(pmap.mask, pmap.psi, np.nan),
               {**meta, "kind": "orientation_rad"})
    write_grid(base.with_suffix(".chi.txt"), np.where(pmap.mask, pmap.chi, np.nan),
               {**meta, "kind": "ellipticity_rad"})
