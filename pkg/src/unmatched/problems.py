"""Self-contained test-problem generators at desk scale.

Random ill-posed matrices with prescribed singular values and oscillating
singular vectors, a smooth two-hump solution, additive Gaussian noise with
an exactly prescribed relative level, a mismatched parallel-beam CT
projector/backprojector pair, and the classic head phantom.  Everything is
deterministic given (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .operators import SparseMatrix, UnmatchedPair


@dataclass
class IllPosedMatrixSpec:
    """Shape, singular spectrum, and seed of a generated matrix."""

    m: int
    n: int
    singular_values: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.singular_values = np.asarray(self.singular_values, dtype=float)
        if self.singular_values.shape != (min(self.m, self.n),):
            raise ValueError(
                f"need {min(self.m, self.n)} singular values, "
                f"got {self.singular_values.shape}")
        if np.any(self.singular_values <= 0):
            raise ValueError("singular values must be positive")
        if np.any(np.diff(self.singular_values) > 0):
            raise ValueError("singular values must be nonincreasing")


def _oscillating_basis(dim, count, rng, jitter=0.08):
    """Orthonormal columns where column i has roughly i sign changes.

    Discrete cosine vectors (column i crosses zero exactly i times) are
    perturbed by seeded Gaussian noise and re-orthonormalized in order;
    the QR sign is fixed so the columns stay aligned with the cosines.
    """
    t = (np.arange(dim) + 0.5) / dim
    basis = np.cos(np.outer(t, np.arange(count)) * np.pi)
    basis /= np.linalg.norm(basis, axis=0)
    basis += jitter * rng.standard_normal((dim, count)) / np.sqrt(dim)
    q, r = np.linalg.qr(basis)
    q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
    return q


def make_ill_posed_matrix(spec: IllPosedMatrixSpec) -> np.ndarray:
    """Random m x n matrix with exactly the prescribed singular values.

    The left and right singular vectors oscillate increasingly with the
    index (column i has about i-1 sign changes), the characteristic
    spectral behavior of discretized inverse problems.
    """
    rng = np.random.default_rng(spec.seed)
    k = min(spec.m, spec.n)
    u = _oscillating_basis(spec.m, k, rng)
    v = _oscillating_basis(spec.n, k, rng)
    return (u * spec.singular_values) @ v.T


def make_unmatched_transpose(a, relative_norm: float, seed: int = 0) -> np.ndarray:
    """Transpose of ``a`` plus Gaussian noise of prescribed spectral norm.

    The perturbation is rescaled so its 2-norm divided by ||a|| equals
    ``relative_norm`` exactly.
    """
    a = np.asarray(a, dtype=float)
    if relative_norm < 0:
        raise ValueError(f"relative_norm must be nonnegative, got {relative_norm}")
    if relative_norm == 0:
        return a.T.copy()
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(a.T.shape)
    e *= relative_norm * np.linalg.norm(a, 2) / np.linalg.norm(e, 2)
    return a.T + e


def make_two_hump_solution(n: int) -> np.ndarray:
    """Smooth positive solution with two humps on n midpoint samples.

    Samples 2 exp(-6 (t - 0.8)^2) + exp(-2 (t + 0.5)^2) at the n midpoints
    of [-1.5, 1.5].  The taller hump sits near t = 0.8.
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    t = -1.5 + 3.0 * (np.arange(n) + 0.5) / n
    return 2.0 * np.exp(-6.0 * (t - 0.8) ** 2) + np.exp(-2.0 * (t + 0.5) ** 2)


@dataclass
class NoiseSpec:
    """Relative Gaussian noise level and seed."""

    relative_level: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.relative_level < 0:
            raise ValueError("relative_level must be nonnegative")


def add_noise(bbar, spec: NoiseSpec) -> np.ndarray:
    """Add Gaussian noise with ||e|| / ||bbar|| equal to the level exactly."""
    bbar = np.asarray(bbar, dtype=float)
    if spec.relative_level == 0:
        return bbar.copy()
    scale = np.linalg.norm(bbar)
    if scale == 0:
        raise ValueError("cannot scale noise relative to zero data")
    rng = np.random.default_rng(spec.seed)
    e = rng.standard_normal(bbar.shape)
    e *= spec.relative_level * scale / np.linalg.norm(e)
    return bbar + e


# ---------------------------------------------------------------------------
# Parallel-beam CT with a deliberately mismatched back projector
# ---------------------------------------------------------------------------

@dataclass
class CtGeometry:
    """2-d parallel-beam geometry.

    The image is image_side x image_side unit pixels centered on the
    origin (n = image_side^2 unknowns, row-major).  num_angles projection
    angles cover [0, 180) degrees uniformly; the detector has
    num_detector_pixels cells and total length detector_length times the
    image side, its pixel centers placed symmetrically about the origin.
    m = num_angles * num_detector_pixels rays; rays that miss the image
    keep their (zero) rows so sinogram indexing stays geometric.
    """

    image_side: int = 32
    num_angles: int = 23
    num_detector_pixels: int = 20
    detector_length: float = 1.0

    def __post_init__(self):
        if self.image_side <= 0 or self.num_angles <= 0 \
                or self.num_detector_pixels <= 0:
            raise ValueError("all geometry counts must be positive")
        if self.detector_length <= 0:
            raise ValueError("detector_length must be positive")

    @property
    def num_pixels(self) -> int:
        return self.image_side ** 2

    @property
    def num_rays(self) -> int:
        return self.num_angles * self.num_detector_pixels

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.num_angles) * np.pi / self.num_angles

    @property
    def detector_offsets(self) -> np.ndarray:
        side = self.image_side
        spacing = self.detector_length * side / self.num_detector_pixels
        k = np.arange(self.num_detector_pixels)
        return (k - (self.num_detector_pixels - 1) / 2.0) * spacing


def _forward_matrix(geom: CtGeometry) -> scipy.sparse.csr_matrix:
    """Interpolation-model forward projector.

    Each ray steps along its dominant axis one pixel row/column at a time
    and splits its weight between the two transverse neighbors by linear
    interpolation, scaled by the step length along the ray.
    """
    side = geom.image_side
    half = (side - 1) / 2.0
    rows, cols, vals = [], [], []
    positions = np.arange(side) - half  # pixel-center coordinates

    for t, phi in enumerate(geom.angles):
        c, s = np.cos(phi), np.sin(phi)
        x_dominant = abs(c) >= abs(s)
        # Ray for offset u: points (x, y) with -x s + y c = u.
        for k, u in enumerate(geom.detector_offsets):
            ray = t * geom.num_detector_pixels + k
            if x_dominant:
                # march over pixel columns x_j, interpolate between rows
                trans = (u + positions * s) / c
                step = 1.0 / abs(c)
                frac_idx = trans + half
            else:
                # march over pixel rows y_i, interpolate between columns
                trans = (positions * c - u) / s
                step = 1.0 / abs(s)
                frac_idx = trans + half
            base = np.floor(frac_idx).astype(int)
            w_hi = frac_idx - base
            for shift, weight in ((0, 1.0 - w_hi), (1, w_hi)):
                idx = base + shift
                ok = (idx >= 0) & (idx < side) & (weight > 0)
                if not np.any(ok):
                    continue
                if x_dominant:
                    pix = idx[ok] * side + np.arange(side)[ok]
                else:
                    pix = np.arange(side)[ok] * side + idx[ok]
                rows.extend([ray] * int(np.count_nonzero(ok)))
                cols.extend(pix.tolist())
                vals.extend((weight[ok] * step).tolist())

    m = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(geom.num_rays, geom.num_pixels))
    return m.tocsr()


def _back_matrix(geom: CtGeometry) -> scipy.sparse.csr_matrix:
    """Pixel-driven back projector with detector interpolation.

    Each pixel center is projected onto the detector axis and its sinogram
    value is read off by linear interpolation between the two neighboring
    detector pixels; the back map is the adjoint of that (different)
    discretization, so it is not the transpose of the forward model.
    """
    side = geom.image_side
    half = (side - 1) / 2.0
    n_det = geom.num_detector_pixels
    spacing = geom.detector_length * side / n_det

    jj, ii = np.meshgrid(np.arange(side), np.arange(side))
    px = (jj - half).ravel()  # pixel x (column direction)
    py = (ii - half).ravel()  # pixel y (row direction)
    pixels = np.arange(geom.num_pixels)

    rows, cols, vals = [], [], []
    for t, phi in enumerate(geom.angles):
        c, s = np.cos(phi), np.sin(phi)
        u = -px * s + py * c  # detector coordinate of each pixel center
        frac_idx = u / spacing + (n_det - 1) / 2.0
        base = np.floor(frac_idx).astype(int)
        w_hi = frac_idx - base
        for shift, weight in ((0, 1.0 - w_hi), (1, w_hi)):
            det = base + shift
            ok = (det >= 0) & (det < n_det) & (weight > 0)
            if not np.any(ok):
                continue
            rows.extend(pixels[ok].tolist())
            cols.extend((t * n_det + det[ok]).tolist())
            vals.extend(weight[ok].tolist())

    m = scipy.sparse.coo_matrix(
        (vals, (rows, cols)), shape=(geom.num_pixels, geom.num_rays))
    return m.tocsr()


def make_ct_pair(geom: CtGeometry) -> UnmatchedPair:
    """Mismatched CT pair: interpolation-model forward, pixel-driven back.

    Both maps are precomputed sparse matrices wrapped as action-only
    LinearMaps; solvers cannot form their transposes.  Use
    ``pair.densify()`` for dense oracle cross-checks.
    """
    fwd = SparseMatrix.from_scipy(_forward_matrix(geom))
    back = SparseMatrix.from_scipy(_back_matrix(geom))
    return UnmatchedPair(fwd, back)


def make_matched_ct_pair(geom: CtGeometry) -> UnmatchedPair:
    """CT pair whose back map is the exact forward transpose (for baselines)."""
    fwd_csr = _forward_matrix(geom)
    return UnmatchedPair(SparseMatrix.from_scipy(fwd_csr),
                         SparseMatrix.from_scipy(fwd_csr.T))


# Standard head-phantom ellipses: additive intensity, semi-axes, center, angle.
_PHANTOM_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6050, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def make_shepp_logan(n: int) -> np.ndarray:
    """Standard-intensity head phantom on an n x n grid, row-major vector.

    Uses the classical ten-ellipse table with the original (low-contrast)
    intensities; values lie in [0, 1].
    """
    if n < 16:
        raise ValueError(f"n must be at least 16, got {n}")
    coords = (np.arange(n) + 0.5) * 2.0 / n - 1.0
    x, y = np.meshgrid(coords, coords)
    img = np.zeros((n, n))
    for amp, ax_a, ax_b, x0, y0, angle_deg in _PHANTOM_ELLIPSES:
        theta = np.deg2rad(angle_deg)
        xr = (x - x0) * np.cos(theta) + (y - y0) * np.sin(theta)
        yr = -(x - x0) * np.sin(theta) + (y - y0) * np.cos(theta)
        img[(xr / ax_a) ** 2 + (yr / ax_b) ** 2 <= 1.0] += amp
    return img.ravel()
