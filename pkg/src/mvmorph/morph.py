"""Alternating minimization and the coarse-to-fine morphing driver.

One sweep alternates (a) K independent registrations between consecutive
frames, warm-started from the previous displacements, with (b) the
closed-form optimal image sequence for the new deformations. The multiscale
driver builds a smoothed pyramid, registers the coarsest pair once, then
inserts intermediate frames while prolonging displacements and images level
by level.

The registration half-step never increases the energy (Armijo per
subproblem); the image half-step is not guaranteed monotone in the discrete
setting and is therefore logged, not asserted.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDeformationError, InvalidArgumentError
from .images import MvImage, bilinear_sample, scattered_values
from .registration import RegisterOptions, data_term, register
from .sequence import (
    DeformationSequence,
    optimal_images_info,
    phi_from_displacement,
)
from .staggered import (
    Displacement,
    RegularizerParams,
    det2,
    forward_jacobian,
    grid_coords,
    p_field,
    regularizer_value,
    zero_boundary,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MorphConfig:
    """Configuration of the full morphing run.

    ``inserts_per_level`` lists, from the first level below the coarsest down
    to the finest, how many new intermediate images are placed between each
    neighboring pair on arrival at that level; the final frame count is
    therefore K+1 with K = prod(inserts+1). With ``levels == 1`` no pyramid
    is built, ``frames`` must be given explicitly, and the sequence starts
    from the pointwise geodesic initialization.
    """

    alpha: float = 0.01
    eta: float = 0.0
    m: int = 3
    levels: int = 1
    scale_factor: float = 0.5
    inserts_per_level: tuple = ()
    sweeps_per_level: int = 3
    frames: int = 0  # K; derived from inserts_per_level when levels > 1
    kernel_sigma: float = 1.0
    opts: RegisterOptions = field(default_factory=RegisterOptions)
    workers: int = 1  # >1 runs the K registrations in a thread pool

    def __post_init__(self):
        if self.alpha <= 0 or self.eta < 0:
            raise InvalidArgumentError("need alpha > 0 and eta >= 0")
        if self.levels < 1:
            raise InvalidArgumentError("levels must be >= 1")
        if self.levels > 1 and not 0.0 < self.scale_factor < 1.0:
            raise InvalidArgumentError("scale_factor must be in (0, 1)")
        if len(self.inserts_per_level) != max(self.levels - 1, 0):
            raise InvalidArgumentError(
                "inserts_per_level must have one entry per level below the coarsest"
            )
        if any(k < 0 for k in self.inserts_per_level):
            raise InvalidArgumentError("insert counts must be nonnegative")
        k_derived = int(np.prod([k + 1 for k in self.inserts_per_level])) if self.levels > 1 else 0
        if self.levels == 1:
            if self.frames < 2:
                raise InvalidArgumentError("levels == 1 requires frames >= 2")
        elif self.frames == 0:
            object.__setattr__(self, "frames", k_derived)
        elif self.frames != k_derived:
            raise InvalidArgumentError(
                f"frames={self.frames} conflicts with the insert schedule (K={k_derived})"
            )

    @property
    def K(self):
        return self.frames

    @property
    def params(self):
        return RegularizerParams(
            mu=self.alpha, lam=self.alpha, eta=self.eta, gamma=self.alpha, m=self.m
        )


@dataclass(frozen=True)
class LedgerRow:
    level: int
    sweep: int
    phase: str
    j_total: float
    j_reg: float
    j_data: float
    min_det: float
    floored: int


@dataclass
class MorphState:
    """Current frames I_0..I_K, deformations, and the energy ledger."""

    images: list
    displacements: list
    ledger: list
    level: int
    aborted: bool = False

    @property
    def K(self):
        return len(self.displacements)


def path_energy(images, displacements, params):
    """(J_total, J_reg, J_data) of the coupled objective."""
    j_reg = sum(regularizer_value(v, params) for v in displacements)
    j_data = sum(
        data_term(images[k], images[k + 1], displacements[k])
        for k in range(len(displacements))
    )
    return j_reg + j_data, j_reg, j_data


def min_det(displacements):
    """Smallest per-pixel det(D phi_k) over the deformation sequence."""
    out = np.inf
    for v in displacements:
        out = min(out, float(det2(forward_jacobian(phi_from_displacement(v))).min()))
    return out


def geodesic_init(T, R, K):
    """Pointwise geodesic frames I_k = gamma(T(x), R(x), k/K), k = 1..K-1."""
    if T.shape != R.shape:
        raise InvalidArgumentError("endpoint shapes differ")
    m = T.manifold
    flatT = T.data.reshape(-1, m.point_dim)
    flatR = R.data.reshape(-1, m.point_dim)
    out = []
    for k in range(1, K):
        g = m._geopoint(flatT, flatR, np.full(flatT.shape[0], k / K))
        out.append(MvImage(m, g.reshape(T.data.shape)))
    return out


def invert_deformation(phi):
    """Inverse of a node-centered map by scattered linear interpolation.

    Solves phi^{-1}(phi(x)) = x on the grid; logs a warning when the forward
    map has nonpositive Jacobian determinants (injectivity not guaranteed).
    """
    phi = np.asarray(phi, dtype=np.float64)
    n1, n2 = phi.shape[:2]
    dets = det2(forward_jacobian(phi))
    if np.any(dets <= 0):
        logger.warning(
            "invert_deformation: %d nodes with nonpositive det", int((dets <= 0).sum())
        )
    X = grid_coords(n1, n2)
    from .manifolds import Euclidean

    inv = scattered_values(
        Euclidean(2),
        phi.reshape(-1, 2),
        X.reshape(-1, 2),
        X.reshape(-1, 2),
    )
    return inv.reshape(n1, n2, 2)


def insert_intermediate(T, R, v, Ktilde):
    """Ktilde-1 warped-geodesic frames between T and R for displacement v.

    Each frame k evaluates the field y -> gamma(T(y), (R o phi^{-1})(y), k/Ktilde)
    at the partially displaced positions x - (k/Ktilde) (Pv)(x).
    """
    if Ktilde < 1:
        raise InvalidArgumentError("Ktilde must be >= 1")
    m = T.manifold
    n1, n2 = T.shape
    if Ktilde == 1:
        return []
    phi = phi_from_displacement(v)
    phi_inv = invert_deformation(phi)
    rw = bilinear_sample(R, phi_inv.reshape(-1, 2))
    flatT = T.data.reshape(-1, m.point_dim)
    X = grid_coords(n1, n2)
    Pv = p_field(v)
    out = []
    for k in range(1, Ktilde):
        s = k / Ktilde
        U = MvImage(m, m._geopoint(flatT, rw, np.full(flatT.shape[0], s)).reshape(T.data.shape))
        out.append(MvImage(m, bilinear_sample(U, X - s * Pv)))
    return out


def _bilin_lattice(arr, fi, fj):
    """Bilinear interpolation of a 2-D array at fractional indices."""
    r, c = arr.shape
    fi = np.clip(fi, 0.0, r - 1.0)
    fj = np.clip(fj, 0.0, c - 1.0)
    i0 = np.clip(np.floor(fi).astype(np.intp), 0, r - 2) if r > 1 else np.zeros_like(fi, dtype=np.intp)
    j0 = np.clip(np.floor(fj).astype(np.intp), 0, c - 2) if c > 1 else np.zeros_like(fj, dtype=np.intp)
    a = fi - i0
    b = fj - j0
    i1 = np.minimum(i0 + 1, r - 1)
    j1 = np.minimum(j0 + 1, c - 1)
    return (
        (1 - a) * (1 - b) * arr[i0, j0]
        + (1 - a) * b * arr[i0, j1]
        + a * (1 - b) * arr[i1, j0]
        + a * b * arr[i1, j1]
    )


def prolong_displacement(v, shape):
    """Bilinear upsampling of a staggered field, rescaled to new pixel units."""
    m1, m2 = v.shape
    n1, n2 = shape
    r1 = n1 / m1
    r2 = n2 / m2

    # v1 lives at (1.5..m1-0.5) x (1..m2) on the coarse grid
    x1 = 0.5 + (np.arange(1, n1) + 0.5 - 0.5) * (m1 / n1)  # fine staggered -> coarse
    x2 = 0.5 + (np.arange(1, n2 + 1) - 0.5) * (m2 / n2)
    fi = x1[:, None] - 1.5
    fj = x2[None, :] - 1.0
    v1 = r1 * _bilin_lattice(v.v1, np.broadcast_to(fi, (n1 - 1, n2)), np.broadcast_to(fj, (n1 - 1, n2)))

    y1 = 0.5 + (np.arange(1, n1 + 1) - 0.5) * (m1 / n1)
    y2 = 0.5 + (np.arange(1, n2) + 0.5 - 0.5) * (m2 / n2)
    fi = y1[:, None] - 1.0
    fj = y2[None, :] - 1.5
    v2 = r2 * _bilin_lattice(v.v2, np.broadcast_to(fi, (n1, n2 - 1)), np.broadcast_to(fj, (n1, n2 - 1)))
    return zero_boundary(v1, v2)


def prolong_image(img, shape):
    """Karcher bilinear upsampling of an image to a finer grid."""
    n1, n2 = shape
    m1, m2 = img.shape
    x1 = 0.5 + (np.arange(1.0, n1 + 1.0) - 0.5) * (m1 / n1)
    x2 = 0.5 + (np.arange(1.0, n2 + 1.0) - 0.5) * (m2 / n2)
    q = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
    return MvImage(img.manifold, bilinear_sample(img, q))


def _register_all(images, displacements, cfg):
    """Step (a): the K independent registration problems, warm-started."""
    K = len(displacements)
    params = cfg.params

    def solve(k):
        return register(images[k], images[k + 1], params, v0=displacements[k], opts=cfg.opts)

    if cfg.workers > 1 and K > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.workers, K)) as pool:
            return list(pool.map(solve, range(K)))
    return [solve(k) for k in range(K)]


def alternate(state, cfg, sweep=0):
    """One sweep of the alternating minimization; appends two ledger rows."""
    imgs = state.images
    K = state.K
    results = _register_all(imgs, state.displacements, cfg)
    new_vs = [r.v for r in results]
    j_reg = sum(r.energy_trace[-1][2] for r in results)
    j_data = sum(r.energy_trace[-1][3] for r in results)
    md = min_det(new_vs)
    ledger = list(state.ledger)
    ledger.append(
        LedgerRow(state.level, sweep, "registration", j_reg + j_data, j_reg, j_data, md, 0)
    )

    try:
        mids, pt = optimal_images_info(
            imgs[0], imgs[K], DeformationSequence.from_displacements(new_vs)
        )
    except DegenerateDeformationError as exc:
        logger.warning("sweep aborted: %s", exc)
        return MorphState(
            images=list(imgs),
            displacements=new_vs,
            ledger=ledger,
            level=state.level,
            aborted=True,
        )

    new_imgs = [imgs[0]] + mids + [imgs[K]]
    j_data2 = sum(
        data_term(new_imgs[k], new_imgs[k + 1], new_vs[k]) for k in range(K)
    )
    ledger.append(
        LedgerRow(
            state.level, sweep, "sequence", j_reg + j_data2, j_reg, j_data2, md, pt.floored
        )
    )
    if j_reg + j_data2 > j_reg + j_data:
        logger.warning(
            "image half-step increased the energy (%.6e -> %.6e)",
            j_reg + j_data,
            j_reg + j_data2,
        )
    return MorphState(
        images=new_imgs,
        displacements=new_vs,
        ledger=ledger,
        level=state.level,
        aborted=False,
    )


def build_pyramid(img, levels, scale_factor, kernel_sigma):
    """Smoothed image stack, finest first."""
    from .images import smooth_downsample

    stack = [img]
    for _ in range(levels - 1):
        stack.append(smooth_downsample(stack[-1], scale_factor, kernel_sigma))
    return stack


def multiscale(T, R, cfg):
    """The full coarse-to-fine morphing run; returns the finest-level state."""
    if T.shape != R.shape:
        raise InvalidArgumentError("template and reference shapes differ")
    params = cfg.params

    if cfg.levels == 1:
        imgs = [T] + geodesic_init(T, R, cfg.K) + [R]
        vs = [Displacement.zeros(*T.shape) for _ in range(cfg.K)]
        state = MorphState(imgs, vs, [], level=0)
        for s in range(cfg.sweeps_per_level):
            state = alternate(state, cfg, sweep=s)
            if state.aborted:
                return state
        return state

    stackT = build_pyramid(T, cfg.levels, cfg.scale_factor, cfg.kernel_sigma)
    stackR = build_pyramid(R, cfg.levels, cfg.scale_factor, cfg.kernel_sigma)

    coarse = cfg.levels - 1
    res = register(stackT[coarse], stackR[coarse], params, opts=cfg.opts)
    ledger = [
        LedgerRow(
            coarse,
            0,
            "registration",
            res.energy_trace[-1][1],
            res.energy_trace[-1][2],
            res.energy_trace[-1][3],
            min_det([res.v]),
            0,
        )
    ]
    state = MorphState([stackT[coarse], stackR[coarse]], [res.v], ledger, level=coarse)

    for level in range(coarse - 1, -1, -1):
        shape = stackT[level].shape
        vs = [prolong_displacement(v, shape) for v in state.displacements]
        mids = [prolong_image(I, shape) for I in state.images[1:-1]]
        imgs = [stackT[level]] + mids + [stackR[level]]

        kins = cfg.inserts_per_level[coarse - 1 - level]
        if kins > 0:
            split_imgs = [imgs[0]]
            split_vs = []
            for k in range(len(vs)):
                split_imgs += insert_intermediate(imgs[k], imgs[k + 1], vs[k], kins + 1)
                split_imgs.append(imgs[k + 1])
                split_vs += [vs[k] * (1.0 / (kins + 1)) for _ in range(kins + 1)]
            imgs, vs = split_imgs, split_vs

        state = MorphState(imgs, vs, state.ledger, level=level)
        for s in range(cfg.sweeps_per_level):
            state = alternate(state, cfg, sweep=s)
            if state.aborted:
                return state
    return state
