"""Cut-and-project Delone sets from hyperbolic integer matrices.

A scheme splits R^n into an expanding invariant subspace E_par (the
physical space, dimension d) and a complementary invariant E_perp
carrying the acceptance window.  Point coordinates are always expressed
in the orthonormal column bases of E_par / E_perp, so the projections
are the block rows of the inverse basis matrix.

Lattice enumeration walks an integer box for d "free" coordinates and
solves a small linear system for the remaining codimension coordinates,
so the work is proportional to the output size, not to R^n.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityExceeded,
    IrrationalityFailed,
    NonDiagonalizableParallel,
    NotHyperbolicSelection,
    SingularShift,
    ValidationError,
)
from .pointset import POINT_BUDGET, PointIndex, PointSet
from .spectral import charpoly_int

BOUNDARY_MARGIN = 1e-12   # window membership margin; closer points are ambiguous
SINGULAR_TOL = 1e-9       # lattice point this close to the window boundary
IRRATIONALITY_RADIUS = 50
_CHUNK = 1 << 20


def default_shift(n: int) -> np.ndarray:
    """Reproducible, almost-surely nonsingular shift: 1e-3 * (e, e^2, ...)."""
    return 1e-3 * np.exp(np.arange(1, n + 1, dtype=float))


# -- windows -------------------------------------------------------------------

class IntervalWindow:
    """Union of disjoint closed intervals in a 1D internal space."""

    kind = "interval-union"

    def __init__(self, intervals):
        iv = np.atleast_2d(np.asarray(intervals, dtype=float))
        if iv.shape[1] != 2 or np.any(iv[:, 0] >= iv[:, 1]):
            raise ValidationError("intervals must be nonempty (lo, hi) pairs")
        iv = iv[np.argsort(iv[:, 0])]
        if np.any(iv[1:, 0] < iv[:-1, 1]):
            raise ValidationError("intervals must be disjoint")
        self.intervals = iv

    @property
    def codim(self) -> int:
        return 1

    def bbox(self):
        return self.intervals[:, 0].min(keepdims=True), \
            self.intervals[:, 1].max(keepdims=True)

    def volume(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        """Positive inside, negative outside; distance to nearest endpoint."""
        x = np.atleast_2d(pts)[:, 0]
        best = np.full(x.shape, -np.inf)
        for lo, hi in self.intervals:
            best = np.maximum(best, np.minimum(x - lo, hi - x))
        return best

    def transform(self, A) -> "IntervalWindow":
        a = float(np.atleast_2d(np.asarray(A, dtype=float))[0, 0])
        iv = self.intervals * a
        if a < 0:
            iv = iv[:, ::-1]
        return IntervalWindow(iv)

    def data(self):
        return [[float(a), float(b)] for a, b in self.intervals]


class PolygonWindow:
    """Convex polygon in a 2D internal space, vertices CCW."""

    kind = "convex-polygon"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValidationError("polygon needs >= 3 planar vertices")
        if _polygon_area(v) < 0:
            v = v[::-1]
        start = np.lexsort(v[:, ::-1].T)[0]
        v = np.roll(v, -start, axis=0)
        self.vertices = v
        e = np.roll(v, -1, axis=0) - v
        norm = np.linalg.norm(e, axis=1)
        if np.any(norm <= 0):
            raise ValidationError("degenerate polygon edge")
        # inward normals for a CCW polygon
        self._normals = np.stack([-e[:, 1], e[:, 0]], axis=1) / norm[:, None]
        self._offsets = np.einsum("ij,ij->i", self._normals, v)
        cr = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - \
            e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cr <= 0):
            raise ValidationError("polygon must be strictly convex and CCW")

    @property
    def codim(self) -> int:
        return 2

    def bbox(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def volume(self) -> float:
        return abs(_polygon_area(self.vertices))

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(pts)
        return np.min(p @ self._normals.T - self._offsets[None, :], axis=1)

    def transform(self, A) -> "PolygonWindow":
        A = np.asarray(A, dtype=float)
        return PolygonWindow(self.vertices @ A.T)

    def data(self):
        return [[float(a), float(b)] for a, b in self.vertices]


def _polygon_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns CCW hull vertices."""
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    pts = pts[np.lexsort(pts[:, ::-1].T)]
    if len(pts) < 3:
        raise ValidationError("hull needs >= 3 distinct points")
    scale = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]), 1e-12)
    eps = 1e-12 * scale * scale

    def half(seq):
        h = []
        for p in seq:
            while len(h) >= 2 and np.cross(h[-1] - h[-2], p - h[-2]) <= eps:
                h.pop()
            h.append(p)
        return h

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


# -- schemes -------------------------------------------------------------------

@dataclass
class ProjectionScheme:
    name: str
    n: int
    d: int
    A_int: np.ndarray          # (n, n) int64, det +1
    E_par: np.ndarray          # (n, d) orthonormal
    E_perp: np.ndarray         # (n, q) orthonormal
    A_par: np.ndarray          # (d, d)
    A_perp: np.ndarray         # (q, q)
    basis: np.ndarray          # [E_par | E_perp]
    basis_inv: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def codim(self) -> int:
        return self.n - self.d

    def par_coords(self, y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(y) @ self.basis_inv[: self.d].T

    def perp_coords(self, y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(y) @ self.basis_inv[self.d:].T


def int_det(M) -> int:
    cp = charpoly_int(M)
    n = len(cp) - 1
    return int(((-1) ** n) * cp[-1])


def build_scheme(A_int, d: int, selector="leading", name: str = "",
                 irrationality_radius: int = IRRATIONALITY_RADIUS) -> ProjectionScheme:
    """Eigen-split a hyperbolic integer matrix into E_par + E_perp.

    selector: 'leading' picks the d largest-modulus eigendirections;
    a sequence of indices (into the modulus-sorted eigenvalue list)
    picks explicitly.  Complex directions must be selected in conjugate
    pairs; they contribute rotation blocks to the real basis.
    """
    A = np.asarray(A_int)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("lattice matrix must be square")
    n = A.shape[0]
    if not (1 <= d < n):
        raise ValidationError("need 1 <= d < n")
    det = int_det(A)
    if det != 1:
        raise ValidationError(
            f"det = {det}; schemes need det +1 (square the matrix if det is -1)")
    Af = A.astype(float)

    vals, vecs = np.linalg.eig(Af)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]

    if selector == "leading":
        chosen = list(range(d))
    else:
        chosen = sorted(int(i) for i in selector)
        if len(chosen) != d or len(set(chosen)) != d or \
                min(chosen) < 0 or max(chosen) >= n:
            raise ValidationError("selector must pick d distinct eigenvalue indices")

    for i in chosen:
        if abs(vals[i]) <= 1.0 + 1e-9:
            raise NotHyperbolicSelection(
                f"selected eigenvalue {vals[i]} has modulus <= 1")

    E_par = _real_basis(vals, vecs, chosen, d)
    rest = [i for i in range(n) if i not in chosen]
    E_perp = _real_basis(vals, vecs, rest, n - d)

    B = np.hstack([E_par, E_perp])
    if np.linalg.cond(B) > 1e8:
        raise NonDiagonalizableParallel("combined eigenbasis is ill-conditioned")
    Binv = np.linalg.inv(B)
    C = Binv @ Af @ B
    A_par = C[:d, :d].copy()
    A_perp = C[d:, d:].copy()
    scale = max(1.0, float(np.abs(Af).max()))
    if np.abs(Af @ E_par - E_par @ A_par).max() > 1e-9 * scale or \
            np.abs(Af @ E_perp - E_perp @ A_perp).max() > 1e-9 * scale:
        raise ValidationError("selected subspaces are not invariant")

    pvals, pvecs = np.linalg.eig(A_par)
    if np.any(np.abs(pvals) <= 1.0 + 1e-9):
        raise NotHyperbolicSelection("A restricted to E_par is not expanding")
    if np.linalg.cond(pvecs) > 1e8:
        raise NonDiagonalizableParallel("A|E_par is not diagonalizable")

    _check_irrationality(E_par, E_perp, irrationality_radius)

    meta = {
        "irrationality_checked_radius": irrationality_radius,
        "det": det,
        "eigenvalues": [complex(v) for v in vals],
        "selected": chosen,
    }
    return ProjectionScheme(
        name=name or "scheme", n=n, d=d,
        A_int=np.array([[int(round(float(v))) for v in row] for row in A],
                       dtype=np.int64),
        E_par=E_par, E_perp=E_perp, A_par=A_par, A_perp=A_perp,
        basis=B, basis_inv=Binv, meta=meta)


def _real_basis(vals, vecs, indices, want: int) -> np.ndarray:
    cols = []
    used = set()
    for i in indices:
        if i in used:
            continue
        lam, v = vals[i], vecs[:, i]
        if abs(lam.imag) < 1e-10 * (1 + abs(lam)):
            w = v.real if np.linalg.norm(v.real) > 1e-8 else v.imag
            cols.append(w)
            used.add(i)
        else:
            partner = None
            for j in indices:
                if j not in used and j != i and \
                        abs(vals[j] - lam.conjugate()) < 1e-8 * (1 + abs(lam)):
                    partner = j
                    break
            if partner is None:
                raise ValidationError(
                    "complex eigendirections must be selected in conjugate pairs")
            cols.append(v.real)
            cols.append(v.imag)
            used.add(i)
            used.add(partner)
    M = np.stack(cols, axis=1)
    if M.shape[1] != want:
        raise ValidationError("selection does not span the requested dimension")
    Q, Rq = np.linalg.qr(M)
    if np.min(np.abs(np.diag(Rq))) < 1e-10:
        raise NonDiagonalizableParallel("eigendirections are linearly dependent")
    return Q


def _check_irrationality(E_par, E_perp, radius: int) -> None:
    """No small integer vector may lie numerically inside either subspace."""
    if radius <= 0:
        return
    n = E_par.shape[0]
    P_par = E_par @ E_par.T
    P_perp = E_perp @ E_perp.T
    tail_axes = [np.arange(-radius, radius + 1)] * (n - 1)
    tail = np.stack([g.ravel() for g in np.meshgrid(*tail_axes, indexing="ij")],
                    axis=-1).astype(float) if n > 1 else np.zeros((1, 0))
    for v0 in range(-radius, radius + 1):
        block = np.hstack([np.full((len(tail), 1), float(v0)), tail])
        nz = np.any(block != 0, axis=1)
        if not nz.any():
            continue
        b = block[nz]
        for P, label in ((P_par, "E_par"), (P_perp, "E_perp")):
            res = b - b @ P
            dist = np.linalg.norm(res, axis=1)
            if dist.min() < 1e-7:
                bad = b[int(np.argmin(dist))]
                raise IrrationalityFailed(
                    f"integer vector {bad.astype(int).tolist()} lies within "
                    f"1e-7 of {label}")


def canonical_window(scheme: ProjectionScheme):
    """Projection of the unit hypercube to internal coordinates."""
    q = scheme.codim
    corners = np.array(list(itertools.product((0.0, 1.0), repeat=scheme.n)))
    proj = scheme.perp_coords(corners)
    if q == 1:
        return IntervalWindow([[proj.min(), proj.max()]])
    if q == 2:
        return PolygonWindow(convex_hull(proj))
    raise ValidationError("canonical windows support codimension 1 and 2 only")


# -- lattice enumeration -------------------------------------------------------

def _best_pivot(W: np.ndarray) -> tuple[tuple, tuple]:
    q, n = W.shape
    best, best_det = None, -1.0
    for J in itertools.combinations(range(n), q):
        dd = abs(np.linalg.det(W[:, list(J)]))
        if dd > best_det:
            best, best_det = J, dd
    if best_det < 1e-12:
        raise ValidationError("projection to internal space is degenerate")
    I = tuple(i for i in range(n) if i not in best)
    return best, I


def _expand_ranges(lo: np.ndarray, hi: np.ndarray):
    """Rows -> all integer tuples in [lo_i, hi_i] per row (CSR expansion)."""
    cnt = np.maximum(hi - lo + 1, 0)
    total = int(cnt.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    rows = np.repeat(np.arange(len(lo)), cnt)
    starts = np.repeat(lo, cnt)
    offs = np.arange(total) - np.repeat(
        np.concatenate(([0], np.cumsum(cnt)[:-1])), cnt)
    return rows, starts + offs


def _enumerate_candidates(scheme: ProjectionScheme, window, R: float,
                          x: np.ndarray, budget: int):
    """Yield (gamma_chunk, c_par, signed_distance) for all slab candidates."""
    n, d, q = scheme.n, scheme.d, scheme.codim
    B, T = scheme.basis, scheme.basis_inv
    V, W = T[:d], T[d:]
    lo_w, hi_w = window.bbox()
    mid_perp = (np.asarray(lo_w) + np.asarray(hi_w)) / 2.0
    half_perp = (np.asarray(hi_w) - np.asarray(lo_w)) / 2.0 + 1e-9

    center_y = B @ np.concatenate([np.zeros(d), mid_perp])
    half = (np.linalg.norm(B[:, :d], axis=1) * R +
            np.abs(B[:, d:]) @ half_perp + 1e-9)
    g_lo = np.ceil(center_y - x - half - 1e-9).astype(np.int64)
    g_hi = np.floor(center_y - x + half + 1e-9).astype(np.int64)

    J, I = _best_pivot(W)
    WJ = W[:, list(J)]
    WI = W[:, list(I)] if I else np.zeros((q, 0))
    WJinv = np.linalg.inv(WJ)
    cJ_half = np.abs(WJinv) @ half_perp + 1e-9
    Wx = W @ x

    axes = [np.arange(g_lo[i], g_hi[i] + 1) for i in I]
    free_total = 1
    for a in axes:
        free_total *= max(len(a), 0)
    if free_total > 50 * max(budget, 1):
        raise CapacityExceeded(
            f"enumeration box has {free_total} cells (budget {budget})")
    if free_total == 0:
        return

    mesh = np.meshgrid(*axes, indexing="ij") if axes else []
    free = np.stack([m.ravel() for m in mesh], axis=-1) if axes else \
        np.zeros((1, 0), dtype=np.int64)

    emitted = 0
    for s in range(0, len(free), _CHUNK):
        blk = free[s: s + _CHUNK]
        rhs = mid_perp[None, :] - Wx[None, :] - blk @ WI.T
        cJ_mid = rhs @ WJinv.T
        lo_J = np.ceil(cJ_mid - cJ_half[None, :]).astype(np.int64)
        hi_J = np.floor(cJ_mid + cJ_half[None, :]).astype(np.int64)
        for k, j in enumerate(J):
            lo_J[:, k] = np.maximum(lo_J[:, k], g_lo[j])
            hi_J[:, k] = np.minimum(hi_J[:, k], g_hi[j])

        rows = np.arange(len(blk))
        gJ = np.zeros((len(blk), 0), dtype=np.int64)
        for k in range(q):
            rr, vals_k = _expand_ranges(lo_J[rows, k], hi_J[rows, k])
            rows = rows[rr]
            gJ = np.hstack([gJ[rr], vals_k[:, None]])
        if len(rows) == 0:
            continue
        gamma = np.zeros((len(rows), n), dtype=np.int64)
        gamma[:, list(I)] = blk[rows]
        gamma[:, list(J)] = gJ

        emitted += len(gamma)
        if emitted > 60 * max(budget, 1):
            raise CapacityExceeded("candidate count exceeds budget")

        y = gamma.astype(float) + x[None, :]
        c_par = y @ V.T
        inside_ball = np.einsum("ij,ij->i", c_par, c_par) <= R * R
        if not inside_ball.any():
            continue
        gamma = gamma[inside_ball]
        c_par = c_par[inside_ball]
        c_perp = (gamma.astype(float) + x[None, :]) @ W.T
        sd = window.signed_distance(c_perp)
        yield gamma, c_par, sd


def generate_caps(scheme: ProjectionScheme, window, R: float, x=None,
                  budget: int = POINT_BUDGET, check_singular: bool = True,
                  name: str | None = None) -> PointSet:
    """All lattice projections with parallel norm <= R and window hit.

    Enumeration is exhaustive: every qualifying lattice point is visited.
    Points whose internal coordinate sits within BOUNDARY_MARGIN of the
    window boundary are excluded and counted as boundary-ambiguous; a
    point within SINGULAR_TOL raises SingularShift when check_singular.
    """
    if R < 0:
        raise ValidationError("radius must be >= 0")
    x = default_shift(scheme.n) if x is None else np.asarray(x, dtype=float)
    if x.shape != (scheme.n,):
        raise ValidationError(f"shift must have {scheme.n} coordinates")

    pts = []
    ambiguous = 0
    min_abs_sd = math.inf
    total = 0
    for _gamma, c_par, sd in _enumerate_candidates(scheme, window, R, x, budget):
        min_abs_sd = min(min_abs_sd, float(np.abs(sd).min()))
        keep = sd >= BOUNDARY_MARGIN
        ambiguous += int(np.count_nonzero(np.abs(sd) < BOUNDARY_MARGIN))
        total += int(keep.sum())
        if total > budget:
            raise CapacityExceeded(f"point budget {budget} exceeded")
        pts.append(c_par[keep])

    if check_singular and min_abs_sd < SINGULAR_TOL:
        raise SingularShift(
            f"lattice point within {min_abs_sd:.2e} of the window boundary")

    points = np.vstack(pts) if pts else np.zeros((0, scheme.d))
    meta = {
        "kind": "caps",
        "scheme": scheme.name,
        "system": name or scheme.name,
        "R": float(R),
        "shift": [float(v) for v in x],
        "window_kind": window.kind,
        "window_data": window.data(),
        "boundary_ambiguous": ambiguous,
        "min_boundary_distance": min_abs_sd if math.isfinite(min_abs_sd) else None,
        "extent": {"kind": "ball", "radius": float(R)},
        "irrationality_checked_radius": scheme.meta.get(
            "irrationality_checked_radius"),
    }
    return PointSet.build(points, meta=meta)


def is_singular(x, scheme: ProjectionScheme, window, search_radius: float) -> bool:
    """Does some lattice point project within SINGULAR_TOL of the boundary?

    The search covers every lattice point whose parallel projection lies
    within search_radius, which must dominate any generation radius the
    verdict will be used for.
    """
    x = np.asarray(x, dtype=float)
    best = math.inf
    for _gamma, _c_par, sd in _enumerate_candidates(
            scheme, window, search_radius, x, POINT_BUDGET):
        best = min(best, float(np.abs(sd).min()))
        if best < SINGULAR_TOL:
            return True
    return best < SINGULAR_TOL


# -- renormalization -----------------------------------------------------------

@dataclass
class RenormReport:
    passed: bool
    mismatch: float
    n_left: int
    n_right: int
    R: float
    tolerance: float
    clip_margin: float

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mismatch": self.mismatch,
            "n_left": self.n_left,
            "n_right": self.n_right,
            "R": self.R,
            "tolerance": self.tolerance,
            "clip_margin": self.clip_margin,
        }


def verify_renormalization(scheme: ProjectionScheme, window, R: float, x=None,
                           tolerance: float = 1e-7,
                           right_window=None,
                           budget: int = POINT_BUDGET) -> RenormReport:
    """Check the exact identity A_par . Lambda_x(K) = Lambda_{Ax}(A_perp K).

    Both sides are produced as finite point sets covering the radius-R
    ball; the report carries the worst point-to-nearest-point distance
    over a slightly shrunk ball (so that points straddling the sphere by
    float roundoff cannot create spurious mismatches).
    """
    x = default_shift(scheme.n) if x is None else np.asarray(x, dtype=float)
    K_right = right_window if right_window is not None \
        else window.transform(scheme.A_perp)
    x_right = scheme.A_int.astype(float) @ x

    right = generate_caps(scheme, K_right, R, x_right, budget=budget,
                          check_singular=True)
    grow = float(np.linalg.norm(np.linalg.inv(scheme.A_par), 2))
    left_raw = generate_caps(scheme, window, R * grow * (1 + 1e-12) + 1e-9, x,
                             budget=budget, check_singular=True)
    left_pts = left_raw.points @ scheme.A_par.T

    clip = 1e-6 * max(1.0, R)
    mismatch = 0.0
    for src, dst in ((left_pts, right.points), (right.points, left_pts)):
        inside = np.linalg.norm(src, axis=1) <= R - clip
        if not inside.any():
            continue
        if len(dst) == 0:
            mismatch = math.inf
            break
        idx = PointIndex(dst)
        mismatch = max(mismatch, float(idx.nearest_distance(src[inside]).max()))

    return RenormReport(
        passed=bool(mismatch <= tolerance), mismatch=mismatch,
        n_left=int(len(left_pts)), n_right=len(right),
        R=float(R), tolerance=tolerance, clip_margin=clip)
