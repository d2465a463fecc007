"""One-dimensional symbolic substitutions and their d-fold products.

Tile lengths default to the Perron eigenvector of the transposed
incidence matrix (min-normalized), which makes every catalog rule an
exact self-similarity: iterating the rule and rescaling by the Perron
eigenvalue reproduces the point set on the nose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityExceeded, NotPrimitive, ValidationError
from .pointset import PointSet

LETTER_BUDGET = 50_000_000
LENGTH_RTOL = 1e-9


@dataclass(frozen=True)
class SubstitutionRule1D:
    """Symbolic rule symbol -> word, with geometric tile lengths."""

    name: str
    alphabet: tuple[str, ...]
    images: tuple[tuple[str, ...], ...]   # aligned with alphabet
    tile_lengths: tuple[float, ...]
    expansion_factor: float
    aperiodic: bool = True

    def image(self, symbol: str) -> tuple[str, ...]:
        return self.images[self.alphabet.index(symbol)]

    def length(self, symbol: str) -> float:
        return self.tile_lengths[self.alphabet.index(symbol)]

    @property
    def m(self) -> int:
        return len(self.alphabet)


@dataclass(frozen=True)
class ProductSubstitution:
    """d-fold product of 1D rules; expansion is diagonal in the factors."""

    name: str
    factors: tuple[SubstitutionRule1D, ...]

    @property
    def d(self) -> int:
        return len(self.factors)


@dataclass
class Patch1D:
    """A finite patch: symbol indices with left-endpoint coordinates."""

    word: np.ndarray          # (N,) int32 indices into rule.alphabet
    endpoints: np.ndarray     # (N,) float64 left endpoints, starting at 0
    total_length: float
    rule: SubstitutionRule1D

    def letters(self) -> list[tuple[str, float]]:
        alpha = self.rule.alphabet
        return [(alpha[i], float(t)) for i, t in zip(self.word, self.endpoints)]

    def letter_counts(self) -> np.ndarray:
        return np.bincount(self.word, minlength=self.rule.m).astype(np.int64)

    def validate(self) -> None:
        lens = np.asarray(self.rule.tile_lengths)[self.word]
        expect = np.concatenate(([0.0], np.cumsum(lens)[:-1]))
        tol = 1e-9 * max(self.total_length, 1.0)
        if np.max(np.abs(expect - self.endpoints), initial=0.0) > tol:
            raise ValidationError("endpoints inconsistent with tile lengths")


def make_rule(name: str, alphabet, images, tile_lengths=None,
              expansion_factor: float | None = None,
              aperiodic: bool | None = None) -> SubstitutionRule1D:
    """Validate and build a rule; lengths default to the Perron solution."""
    alphabet = tuple(alphabet)
    if len(alphabet) < 1 or len(set(alphabet)) != len(alphabet):
        raise ValidationError("alphabet must be nonempty and duplicate-free")
    if isinstance(images, dict):
        images = tuple(tuple(images[a]) for a in alphabet)
    else:
        images = tuple(tuple(w) for w in images)
    if len(images) != len(alphabet):
        raise ValidationError("need one image word per symbol")
    for a, w in zip(alphabet, images):
        if not w:
            raise ValidationError(f"image of {a!r} is empty")
        for s in w:
            if s not in alphabet:
                raise ValidationError(f"image of {a!r} uses unknown symbol {s!r}")

    stub = SubstitutionRule1D(name=name, alphabet=alphabet, images=images,
                              tile_lengths=(1.0,) * len(alphabet),
                              expansion_factor=2.0, aperiodic=True)
    M = incidence_matrix(stub)
    if tile_lengths is None:
        lengths, xi = solve_tile_lengths(M)
    else:
        lengths = np.asarray(tile_lengths, dtype=float)
        if expansion_factor is None:
            raise ValidationError("explicit lengths need an expansion factor")
        xi = float(expansion_factor)
    if np.any(lengths <= 0):
        raise ValidationError("tile lengths must be positive")
    if xi <= 1.0:
        raise ValidationError("expansion factor must exceed 1")
    resid = M.entries.T.astype(float) @ lengths - xi * lengths
    if np.max(np.abs(resid)) > LENGTH_RTOL * xi * max(1.0, lengths.max()):
        raise ValidationError("lengths violate the self-similarity equation")

    if aperiodic is None:
        aperiodic = len(alphabet) >= 2
    return SubstitutionRule1D(name=name, alphabet=alphabet, images=images,
                              tile_lengths=tuple(float(v) for v in lengths),
                              expansion_factor=xi, aperiodic=aperiodic)


@dataclass(frozen=True)
class IncidenceMatrix:
    """entries[i, j] = count of symbol i in the image of symbol j."""

    entries: np.ndarray
    m: int
    alphabet: tuple[str, ...]

    def __post_init__(self):
        if self.entries.shape != (self.m, self.m):
            raise ValidationError("incidence matrix must be m x m")
        if np.any(self.entries < 0):
            raise ValidationError("incidence entries must be nonnegative")


def incidence_matrix(rule: SubstitutionRule1D) -> IncidenceMatrix:
    m = rule.m
    idx = {a: i for i, a in enumerate(rule.alphabet)}
    M = np.zeros((m, m), dtype=np.int64)
    for j, word in enumerate(rule.images):
        for s in word:
            M[idx[s], j] += 1
    return IncidenceMatrix(entries=M, m=m, alphabet=rule.alphabet)


def is_primitive(M) -> bool:
    """Some power M^l (l <= (m-1)^2 + 1, Wielandt bound) is positive."""
    A = M.entries if isinstance(M, IncidenceMatrix) else np.asarray(M)
    m = A.shape[0]
    B = (A > 0).astype(np.int8)
    P = B.copy()
    limit = (m - 1) ** 2 + 1
    for _ in range(limit):
        if P.all():
            return True
        P = np.minimum(P @ B, 1).astype(np.int8)
    return bool(P.all())


def solve_tile_lengths(M) -> tuple[np.ndarray, float]:
    """Perron lengths: M^T len = xi len, min length normalized to 1."""
    Mi = M if isinstance(M, IncidenceMatrix) else IncidenceMatrix(
        np.asarray(M, dtype=np.int64), np.asarray(M).shape[0],
        tuple(str(i) for i in range(np.asarray(M).shape[0])))
    if not is_primitive(Mi):
        raise NotPrimitive("tile lengths need a primitive incidence matrix")
    A = Mi.entries.T.astype(float)
    vals, vecs = np.linalg.eig(A)
    k = int(np.argmax(vals.real * (np.abs(vals.imag) < 1e-9)))
    xi = float(vals[k].real)
    v = vecs[:, k].real
    v = np.abs(v)
    v = v / v.min()
    # one Rayleigh refinement pass for a clean residual certificate
    for _ in range(2):
        w = A @ v
        xi = float(v @ w / (v @ v))
        v = w / w.min()
    resid = np.max(np.abs(A @ v - xi * v))
    if resid > 1e-9 * xi * max(1.0, v.max()):
        raise ValidationError(f"Perron residual {resid:.2e} too large")
    return v, xi


# -- iteration ----------------------------------------------------------------

def _image_table(rule: SubstitutionRule1D):
    idx = {a: i for i, a in enumerate(rule.alphabet)}
    imgs = [np.array([idx[s] for s in w], dtype=np.int32) for w in rule.images]
    lens = np.array([len(w) for w in imgs], dtype=np.int64)
    width = int(lens.max())
    table = np.full((rule.m, width), -1, dtype=np.int32)
    for i, w in enumerate(imgs):
        table[i, : len(w)] = w
    return table, lens


def iterate_1d(rule: SubstitutionRule1D, seed_symbol: str, n: int,
               letter_budget: int = LETTER_BUDGET) -> Patch1D:
    """n-th substitution image of the seed, laid out from coordinate 0."""
    if seed_symbol not in rule.alphabet:
        raise ValidationError(f"seed {seed_symbol!r} not in alphabet")
    if n < 0:
        raise ValidationError("iteration count must be >= 0")
    table, lens = _image_table(rule)
    word = np.array([rule.alphabet.index(seed_symbol)], dtype=np.int32)
    for _ in range(n):
        nxt = int(lens[word].sum())
        if nxt > letter_budget:
            raise CapacityExceeded(
                f"substitution word would reach {nxt} letters (budget {letter_budget})")
        rows = table[word]
        word = rows[rows >= 0]
    tile = np.asarray(rule.tile_lengths)[word]
    csum = np.cumsum(tile)
    endpoints = np.concatenate(([0.0], csum[:-1]))
    return Patch1D(word=word, endpoints=endpoints,
                   total_length=float(csum[-1]), rule=rule)


def point_set_1d(rule: SubstitutionRule1D, n: int, seed_symbol: str | None = None,
                 letter_budget: int = LETTER_BUDGET) -> PointSet:
    """Left endpoints of the n-th image, labeled by tile symbol."""
    seed = seed_symbol or rule.alphabet[0]
    patch = iterate_1d(rule, seed, n, letter_budget)
    labels = np.asarray(rule.alphabet, dtype="U8")[patch.word]
    meta = {
        "kind": "substitution-1d",
        "rule": rule.name,
        "seed": seed,
        "n": n,
        "aperiodic": rule.aperiodic,
        "expansion": rule.expansion_factor,
        "letter_counts": [int(c) for c in patch.letter_counts()],
        "extent": {"kind": "box", "lo": [0.0], "hi": [patch.total_length]},
    }
    return PointSet.build(patch.endpoints[:, None], labels=labels, meta=meta,
                          sort=False)


def product_point_set(prod: ProductSubstitution, n: int,
                      seed_symbols: tuple[str, ...] | None = None,
                      point_budget: int = LETTER_BUDGET) -> PointSet:
    """Cartesian product of the factor point sets at a common level n."""
    if prod.d < 1:
        raise ValidationError("product needs at least one factor")
    seeds = seed_symbols or tuple(f.alphabet[0] for f in prod.factors)
    sets = [point_set_1d(f, n, s) for f, s in zip(prod.factors, seeds)]
    total = 1
    for ps in sets:
        total *= len(ps)
        if total > point_budget:
            raise CapacityExceeded(
                f"product set would reach {total} points (budget {point_budget})")
    axes = [ps.points[:, 0] for ps in sets]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    lab_axes = [ps.labels for ps in sets]
    lab_mesh = np.meshgrid(*lab_axes, indexing="ij")
    labels = lab_mesh[0].ravel()
    for extra in lab_mesh[1:]:
        labels = np.char.add(np.char.add(labels, "|"), extra.ravel())
    meta = {
        "kind": "product",
        "rule": prod.name,
        "factors": [f.name for f in prod.factors],
        "n": n,
        "aperiodic": all(f.aperiodic for f in prod.factors),
        "expansion": [f.expansion_factor for f in prod.factors],
        "extent": {
            "kind": "box",
            "lo": [0.0] * prod.d,
            "hi": [ps.meta["extent"]["hi"][0] for ps in sets],
        },
    }
    return PointSet.build(pts, labels=labels, meta=meta, sort=False)
