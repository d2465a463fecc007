"""Eigenvalue data of expansion maps and induced cohomology actions.

Integer matrices are handled exactly: the characteristic polynomial is
computed by fraction-free Faddeev-LeVerrier over Python ints, split into
square-free factors (Yun), and the roots of each factor are refined by
Aberth's simultaneous iteration.  This recognizes multiple eigenvalues
(e.g. double eigenvalues of symmetric integer matrices) reliably instead
of trusting floating QR clusters.

Float matrices fall back to numpy eigendecomposition with the same
grouping and residual certificates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    IllConditioned,
    LeadingEigenvalueMismatch,
    NotPrimitive,
    ValidationError,
    WrongCodimension,
)

MAX_DIM = 64
GROUP_TOL = 1e-7          # roots closer than this are one eigenvalue
RES_CLASS_TOL = 1e-9      # tolerance on log|nu|/log nu1 vs the RES threshold

STRICT = "STRICT"
EQUALITY = "EQUALITY"
BELOW = "BELOW"


# -- exact integer polynomial helpers ----------------------------------------
# Polynomials are lists of coefficients, leading coefficient first.

def charpoly_int(M) -> list[int]:
    """Exact characteristic polynomial of an integer matrix.

    Fraction-free Faddeev-LeVerrier; every division is exact over the
    integers.  Returns monic coefficients [1, c1, ..., cn] so that
    p(x) = x^n + c1 x^(n-1) + ... + cn.
    """
    A = _as_int_matrix(M)
    n = A.shape[0]
    N = np.identity(n, dtype=object)
    coeffs = [1]
    for k in range(1, n + 1):
        AN = A @ N
        trace = sum(AN[i, i] for i in range(n))
        q, r = divmod(-trace, k)
        if r != 0:  # pragma: no cover - algebra guarantees exactness
            raise ValidationError("Faddeev-LeVerrier division not exact")
        coeffs.append(q)
        N = AN + q * np.identity(n, dtype=object)
    return coeffs


def int_inverse(M) -> np.ndarray:
    """Exact inverse of an integer matrix with determinant +-1."""
    A = _as_int_matrix(M)
    n = A.shape[0]
    N = np.identity(n, dtype=object)
    coeffs = [1]
    prev = N
    for k in range(1, n + 1):
        AN = A @ N
        trace = sum(AN[i, i] for i in range(n))
        coeffs.append(-trace // k)
        prev = N
        N = AN + coeffs[-1] * np.identity(n, dtype=object)
    cn = coeffs[-1]
    if cn not in (1, -1):
        raise ValidationError(f"matrix determinant is not +-1 (c_n = {cn})")
    inv = (-prev * (1 if cn == 1 else -1))
    return np.array([[int(v) for v in row] for row in inv], dtype=np.int64)


def _as_int_matrix(M) -> np.ndarray:
    A = np.asarray(M)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("matrix must be square")
    if A.shape[0] > MAX_DIM:
        raise ValidationError(f"dimension {A.shape[0]} exceeds {MAX_DIM}")
    if not _is_integral(A):
        raise ValidationError("matrix is not integral")
    return np.array([[int(round(float(v))) for v in row] for row in A],
                    dtype=object)


def _is_integral(A: np.ndarray) -> bool:
    if np.issubdtype(A.dtype, np.integer) or A.dtype == object:
        return all(float(v) == int(v) for v in np.ravel(A))
    return bool(np.all(np.isfinite(A.astype(float))) and
                np.all(A.astype(float) == np.round(A.astype(float))))


def _fr(p: list[int] | list[Fraction]) -> list[Fraction]:
    return [Fraction(c) for c in p]


def _trim(p: list[Fraction]) -> list[Fraction]:
    i = 0
    while i < len(p) - 1 and p[i] == 0:
        i += 1
    return p[i:]


def _deg(p: list[Fraction]) -> int:
    return len(p) - 1


def _deriv(p: list[Fraction]) -> list[Fraction]:
    n = _deg(p)
    if n == 0:
        return [Fraction(0)]
    return [p[i] * (n - i) for i in range(n)]


def _divmod_poly(a: list[Fraction], b: list[Fraction]):
    a = _trim(list(a))
    b = _trim(list(b))
    if b == [Fraction(0)]:
        raise ZeroDivisionError("polynomial division by zero")
    da, db = _deg(a), _deg(b)
    if da < db:
        return [Fraction(0)], a
    q = [Fraction(0)] * (da - db + 1)
    r = list(a)
    for i in range(da - db + 1):
        f = r[i] / b[0]
        q[i] = f
        if f != 0:
            for k in range(len(b)):
                r[i + k] -= f * b[k]
    rem = r[da - db + 1:]
    return _trim(q), _trim(rem if rem else [Fraction(0)])


def _gcd_poly(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    a, b = _trim(list(a)), _trim(list(b))
    while b != [Fraction(0)]:
        _, r = _divmod_poly(a, b)
        a, b = b, r
    return [c / a[0] for c in a]  # monic


def squarefree_factors(p: list[int]) -> list[tuple[list[Fraction], int]]:
    """Yun's algorithm: [(factor, multiplicity)], factors monic, exact."""
    pf = _trim(_fr(p))
    dp = _deriv(pf)
    g = _gcd_poly(pf, dp)
    if _deg(g) == 0:
        return [([c / pf[0] for c in pf], 1)]
    w, _ = _divmod_poly(pf, g)
    y, _ = _divmod_poly(dp, g)
    z = _sub(y, _deriv(w))
    out = []
    i = 1
    while _deg(w) > 0:
        gi = _gcd_poly(w, z) if _trim(z) != [Fraction(0)] else list(w)
        if _trim(z) == [Fraction(0)]:
            gi = [c / w[0] for c in w]
        if _deg(gi) > 0:
            out.append((gi, i))
        w, _ = _divmod_poly(w, gi)
        y, _ = _divmod_poly(z, gi)
        z = _sub(y, _deriv(w))
        i += 1
    return out


def _sub(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    la, lb = len(a), len(b)
    n = max(la, lb)
    out = [Fraction(0)] * n
    for i, c in enumerate(a):
        out[n - la + i] += c
    for i, c in enumerate(b):
        out[n - lb + i] -= c
    return _trim(out)


# -- root finding -------------------------------------------------------------

def aberth_roots(coeffs: list[float], max_iter: int = 100) -> np.ndarray:
    """All complex roots of a square-free polynomial by Aberth iteration."""
    c = np.asarray(coeffs, dtype=float)
    if not np.all(np.isfinite(c)):
        raise IllConditioned("polynomial coefficients overflow float range")
    n = len(c) - 1
    if n == 0:
        return np.empty(0, dtype=complex)
    z = np.roots(c).astype(complex)
    dc = c[:-1] * np.arange(n, 0, -1)
    for _ in range(max_iter):
        p = np.full_like(z, c[0])
        for ck in c[1:]:
            p = p * z + ck
        dp = np.full_like(z, dc[0]) if len(dc) else np.zeros_like(z)
        for ck in dc[1:]:
            dp = dp * z + ck
        dp = np.where(dp == 0, 1e-300, dp)
        w = p / dp
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        recip = 1.0 / diff
        np.fill_diagonal(recip, 0.0)
        denom = 1.0 - w * recip.sum(axis=1)
        denom = np.where(denom == 0, 1e-300, denom)
        corr = w / denom
        z = z - corr
        if np.max(np.abs(corr)) < 5e-15 * (1.0 + np.max(np.abs(z))):
            break
    return z


def _poly_rel_residual(coeffs: list[float], z: complex) -> float:
    acc = 0.0 + 0.0j
    scale = 0.0
    for ck in coeffs:
        acc = acc * z + ck
        scale = scale * abs(z) + abs(ck)
    return abs(acc) / max(scale, 1e-300)


# -- spectrum type ------------------------------------------------------------

@dataclass
class Spectrum:
    """Eigenvalues with algebraic multiplicities, largest modulus first."""

    entries: list[tuple[complex, int]]
    dim: int
    char_poly: list[int] | None = None
    residuals: list[float] = field(default_factory=list)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(
            [(complex(v), int(m)) for v, m in self.entries],
            key=lambda e: (-abs(e[0]), -e[0].real, -e[0].imag),
        )
        if sum(m for _, m in self.entries) != self.dim:
            raise ValidationError("multiplicities do not sum to dimension")

    def values(self) -> list[complex]:
        """Eigenvalues repeated with multiplicity, largest modulus first."""
        out = []
        for v, m in self.entries:
            out.extend([v] * m)
        return out

    def moduli(self) -> list[float]:
        return [abs(v) for v in self.values()]

    def leading(self) -> complex:
        return self.entries[0][0]

    def drop_zero(self) -> "Spectrum":
        kept = [(v, m) for v, m in self.entries if abs(v) > 1e-12]
        return Spectrum(kept, sum(m for _, m in kept),
                        char_poly=None, flags=dict(self.flags))


def spectrum_from_values(values, flags: dict | None = None) -> Spectrum:
    """Build a Spectrum from a plain eigenvalue list (catalog constants)."""
    grouped = _group_roots([complex(v) for v in values])
    return Spectrum(grouped, dim=len(list(values)), flags=flags or {})


def _group_roots(roots, mults=None) -> list[tuple[complex, int]]:
    items = list(zip(roots, mults or [1] * len(roots)))
    items.sort(key=lambda t: (t[0].real, t[0].imag))
    groups: list[list] = []
    for v, m in items:
        placed = False
        for g in groups:
            if abs(v - g[0][0]) <= GROUP_TOL * (1.0 + abs(v)):
                g.append((v, m))
                placed = True
                break
        if not placed:
            groups.append([(v, m)])
    out = []
    for g in groups:
        total = sum(m for _, m in g)
        mean = sum(v * m for v, m in g) / total
        if abs(mean.imag) <= GROUP_TOL * (1.0 + abs(mean)):
            mean = complex(mean.real, 0.0)
        out.append((mean, total))
    return out


# -- eigenvalue extraction ----------------------------------------------------

def eigenvalues(M, residual_check: bool = True) -> Spectrum:
    """Full spectrum of a square matrix with residual certificates.

    Integer input goes through the exact characteristic polynomial;
    float input uses numpy eigendecomposition.  Roots within GROUP_TOL
    are merged into one eigenvalue with summed multiplicity.
    """
    A = np.asarray(M, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("matrix must be square")
    n = A.shape[0]
    if n > MAX_DIM:
        raise ValidationError(f"dimension {n} exceeds {MAX_DIM}")

    if _is_integral(np.asarray(M)):
        cp = charpoly_int(M)
        roots: list[complex] = []
        mults: list[int] = []
        for factor, k in squarefree_factors(cp):
            fc = [float(c) for c in factor]
            for r in aberth_roots(fc):
                if _poly_rel_residual(fc, r) > 1e-9:
                    raise IllConditioned(
                        f"root residual too large for factor of degree {len(fc)-1}")
                roots.append(complex(r))
                mults.append(k)
        entries = _group_roots(roots, mults)
        entries = [(complex(v.real, 0.0) if abs(v.imag) < 1e-12 * (1 + abs(v))
                    else v, m) for v, m in entries]
        spec = Spectrum(entries, dim=n, char_poly=cp)
    else:
        vals = np.linalg.eigvals(A)
        spec = Spectrum(_group_roots(list(vals)), dim=n)

    if residual_check:
        spec.residuals = [_eigen_residual(A, v) for v, _ in spec.entries]
        bound = 1e-8 * max(np.linalg.norm(A, 2), 1.0)
        for (v, _), r in zip(spec.entries, spec.residuals):
            if r > bound * (1.0 + abs(v)):
                raise IllConditioned(
                    f"eigen-residual {r:.3e} exceeds certificate bound for {v}")
    return spec


def _eigen_residual(A: np.ndarray, nu: complex) -> float:
    """||Av - nu v|| for a unit vector v from shifted inverse iteration."""
    n = A.shape[0]
    shift = nu + (1e-10 + 1e-10j) * (1.0 + abs(nu))
    B = A.astype(complex) - shift * np.eye(n)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(3):
        try:
            v = np.linalg.solve(B, v)
        except np.linalg.LinAlgError:
            B = B - (1e-9 * (1.0 + abs(nu))) * np.eye(n)
            v = np.linalg.solve(B, v)
        v /= np.linalg.norm(v)
    return float(np.linalg.norm(A @ v - nu * v))


# -- expansion data and RES classification ------------------------------------

@dataclass(frozen=True)
class ExpansionSpec:
    """Eigenvalue moduli of the expansion A on the physical space."""

    d: int
    lambda_moduli: tuple[float, ...]  # decreasing, all > 1
    det_A: float

    def __post_init__(self):
        if self.d < 1 or len(self.lambda_moduli) != self.d:
            raise ValidationError("need d eigenvalue moduli")
        lams = self.lambda_moduli
        if any(lams[i] < lams[i + 1] - 1e-12 for i in range(self.d - 1)):
            raise ValidationError("moduli must be non-increasing")
        if lams[-1] <= 1.0:
            raise ValidationError("expansion must have all moduli > 1")
        prod = float(np.prod(lams))
        if abs(prod - self.det_A) > 1e-9 * abs(self.det_A):
            raise ValidationError(
                f"product of moduli {prod} != det {self.det_A}")

    @classmethod
    def pure_dilation(cls, d: int, xi: float) -> "ExpansionSpec":
        return cls(d=d, lambda_moduli=(float(xi),) * d, det_A=float(xi) ** d)

    @classmethod
    def from_matrix(cls, A_par) -> "ExpansionSpec":
        A = np.asarray(A_par, dtype=float)
        mods = sorted(np.abs(np.linalg.eigvals(A)), reverse=True)
        return cls(d=A.shape[0], lambda_moduli=tuple(float(m) for m in mods),
                   det_A=float(abs(np.linalg.det(A))))

    def is_pure_dilation(self) -> bool:
        return max(self.lambda_moduli) - min(self.lambda_moduli) <= \
            1e-9 * self.lambda_moduli[0]


@dataclass
class ResEntry:
    modulus: float
    multiplicity: int
    s: float            # d * log|nu| / log nu1 (exponent in T)
    vol_slope: float    # log|nu| / log nu1 (exponent in volume)
    res_class: str
    log_power: int

    def to_json_dict(self) -> dict:
        return {
            "modulus": self.modulus,
            "multiplicity": self.multiplicity,
            "s_i": None if not math.isfinite(self.s) else self.s,
            "vol_slope": None if not math.isfinite(self.vol_slope) else self.vol_slope,
            "class": self.res_class,
            "log_power": self.log_power,
        }


@dataclass
class ResReport:
    nu1: float
    det_A: float
    d: int
    threshold: float          # 1 - log|lambda_d|/log nu1, volume coordinates
    boundary_exponent: float  # d * threshold
    entries: list[ResEntry]
    e_plus_dim: int
    equality_dim: int
    jordan_hint: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "nu1": self.nu1,
            "det_A": self.det_A,
            "d": self.d,
            "threshold": self.threshold,
            "boundary_exponent": self.boundary_exponent,
            "E_plus_dim": self.e_plus_dim,
            "equality_dim": self.equality_dim,
            "entries": [e.to_json_dict() for e in self.entries],
            "jordan_hint": self.jordan_hint,
            "flags": self.flags,
        }


def classify_res(cohomology: Spectrum, expansion: ExpansionSpec,
                 jordan_hint: dict | None = None) -> ResReport:
    """Classify cohomology eigenvalues against the rapid-expansion cutoff.

    An eigenvalue modulus m passes when log m / log nu1 exceeds the
    boundary cutoff 1 - log|lambda_d|/log nu1; ties within RES_CLASS_TOL
    are EQUALITY and pick up an extra logarithmic factor.
    """
    if not cohomology.entries:
        raise ValidationError("empty cohomology spectrum")
    nu1 = max(cohomology.moduli())
    det_A = expansion.det_A
    if abs(nu1 - det_A) > 1e-6 * abs(det_A):
        raise LeadingEigenvalueMismatch(
            f"leading cohomology eigenvalue {nu1} != det A {det_A}; "
            "wrong cohomology matrix supplied?")

    # group by modulus (distinct |nu_i| classes)
    classes: list[list[tuple[complex, int]]] = []
    for v, m in cohomology.entries:
        for cl in classes:
            if abs(abs(v) - abs(cl[0][0])) <= GROUP_TOL * (1.0 + abs(v)):
                cl.append((v, m))
                break
        else:
            classes.append([(v, m)])
    classes.sort(key=lambda cl: -abs(cl[0][0]))

    log_nu1 = math.log(nu1)
    lam_d = expansion.lambda_moduli[-1]
    threshold = 1.0 - math.log(lam_d) / log_nu1
    hint = jordan_hint or {}

    entries = []
    e_plus = 0
    eq_dim = 0
    for cl in classes:
        modulus = abs(cl[0][0])
        mult = sum(m for _, m in cl)
        if modulus <= 1e-300:
            entries.append(ResEntry(modulus=0.0, multiplicity=mult,
                                    s=-math.inf, vol_slope=-math.inf,
                                    res_class=BELOW, log_power=0))
            continue
        ratio = math.log(modulus) / log_nu1
        j = int(hint.get(round(modulus, 9), 1))
        if ratio > threshold + RES_CLASS_TOL:
            cls_name, log_power = STRICT, j - 1
            e_plus += mult
        elif ratio >= threshold - RES_CLASS_TOL:
            cls_name, log_power = EQUALITY, j
            e_plus += mult
            eq_dim += mult
        else:
            cls_name, log_power = BELOW, 0
        entries.append(ResEntry(modulus=modulus, multiplicity=mult,
                                s=expansion.d * ratio, vol_slope=ratio,
                                res_class=cls_name, log_power=log_power))

    return ResReport(
        nu1=nu1, det_A=det_A, d=expansion.d, threshold=threshold,
        boundary_exponent=expansion.d * threshold,
        entries=entries, e_plus_dim=e_plus, equality_dim=eq_dim,
        jordan_hint=hint,
        flags=dict(cohomology.flags),
    )


# -- induced actions and spectra ----------------------------------------------

def induced_action_1d(rule) -> Spectrum:
    """Action on degree-one cohomology of a 1D substitution.

    The direct limit of transposed incidence matrices kills the nilpotent
    part, so the spectrum is the incidence spectrum with zero eigenvalues
    dropped.  Requires a primitive, aperiodic rule.
    """
    from .substitution import incidence_matrix, is_primitive

    M = incidence_matrix(rule)
    if not is_primitive(M):
        raise NotPrimitive(f"rule {getattr(rule, 'name', '?')} is not primitive")
    if not rule.aperiodic:
        raise ValidationError("induced action needs an aperiodic rule")
    spec = eigenvalues(M.entries)
    out = spec.drop_zero()
    out.char_poly = spec.char_poly
    out.flags["proper_assumed"] = True
    return out


def kunneth_spectrum(factors: list[Spectrum]) -> Spectrum:
    """All products taking one eigenvalue from each factor spectrum."""
    if not factors:
        raise ValidationError("need at least one factor")
    acc = [(complex(1.0), 1)]
    dim = 1
    for f in factors:
        nxt = []
        for v, m in acc:
            for w, k in f.entries:
                nxt.append((v * w, m * k))
        acc = nxt
        dim *= f.dim
    roots = [v for v, _ in acc]
    mults = [m for _, m in acc]
    return Spectrum(_group_roots(roots, mults), dim=dim,
                    flags={"kunneth": True})


def codim1_spectrum(scheme) -> Spectrum:
    """Spectrum of the inverse lattice matrix for a codimension-1 scheme.

    The roots-of-unity summand coming from window-orbit data is omitted
    and flagged; it never enters the rapidly expanding subspace.
    """
    if scheme.n != scheme.d + 1:
        raise WrongCodimension(
            f"scheme has codimension {scheme.n - scheme.d}, need 1")
    inv = int_inverse(scheme.A_int)
    spec = eigenvalues(inv)
    spec.flags["roots_of_unity_omitted"] = True
    return spec


def spectrum_containment(sub: Spectrum, sup: Spectrum, tol: float) -> bool:
    """True when sub embeds into sup within tol, respecting multiplicity."""
    a = sub.values()
    b = sup.values()
    if len(a) > len(b):
        return False
    # maximum bipartite matching by augmenting paths
    match_b = [-1] * len(b)

    def try_assign(i: int, seen: list[bool]) -> bool:
        for j in range(len(b)):
            if not seen[j] and abs(a[i] - b[j]) <= tol:
                seen[j] = True
                if match_b[j] == -1 or try_assign(match_b[j], seen):
                    match_b[j] = i
                    return True
        return False

    for i in range(len(a)):
        if not try_assign(i, [False] * len(b)):
            return False
    return True
