"""Origin-symmetric convex bodies and their geometric functionals.

Bodies are frozen dataclasses with tuple fields, so they are hashable and compare
structurally; per-body derived data (polytope vertices) is cached on that hash.
Every function here is pure.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import null_space
from scipy.optimize import linprog, minimize
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError
from scipy.special import gammaln, ndtri
from scipy.stats import qmc

from app.errors import GeometryError, SamplingError
from app.integrate import UniformBoxProposal, exact, mc_region_measure
from app.models import Estimate

logger = logging.getLogger(__name__)

NET_POINTS_PER_DIM = 2**12
MIN_ACCEPTANCE = 1e-4
DEFAULT_BUDGET = 200_000
BRACKET_RTOL = 1e-9


def _positive_tuple(values: Sequence[float], name: str) -> Tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not out:
        raise GeometryError(f"{name} must be nonempty")
    if not all(v > 0.0 and math.isfinite(v) for v in out):
        raise GeometryError(f"{name} must be positive and finite, got {out}")
    return out


@dataclass(frozen=True)
class EuclideanBall:
    dim: int
    radius: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise GeometryError(f"dimension must be >= 1, got {self.dim}")
        if not (self.radius > 0.0 and math.isfinite(self.radius)):
            raise GeometryError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class LpBall:
    """{x : sum |x_i/a_i|^p <= 1}; p = inf gives the box with half-widths a."""

    p: float
    semi_axes: Tuple[float, ...]

    def __post_init__(self):
        if not self.p >= 1.0:
            raise GeometryError(f"lp-ball needs p >= 1, got {self.p}")
        object.__setattr__(self, "semi_axes", _positive_tuple(self.semi_axes, "semi_axes"))


@dataclass(frozen=True)
class Box:
    half_widths: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "half_widths", _positive_tuple(self.half_widths, "half_widths"))


@dataclass(frozen=True)
class SymmetricPolytope:
    """{x : |<a_i, x>| <= b_i for all i}, stored with unit a_i."""

    normals: Tuple[Tuple[float, ...], ...]
    offsets: Tuple[float, ...]

    def __post_init__(self):
        a = np.asarray(self.normals, dtype=float)
        b = np.asarray(self.offsets, dtype=float)
        if a.ndim != 2 or a.shape[0] != b.shape[0] or a.shape[0] == 0:
            raise GeometryError("polytope needs matching nonempty direction and offset lists")
        lengths = np.linalg.norm(a, axis=1)
        if np.any(lengths == 0.0) or not np.all(np.isfinite(lengths)):
            raise GeometryError("polytope facet directions must be nonzero")
        if not np.all(b > 0.0):
            raise GeometryError("polytope offsets must be positive (origin interior)")
        if np.linalg.matrix_rank(a) < a.shape[1]:
            raise GeometryError("facet directions do not span the space: polytope is unbounded")
        unit = a / lengths[:, None]
        scaled = b / lengths
        object.__setattr__(self, "normals", tuple(tuple(float(x) for x in row) for row in unit))
        object.__setattr__(self, "offsets", tuple(float(x) for x in scaled))

    @classmethod
    def from_vertices(cls, vertices: ArrayLike) -> "SymmetricPolytope":
        """Convex hull of a vertex set closed under x -> -x."""
        points = np.asarray(vertices, dtype=float)
        if points.ndim != 2 or points.shape[1] < 2:
            raise GeometryError("vertex list must be a 2-D array with dimension >= 2")
        for v in points:
            if not np.any(np.all(np.isclose(points, -v, atol=1e-12), axis=1)):
                raise GeometryError(f"vertex set is not symmetric: -{v.tolist()} missing")
        try:
            hull = ConvexHull(points)
        except QhullError as error:
            logger.error("Degenerate vertex set: %s", error)
            raise GeometryError(f"degenerate vertex set: {error}") from error
        # facets come in antipodal pairs; keep the one whose leading normal coordinate is positive
        equations = np.unique(np.round(hull.equations, 12), axis=0)
        rows = np.asarray([row for row in equations if _leading_positive(row[:-1])])
        return cls(tuple(map(tuple, rows[:, :-1])), tuple(-rows[:, -1]))


def _leading_positive(normal: NDArray[np.float64]) -> bool:
    nonzero = normal[np.abs(normal) > 1e-12]
    return bool(nonzero.size) and bool(nonzero[0] > 0.0)


@dataclass(frozen=True)
class Dilate:
    inner: "ConvexBody"
    factor: float

    def __post_init__(self):
        if not (self.factor > 0.0 and math.isfinite(self.factor)):
            raise GeometryError(f"dilation factor must be positive, got {self.factor}")


ConvexBody = Union[EuclideanBall, LpBall, Box, SymmetricPolytope, Dilate]


@dataclass(frozen=True)
class InradiusCertificate:
    """R = max{R : R L inside K} and the unit normal n_v at the tangency."""

    R: float
    normal: Tuple[float, ...]


def dim(body: ConvexBody) -> int:
    match body:
        case EuclideanBall(n, _):
            return n
        case LpBall(_, axes):
            return len(axes)
        case Box(h):
            return len(h)
        case SymmetricPolytope(normals, _):
            return len(normals[0])
        case Dilate(inner, _):
            return dim(inner)
    raise GeometryError(f"unknown body {body!r}")


def unwrap(body: ConvexBody) -> Tuple[ConvexBody, float]:
    """Strip Dilate layers and normalize ball radii: body = factor * base."""
    factor = 1.0
    while isinstance(body, Dilate):
        factor *= body.factor
        body = body.inner
    if isinstance(body, EuclideanBall):
        return EuclideanBall(body.dim), factor * body.radius
    return body, factor


def multiple_of(K: ConvexBody, L: ConvexBody) -> Optional[float]:
    """a with K = a L when that holds structurally, else None."""
    k_base, k_factor = unwrap(K)
    l_base, l_factor = unwrap(L)
    if k_base == l_base:
        return k_factor / l_factor
    match k_base, l_base:
        case Box(hk), Box(hl) if len(hk) == len(hl):
            ratios = np.asarray(hk) / np.asarray(hl)
            if np.allclose(ratios, ratios[0], rtol=1e-14, atol=0.0):
                return float(ratios[0]) * k_factor / l_factor
        case LpBall(pk, ak), LpBall(pl, al) if pk == pl and len(ak) == len(al):
            ratios = np.asarray(ak) / np.asarray(al)
            if np.allclose(ratios, ratios[0], rtol=1e-14, atol=0.0):
                return float(ratios[0]) * k_factor / l_factor
    return None


def _check_points(body: ConvexBody, x: ArrayLike) -> Tuple[NDArray[np.float64], bool]:
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] != dim(body):
        raise GeometryError(f"dimension mismatch: body has n={dim(body)}, got vectors of length {points.shape[1]}")
    return points, single


def _norms(body: ConvexBody, x: NDArray[np.float64]) -> NDArray[np.float64]:
    match body:
        case EuclideanBall(_, r):
            return np.linalg.norm(x, axis=1) / r
        case LpBall(p, axes):
            scaled = np.abs(x) / np.asarray(axes)
            if math.isinf(p):
                return scaled.max(axis=1)
            top = scaled.max(axis=1)
            safe = np.where(top > 0.0, top, 1.0)
            return top * np.sum((scaled / safe[:, None]) ** p, axis=1) ** (1.0 / p)
        case Box(h):
            return (np.abs(x) / np.asarray(h)).max(axis=1)
        case SymmetricPolytope(normals, offsets):
            return (np.abs(x @ np.asarray(normals).T) / np.asarray(offsets)).max(axis=1)
        case Dilate(inner, f):
            return _norms(inner, x) / f
    raise GeometryError(f"unknown body {body!r}")


def norm(body: ConvexBody, x: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """Minkowski functional ||x||_body; accepts one vector or a stack of row vectors."""
    points, single = _check_points(body, x)
    values = _norms(body, points)
    return float(values[0]) if single else values


@lru_cache(maxsize=4096)
def polytope_vertices(body: SymmetricPolytope) -> NDArray[np.float64]:
    """Vertices of the H-polytope via half-space intersection around the origin."""
    a = np.asarray(body.normals)
    b = np.asarray(body.offsets)
    n = a.shape[1]
    if n == 1:
        reach = float(np.min(b / np.abs(a[:, 0])))
        return np.array([[reach], [-reach]])
    halfspaces = np.vstack([np.hstack([a, -b[:, None]]), np.hstack([-a, -b[:, None]])])
    intersection = HalfspaceIntersection(halfspaces, np.zeros(n))
    corners = np.unique(np.round(intersection.intersections, 12), axis=0)
    return corners[ConvexHull(corners).vertices]


def _supports(body: ConvexBody, u: NDArray[np.float64]) -> NDArray[np.float64]:
    match body:
        case EuclideanBall(_, r):
            return r * np.linalg.norm(u, axis=1)
        case LpBall(p, axes):
            scaled = np.abs(u) * np.asarray(axes)
            if p == 1.0:
                return scaled.max(axis=1)
            if math.isinf(p):
                return scaled.sum(axis=1)
            q = p / (p - 1.0)
            top = scaled.max(axis=1)
            safe = np.where(top > 0.0, top, 1.0)
            return top * np.sum((scaled / safe[:, None]) ** q, axis=1) ** (1.0 / q)
        case Box(h):
            return np.abs(u) @ np.asarray(h)
        case SymmetricPolytope():
            if dim(body) <= 3:
                return np.abs(u @ polytope_vertices(body).T).max(axis=1)
            return np.array([_lp_support(body, row) for row in u])
        case Dilate(inner, f):
            return f * _supports(inner, u)
    raise GeometryError(f"unknown body {body!r}")


def _lp_support(body: SymmetricPolytope, u: NDArray[np.float64]) -> float:
    a = np.asarray(body.normals)
    b = np.asarray(body.offsets)
    result = linprog(-u, A_ub=np.vstack([a, -a]), b_ub=np.concatenate([b, b]), bounds=(None, None), method="highs")
    if not result.success:
        raise GeometryError(f"support LP failed: {result.message}")
    return float(-result.fun)


def support(body: ConvexBody, u: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """Support function h_body(u) = sup{<u, y> : y in body}."""
    directions, single = _check_points(body, u)
    if np.any(np.linalg.norm(directions, axis=1) == 0.0):
        raise GeometryError("support needs a nonzero direction")
    values = _supports(body, directions)
    return float(values[0]) if single else values


def normal_at(body: ConvexBody, x: ArrayLike) -> NDArray[np.float64]:
    """A unit outer normal at the boundary point x / ||x||_body (an element of the normal cone)."""
    point = np.asarray(x, dtype=float)
    if not np.any(point):
        raise GeometryError("normal_at needs a nonzero point")
    match body:
        case EuclideanBall():
            g = point
        case LpBall(p, axes):
            scaled = point / np.asarray(axes)
            if math.isinf(p):
                i = int(np.argmax(np.abs(scaled)))
                g = np.zeros_like(point)
                g[i] = np.sign(point[i])
            elif p == 1.0:
                g = np.sign(point) / np.asarray(axes)
            else:
                top = np.max(np.abs(scaled))
                g = np.sign(point) * (np.abs(scaled) / top) ** (p - 1.0) / np.asarray(axes)
        case Box(h):
            i = int(np.argmax(np.abs(point) / np.asarray(h)))
            g = np.zeros_like(point)
            g[i] = np.sign(point[i])
        case SymmetricPolytope(normals, offsets):
            values = np.asarray(normals) @ point
            i = int(np.argmax(np.abs(values) / np.asarray(offsets)))
            g = np.sign(values[i]) * np.asarray(normals[i])
        case Dilate(inner, _):
            return normal_at(inner, point)
        case _:
            raise GeometryError(f"unknown body {body!r}")
    return g / np.linalg.norm(g)


def facets(body: ConvexBody) -> Optional[Tuple[NDArray[np.float64], NDArray[np.float64]]]:
    """(unit normals, offsets) for faceted bodies, else None."""
    match body:
        case Box(h):
            return np.eye(len(h)), np.asarray(h)
        case LpBall(p, axes) if math.isinf(p):
            return np.eye(len(axes)), np.asarray(axes)
        case SymmetricPolytope(normals, offsets):
            return np.asarray(normals), np.asarray(offsets)
        case Dilate(inner, f):
            inner_facets = facets(inner)
            return None if inner_facets is None else (inner_facets[0], f * inner_facets[1])
    return None


def vertices(body: ConvexBody) -> Optional[NDArray[np.float64]]:
    """Vertex list of polyhedral bodies, else None."""
    match body:
        case Box(h):
            return _corners(h)
        case LpBall(p, axes) if math.isinf(p):
            return _corners(axes)
        case LpBall(p, axes) if p == 1.0:
            return np.vstack([np.diag(axes), -np.diag(axes)])
        case SymmetricPolytope():
            return polytope_vertices(body)
        case Dilate(inner, f):
            inner_vertices = vertices(inner)
            return None if inner_vertices is None else f * inner_vertices
    return None


def _corners(half_widths: Sequence[float]) -> NDArray[np.float64]:
    signs = np.array(list(itertools.product([-1.0, 1.0], repeat=len(half_widths))))
    return signs * np.asarray(half_widths)


def sphere_net(n: int, size: int) -> NDArray[np.float64]:
    """Deterministic unit-direction net: equally spaced angles in R^2, Halton-mapped Gaussians otherwise."""
    if n < 1 or size < 1:
        raise GeometryError("sphere_net needs n >= 1 and size >= 1")
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        angles = np.pi * np.arange(size) / size
        return np.column_stack([np.cos(angles), np.sin(angles)])
    points = qmc.Halton(d=n, scramble=False).random(size + 1)[1:]
    gaussian = ndtri(points)
    return gaussian / np.linalg.norm(gaussian, axis=1, keepdims=True)


def _refine_ratio(K: ConvexBody, L: ConvexBody, start: NDArray[np.float64]) -> Tuple[float, NDArray[np.float64]]:
    def ratio(u):
        u = u / np.linalg.norm(u)
        return float(_supports(K, u[None, :])[0] / _supports(L, u[None, :])[0])

    result = minimize(ratio, start, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    best = result.x / np.linalg.norm(result.x)
    return ratio(best), best


def inradius(K: ConvexBody, L: ConvexBody) -> InradiusCertificate:
    """Largest R with R L inside K, with the tangency normal."""
    n = dim(K)
    if dim(L) != n:
        raise GeometryError(f"dimension mismatch: {n} vs {dim(L)}")
    k_base, k_factor = unwrap(K)
    l_base, l_factor = unwrap(L)
    scale = k_factor / l_factor

    k_facets = facets(k_base)
    if k_facets is not None:
        a, b = k_facets
        ratios = b / _supports(l_base, a)
        i = int(np.argmin(ratios))
        return InradiusCertificate(R=scale * float(ratios[i]), normal=tuple(float(x) for x in a[i]))

    l_vertices = vertices(l_base)
    if l_vertices is not None:
        reach = _norms(k_base, l_vertices)
        i = int(np.argmax(reach))
        normal = normal_at(k_base, l_vertices[i])
        return InradiusCertificate(R=scale / float(reach[i]), normal=tuple(float(x) for x in normal))

    if isinstance(k_base, EuclideanBall) and isinstance(l_base, EuclideanBall):
        return InradiusCertificate(R=scale, normal=tuple(float(x) for x in np.eye(n)[0]))

    net = sphere_net(n, NET_POINTS_PER_DIM * n)
    l_facets = facets(l_base)
    if l_facets is not None:
        net = np.vstack([l_facets[0], -l_facets[0], net])
    ratios = _supports(k_base, net) / _supports(l_base, net)
    i = int(np.argmin(ratios))
    best, direction = float(ratios[i]), net[i]
    refined, refined_direction = _refine_ratio(k_base, l_base, direction)
    if refined < best:
        best, direction = refined, refined_direction
    logger.debug("Net inradius over %d directions: %g", len(net), best)
    return InradiusCertificate(R=scale * best, normal=tuple(float(x) for x in direction))


def bracket(K: ConvexBody, L: ConvexBody) -> Tuple[float, float]:
    """(r_in, R_out) with r_in L inside K inside R_out L."""
    r_in = inradius(K, L).R
    r_out = 1.0 / inradius(L, K).R
    return ordered_bracket(r_in, r_out)


def ordered_bracket(r_in: float, r_out: float) -> Tuple[float, float]:
    """Snap roundoff-level inversions of (r_in, R_out); a real inversion is a GeometryError."""
    if r_out >= r_in:
        return r_in, r_out
    if math.isclose(r_out, r_in, rel_tol=BRACKET_RTOL):
        return r_in, r_in
    logger.error("Inverted bracket: r_in=%.17g > R_out=%.17g", r_in, r_out)
    raise GeometryError(f"inradius bracket is inverted: r_in={r_in} > R_out={r_out}")


def ball_volume(n: int, radius: float = 1.0) -> float:
    """kappa_n r^n."""
    return math.exp(0.5 * n * math.log(math.pi) - float(gammaln(0.5 * n + 1.0))) * radius**n


def _bounding_half_widths(body: ConvexBody) -> Tuple[float, ...]:
    return tuple(float(x) for x in _supports(body, np.eye(dim(body))))


def volume_estimate(body: ConvexBody, budget: int = DEFAULT_BUDGET, seed: int = 0) -> Estimate:
    """|body| as an Estimate: closed form or exact decomposition where possible, Monte Carlo otherwise."""
    n = dim(body)
    match body:
        case EuclideanBall(_, r):
            return exact(math.log(ball_volume(n, r)))
        case LpBall(p, axes):
            if math.isinf(p):
                return exact(float(np.sum(np.log(2.0 * np.asarray(axes)))))
            log_unit = n * math.log(2.0) + n * float(gammaln(1.0 + 1.0 / p)) - float(gammaln(1.0 + n / p))
            return exact(log_unit + float(np.sum(np.log(axes))))
        case Box(h):
            return exact(math.log(math.prod(2.0 * x for x in h)))
        case SymmetricPolytope():
            if n <= 3:
                return exact(math.log(_fan_volume(body)))
            return _mc_volume(body, UniformBoxProposal(_bounding_half_widths(body)), budget, seed)
        case Dilate(inner, f):
            inner_estimate = volume_estimate(inner, budget, seed)
            return inner_estimate.model_copy(update={"log_value": inner_estimate.log_value + n * math.log(f)})
    raise GeometryError(f"unknown body {body!r}")


def _mc_volume(body: ConvexBody, box: UniformBoxProposal, budget: int, seed: int) -> Estimate:
    fraction = mc_region_measure(None, lambda x: _norms(body, x) <= 1.0, box, budget, seed)
    log_box = float(np.sum(np.log(2.0 * np.asarray(box.half_widths))))
    return fraction.model_copy(update={"log_value": fraction.log_value + log_box})


def _fan_volume(body: SymmetricPolytope) -> float:
    """Exact volume by fanning simplices from the origin over the hull's facet triangulation."""
    points = polytope_vertices(body)
    n = points.shape[1]
    if n == 1:
        return float(points[:, 0].max() - points[:, 0].min())
    hull = ConvexHull(points)
    dets = np.abs(np.linalg.det(points[hull.simplices]))
    return float(dets.sum()) / math.factorial(n)


def volume(body: ConvexBody) -> float:
    return volume_estimate(body).value


def hyperplane_basis(xi: ArrayLike) -> NDArray[np.float64]:
    """Orthonormal basis (columns) of the hyperplane orthogonal to xi."""
    direction = np.asarray(xi, dtype=float)
    if not np.any(direction):
        raise GeometryError("section direction must be nonzero")
    return null_space(direction[None, :])


def section_polytope(body: ConvexBody, xi: ArrayLike) -> Optional[SymmetricPolytope]:
    """body ∩ xi^perp in hyperplane coordinates, for faceted bodies."""
    found = facets(body)
    if found is None:
        return None
    a, b = found
    basis = hyperplane_basis(xi)
    projected = a @ basis
    lengths = np.linalg.norm(projected, axis=1)
    keep = lengths > 1e-13
    return SymmetricPolytope(tuple(map(tuple, projected[keep])), tuple(b[keep]))


def central_section_estimate(body: ConvexBody, xi: ArrayLike, budget: int = DEFAULT_BUDGET, seed: int = 0) -> Estimate:
    """(n-1)-volume of body ∩ xi^perp."""
    n = dim(body)
    if n < 2:
        raise GeometryError("central sections need dimension >= 2")
    direction = np.asarray(xi, dtype=float)
    if direction.shape != (n,):
        raise GeometryError(f"dimension mismatch: body has n={n}, direction has shape {direction.shape}")
    if not np.any(direction):
        raise GeometryError("section direction must be nonzero")
    direction = direction / np.linalg.norm(direction)

    base, factor = unwrap(body)
    shift = (n - 1) * math.log(factor)
    if isinstance(base, EuclideanBall):
        return exact(math.log(ball_volume(n - 1)) + shift)
    if n == 2:
        w = np.array([-direction[1], direction[0]])
        return exact(math.log(2.0 / float(_norms(base, w[None, :])[0])) + shift)
    if isinstance(base, Box):
        hits = np.flatnonzero(np.isclose(np.abs(direction), 1.0, rtol=0.0, atol=1e-15))
        if hits.size:
            others = [2.0 * h for j, h in enumerate(base.half_widths) if j != int(hits[0])]
            return exact(math.log(math.prod(others)) + shift)
    if n == 3:
        slice_body = section_polytope(base, direction)
        if slice_body is not None:
            return exact(math.log(_fan_volume(slice_body)) + shift)
    basis = hyperplane_basis(direction)
    reach = math.sqrt(sum(x * x for x in _bounding_half_widths(base)))
    box = UniformBoxProposal((reach,) * (n - 1))
    fraction = mc_region_measure(None, lambda y: _norms(base, y @ basis.T) <= 1.0, box, budget, seed)
    log_box = (n - 1) * math.log(2.0 * reach)
    return fraction.model_copy(update={"log_value": fraction.log_value + log_box + shift})


def central_section_volume(body: ConvexBody, xi: ArrayLike) -> float:
    return central_section_estimate(body, xi).value


def uniform_points(body: ConvexBody, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """size points uniformly distributed in body."""
    n = dim(body)
    match body:
        case EuclideanBall(_, r):
            g = rng.standard_normal((size, n))
            radii = rng.random(size) ** (1.0 / n)
            return r * g / np.linalg.norm(g, axis=1, keepdims=True) * radii[:, None]
        case Box(h):
            return rng.uniform(-np.asarray(h), np.asarray(h), size=(size, n))
        case LpBall(p, axes) if math.isinf(p):
            return rng.uniform(-np.asarray(axes), np.asarray(axes), size=(size, n))
        case LpBall(p, axes):
            # generalized Gaussian coordinates plus an exponential slack give the uniform law on B_p^n
            magnitude = rng.gamma(1.0 / p, 1.0, size=(size, n)) ** (1.0 / p)
            signs = rng.choice([-1.0, 1.0], size=(size, n))
            g = signs * magnitude
            slack = rng.exponential(1.0, size)
            scale = (np.sum(np.abs(g) ** p, axis=1) + slack) ** (1.0 / p)
            return g / scale[:, None] * np.asarray(axes)
        case SymmetricPolytope():
            return _rejection_points(body, size, rng)
        case Dilate(inner, f):
            return f * uniform_points(inner, size, rng)
    raise GeometryError(f"unknown body {body!r}")


def _rejection_points(body: SymmetricPolytope, size: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Rejection from the circumscribed ball."""
    n = dim(body)
    radius = float(np.max(np.linalg.norm(polytope_vertices(body), axis=1)))
    ball = EuclideanBall(n, radius)
    accepted: List[NDArray[np.float64]] = []
    have, drawn = 0, 0
    while have < size:
        batch = max(1024, 2 * (size - have))
        proposal = uniform_points(ball, batch, rng)
        inside = proposal[_norms(body, proposal) <= 1.0]
        accepted.append(inside)
        have += len(inside)
        drawn += batch
        if drawn >= 100_000 and have / drawn < MIN_ACCEPTANCE:
            raise SamplingError(f"rejection acceptance {have / drawn:.2e} below {MIN_ACCEPTANCE:g}")
    return np.vstack(accepted)[:size]


def circle_box_area(t: float, box: Box) -> float:
    """Exact area of the disc of radius t intersected with an origin-centred rectangle."""
    if len(box.half_widths) != 2:
        raise GeometryError("circle_box_area needs a planar box")
    if t < 0.0:
        raise GeometryError(f"radius must be nonnegative, got {t}")
    a, b = box.half_widths
    if t <= min(a, b):
        return math.pi * t * t
    if t * t >= a * a + b * b:
        return 4.0 * a * b

    def primitive(x: float) -> float:
        # int_0^x sqrt(t^2 - s^2) ds
        return 0.5 * (x * math.sqrt(max(t * t - x * x, 0.0)) + t * t * math.asin(min(x / t, 1.0)))

    x_b = math.sqrt(max(t * t - b * b, 0.0))
    x1 = min(a, x_b)
    x2 = min(a, t)
    quadrant = b * x1 + primitive(x2) - primitive(x1)
    return min(4.0 * min(quadrant, a * b), math.pi * t * t)


def random_symmetric_polygon(rng: np.random.Generator, pairs: int = 2) -> SymmetricPolytope:
    """Random origin-symmetric polygon with 2*pairs vertices drawn in the upper half-plane and reflected."""
    if pairs < 2:
        raise GeometryError("a symmetric polygon needs at least two vertex pairs")
    gaps = rng.uniform(0.2, 1.0, size=pairs)
    steps = np.concatenate([[0.0], np.cumsum(gaps[:-1])]) / gaps.sum()
    angles = rng.uniform(0.0, np.pi) + steps * (np.pi - 0.2)
    radii = rng.uniform(0.5, 1.5, size=pairs)
    upper = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return SymmetricPolytope.from_vertices(np.vstack([upper, -upper]))


def intersection_volume(A: ConvexBody, B: ConvexBody) -> Optional[float]:
    """|A ∩ B| when an exact formula applies (dilates, box pairs, disc with rectangle, faceted n <= 3), else None."""
    n = dim(A)
    if dim(B) != n:
        raise GeometryError(f"dimension mismatch: {n} vs {dim(B)}")
    ratio = multiple_of(A, B)
    if ratio is not None:
        return volume(B) * min(ratio, 1.0) ** n
    a_base, a_factor = unwrap(A)
    b_base, b_factor = unwrap(B)
    match a_base, b_base:
        case Box(ha), Box(hb):
            return math.prod(2.0 * min(a_factor * x, b_factor * y) for x, y in zip(ha, hb))
        case EuclideanBall(), Box(hb) if n == 2:
            return circle_box_area(a_factor, Box(tuple(b_factor * y for y in hb)))
        case Box(ha), EuclideanBall() if n == 2:
            return circle_box_area(b_factor, Box(tuple(a_factor * x for x in ha)))
    found_a, found_b = facets(A), facets(B)
    if found_a is not None and found_b is not None and n <= 3:
        normals = np.vstack([found_a[0], found_b[0]])
        offsets = np.concatenate([found_a[1], found_b[1]])
        return _fan_volume(SymmetricPolytope(tuple(map(tuple, normals)), tuple(offsets)))
    return None


@dataclass(frozen=True)
class UniformBodyProposal:
    """Uniform law on a body, for mc_region_measure."""

    body: ConvexBody
    log_volume: float

    def draw(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        return uniform_points(self.body, size, rng)

    def log_pdf(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.full(len(points), -self.log_volume)
