"""Tensor-product Gauss–Legendre grids on the box [-R, R]^3.

Nodes are enumerated in lexicographic axis order (x fastest last), so
operator indices are deterministic for fixed (radius, order).
"""
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from loguru import logger
from scipy import special

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    radius: float
    order: int

    @property
    def size(self) -> int:
        return self.weights.size

    @cached_property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    @cached_property
    def node_norms(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    @property
    def volume(self) -> float:
        return (2.0 * self.radius) ** 3


def gauss_legendre(a: float, b: float, n: int):
    """Gauss–Legendre nodes and weights on [a, b]"""
    x, w = special.roots_legendre(n)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def build_box_grid(radius: float, order_per_axis: int) -> QuadratureGrid:
    if not np.isfinite(radius) or radius <= 0:
        raise InvalidArgumentError(f"Grid radius must be positive, got {radius}")
    if int(order_per_axis) != order_per_axis or order_per_axis < 2:
        raise InvalidArgumentError(f"Nodes per axis must be an integer >= 2, got {order_per_axis}")
    order_per_axis = int(order_per_axis)
    x, w = gauss_legendre(-radius, radius, order_per_axis)
    gx, gy, gz = np.meshgrid(x, x, x, indexing='ij')
    wx, wy, wz = np.meshgrid(w, w, w, indexing='ij')
    nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    weights = (wx * wy * wz).ravel()
    logger.debug(f"Built box grid R={radius} order={order_per_axis} with {weights.size} nodes")
    return QuadratureGrid(nodes=nodes, weights=weights, radius=float(radius), order=order_per_axis)


# Gauss nodes of the smooth edge integrals in box_distance_integral
EDGE_NODES = 64


def _edge_integral(h: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """∫_0^q σ(A) dt with A = √(h² + p² + t²) and σ = (A² + Ah + h²) / 3(A + h).

    t = d sinh u with d = √(h² + p²) gives dt = A du and a smooth integrand.
    """
    d = np.hypot(h, p)
    top = np.arcsinh(q / d)
    x, w = special.roots_legendre(EDGE_NODES)
    u = 0.5 * top[:, None] * (x[None, :] + 1.0)
    A = d[:, None] * np.cosh(u)
    hh = h[:, None]
    sigma = (A * A + A * hh + hh * hh) / (3.0 * (A + hh))
    return 0.5 * top * np.sum(w[None, :] * sigma * A, axis=1)


def _corner_box_integral(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """∫ |y| dy over [0, a] x [0, b] x [0, c], from div(|y| y) = 4 |y|"""

    def face(h, p, q):
        return p * _edge_integral(h, p, q) + q * _edge_integral(h, q, p)

    return 0.25 * (a * face(a, b, c) + b * face(b, a, c) + c * face(c, a, b))


def box_distance_integral(points, radius: float) -> np.ndarray:
    """∫_{[-R, R]^3} |x - y| dy for each row x of points (strictly inside the box)"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != 3:
        raise InvalidArgumentError(f"Points must have 3 coordinates, got shape {points.shape}")
    below = radius + points
    above = radius - points
    if np.any(below <= 0) or np.any(above <= 0):
        raise InvalidArgumentError(f"Points must lie strictly inside the box of radius {radius}")
    total = np.zeros(points.shape[0])
    for sides in itertools.product((below, above), repeat=3):
        total += _corner_box_integral(sides[0][:, 0], sides[1][:, 1], sides[2][:, 2])
    return total


def _check_grid_function(f, grid: QuadratureGrid, name: str) -> np.ndarray:
    f = np.asarray(f)
    if f.shape != (grid.size,):
        raise InvalidArgumentError(f"{name} has shape {f.shape}, expected ({grid.size},)")
    return f


def inner_product(f, g, grid: QuadratureGrid) -> complex:
    """Σ conj(f_j) g_j w_j, conjugate-linear in the first slot"""
    f = _check_grid_function(f, grid, "f")
    g = _check_grid_function(g, grid, "g")
    return complex(np.sum(np.conj(f) * g * grid.weights))


def integrate(f, grid: QuadratureGrid) -> complex:
    f = _check_grid_function(f, grid, "f")
    return complex(np.sum(f * grid.weights))


def symmetrized(f, grid: QuadratureGrid) -> np.ndarray:
    """Grid function -> coefficients in the √w-weighted basis"""
    return _check_grid_function(f, grid, "f") * grid.sqrt_weights


def unsymmetrized(g, grid: QuadratureGrid) -> np.ndarray:
    """Coefficients in the √w-weighted basis -> grid function"""
    return _check_grid_function(g, grid, "g") / grid.sqrt_weights


def grid_radius_of_support(values, grid: QuadratureGrid, rel_floor: float = 1e-8) -> float:
    """Largest |x_j| where |values_j| exceeds rel_floor * max |values|"""
    values = np.abs(_check_grid_function(values, grid, "values"))
    peak = values.max()
    if peak == 0:
        return 0.0
    return float(grid.node_norms[values > rel_floor * peak].max())
