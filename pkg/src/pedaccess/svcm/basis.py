"""Spatial bases for coefficient surfaces and their roughness penalties."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.interpolate import BSpline

KINDS = ("tensor_b_spline", "thin_plate_radial")


class SvcmError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    """``n_knots`` is the number of knots per axis (boundaries included) for
    the tensor basis and the number of radial centers for the thin-plate one."""

    kind: str = "tensor_b_spline"
    n_knots: int = 8
    degree: int = 3
    penalty_order: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SvcmError(f"unknown basis kind {self.kind!r}")
        if self.degree < 1 or self.penalty_order < 1:
            raise SvcmError("degree and penalty order must be positive")
        if self.kind == "tensor_b_spline" and self.n_knots < 2:
            raise SvcmError("need at least two knots per axis")
        if self.size < 3:
            raise SvcmError("basis size must be at least 3")
        if self.kind == "tensor_b_spline" and self.penalty_order >= self.per_axis:
            raise SvcmError("penalty order must be below the per-axis basis size")

    @property
    def per_axis(self) -> int:
        return self.n_knots + self.degree - 1

    @property
    def size(self) -> int:
        if self.kind == "tensor_b_spline":
            return self.per_axis ** 2
        return self.n_knots + 3


def _open_knots(lo: float, hi: float, n: int, degree: int) -> np.ndarray:
    inner = np.linspace(lo, hi, n)
    return np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])


def _difference_penalty(size: int, order: int) -> np.ndarray:
    D = np.diff(np.eye(size), n=order, axis=0)
    return D.T @ D


def _tps(r: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = r * r * np.log(r)
    return np.where(r > 0, out, 0.0)


@dataclass(frozen=True)
class SpatialBasis:
    """A basis laid out over a set of planar sites.

    ``design(coords)`` returns the n-by-K matrix of basis functions at the
    given points; ``penalty`` is the K-by-K roughness penalty.
    """

    spec: BasisSpec
    lower: np.ndarray
    upper: np.ndarray
    knots_x: np.ndarray | None = None
    knots_y: np.ndarray | None = None
    centers: np.ndarray | None = None
    radial_transform: np.ndarray | None = None

    @classmethod
    def for_sites(cls, spec: BasisSpec, coords, seed: int = 0) -> "SpatialBasis":
        xy = np.asarray(coords, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) == 0:
            raise SvcmError("coordinates must be an (n, 2) array")
        if not np.all(np.isfinite(xy)):
            raise SvcmError("coordinates must be finite")
        lo, hi = xy.min(axis=0), xy.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        # pad so every site sits strictly inside the knot range
        lo, hi = lo - 1e-9 * span, hi + 1e-9 * span
        if spec.kind == "tensor_b_spline":
            return cls(spec, lo, hi,
                       knots_x=_open_knots(lo[0], hi[0], spec.n_knots, spec.degree),
                       knots_y=_open_knots(lo[1], hi[1], spec.n_knots, spec.degree))
        unit = (xy - lo) / (hi - lo)
        uniq = np.unique(unit, axis=0)
        if len(uniq) < spec.n_knots:
            raise SvcmError(f"need at least {spec.n_knots} distinct sites for the radial basis")
        centers, _ = kmeans2(uniq, spec.n_knots, seed=seed, minit="++")
        omega = _tps(np.linalg.norm(centers[:, None] - centers[None], axis=-1))
        U, s, Vt = np.linalg.svd(omega)
        keep = s > 1e-10 * s.max()
        transform = (U[:, keep] / np.sqrt(s[keep])) @ Vt[keep]
        return cls(spec, lo, hi, centers=centers, radial_transform=transform.T)

    @property
    def size(self) -> int:
        return self.spec.size

    def design(self, coords) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(coords, dtype=float))
        if self.spec.kind == "tensor_b_spline":
            k = self.spec.degree
            x = np.clip(xy[:, 0], self.knots_x[0], self.knots_x[-1])
            y = np.clip(xy[:, 1], self.knots_y[0], self.knots_y[-1])
            bx = BSpline.design_matrix(x, self.knots_x, k).toarray()
            by = BSpline.design_matrix(y, self.knots_y, k).toarray()
            return (bx[:, :, None] * by[:, None, :]).reshape(len(xy), -1)
        unit = (xy - self.lower) / (self.upper - self.lower)
        r = np.linalg.norm(unit[:, None] - self.centers[None], axis=-1)
        radial = _tps(r) @ self.radial_transform
        return np.column_stack([np.ones(len(xy)), unit, radial])

    @property
    def penalty(self) -> np.ndarray:
        if self.spec.kind == "tensor_b_spline":
            m = self.spec.per_axis
            P1 = _difference_penalty(m, self.spec.penalty_order)
            eye = np.eye(m)
            return np.kron(P1, eye) + np.kron(eye, P1)
        d = np.ones(self.size)
        d[:3] = 0.0
        return np.diag(d)
