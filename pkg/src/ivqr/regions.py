"""Compact convex parameter regions and their faces.

Supported shapes: axis-aligned boxes in any dimension, and (for the binary
case) a box intersected with the half-space ``y1 >= y0`` that encodes a
monotone treatment effect.  Faces are enumerated with the subspace each one
spans; vertices span the null space and are excluded.  The region itself is
its own top-dimensional face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import RegionShapeError

_EDGE_EPS = 1e-12


@dataclass(frozen=True)
class Face:
    """A face of a polytope together with its spanning subspace.

    ``basis`` has one orthonormal column per face dimension, ordered (and
    signed) by leading coordinate index so projected determinants carry a
    fixed sign convention.  Points on the face are
    ``origin + basis @ t`` for parameters ``t`` inside ``spans``; for the
    top face of a box-halfspace region the box grid is additionally
    filtered by the half-space constraint.
    """

    label: str
    basis: np.ndarray
    origin: np.ndarray
    spans: tuple[tuple[float, float], ...]
    halfspace_filter: bool = False

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def grid_points(self, step: float) -> np.ndarray:
        """Uniform grid over the face, endpoints included."""
        if step <= 0.0:
            raise ValueError(f"grid step must be positive, got {step}")
        axes = []
        for lo, hi in self.spans:
            npts = max(int(round((hi - lo) / step)) + 1, 2)
            axes.append(np.linspace(lo, hi, npts))
        mesh = np.meshgrid(*axes, indexing="ij")
        params = np.column_stack([m.reshape(-1) for m in mesh])
        pts = self.origin[None, :] + params @ self.basis.T
        if self.halfspace_filter:
            pts = pts[pts[:, 1] >= pts[:, 0] - _EDGE_EPS]
        return pts


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class ParameterPolytope:
    """Box ``{ |y - center|_inf <= radius }``, optionally cut by ``y1 >= y0``."""

    kind: str
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        object.__setattr__(self, "center", center)
        if self.kind not in ("box", "box_halfspace"):
            raise RegionShapeError(f"unsupported region shape {self.kind!r}")
        if self.radius <= 0.0:
            raise RegionShapeError(f"radius must be positive, got {self.radius}")
        if self.kind == "box_halfspace":
            if center.shape[0] != 2:
                raise RegionShapeError("box_halfspace regions are two-dimensional")
            if center[1] - center[0] <= -2.0 * self.radius:
                raise RegionShapeError("half-space cuts away the whole box")

    @classmethod
    def box(cls, center, radius: float) -> "ParameterPolytope":
        return cls("box", np.asarray(center, dtype=float), float(radius))

    @classmethod
    def box_halfspace(cls, center, radius: float) -> "ParameterPolytope":
        return cls("box_halfspace", np.asarray(center, dtype=float), float(radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = np.all(np.abs(pts - self.center[None, :]) <= self.radius + _EDGE_EPS, axis=1)
        if self.kind == "box_halfspace":
            ok &= pts[:, 1] >= pts[:, 0] - _EDGE_EPS
        return ok

    def faces(self) -> list[Face]:
        if self.kind == "box":
            return self._box_faces()
        return self._box_halfspace_faces()

    def _box_faces(self) -> list[Face]:
        l = self.dim
        lo, hi = self.lo, self.hi
        eye = np.eye(l)
        faces = [
            Face(
                label="region",
                basis=eye,
                origin=lo.copy(),
                spans=tuple((0.0, hi[i] - lo[i]) for i in range(l)),
            )
        ]
        for k in range(l - 1, 0, -1):
            for free in itertools.combinations(range(l), k):
                bound = [i for i in range(l) if i not in free]
                for sides in itertools.product((0, 1), repeat=len(bound)):
                    origin = lo.copy()
                    for i, side in zip(bound, sides):
                        origin[i] = hi[i] if side else lo[i]
                    label = "face[" + ",".join(
                        f"y{i}={'hi' if side else 'lo'}"
                        for i, side in zip(bound, sides)
                    ) + "]"
                    faces.append(
                        Face(
                            label=label,
                            basis=eye[:, list(free)],
                            origin=origin,
                            spans=tuple((0.0, hi[i] - lo[i]) for i in free),
                        )
                    )
        return faces

    def _box_halfspace_faces(self) -> list[Face]:
        (a0, a1), (b0, b1) = self.lo, self.hi
        eye = np.eye(2)
        faces = [
            Face(
                label="region",
                basis=eye,
                origin=np.array([a0, a1]),
                spans=((0.0, b0 - a0), (0.0, b1 - a1)),
                halfspace_filter=True,
            )
        ]

        def _segment(label, basis_col, origin, lo_t, hi_t):
            if hi_t - lo_t <= _EDGE_EPS:
                return  # degenerate edge is a vertex
            faces.append(
                Face(
                    label=label,
                    basis=basis_col[:, None],
                    origin=origin,
                    spans=((lo_t, hi_t),),
                )
            )

        # vertical edges span e2, horizontal edges span e1
        _segment("left-edge", eye[:, 1], np.array([a0, 0.0]), max(a1, a0), b1)
        _segment("right-edge", eye[:, 1], np.array([b0, 0.0]), max(a1, b0), b1)
        _segment("bottom-edge", eye[:, 0], np.array([0.0, a1]), a0, min(b0, a1))
        _segment("top-edge", eye[:, 0], np.array([0.0, b1]), a0, min(b0, b1))
        diag_lo, diag_hi = max(a0, a1), min(b0, b1)
        if diag_hi - diag_lo > _EDGE_EPS:
            faces.append(
                Face(
                    label="diagonal-edge",
                    basis=_unit(np.array([1.0, 1.0]))[:, None],
                    origin=np.zeros(2),
                    spans=((diag_lo * np.sqrt(2.0), diag_hi * np.sqrt(2.0)),),
                )
            )
        return faces
