import numpy as np
import pytest
from numpy.testing import assert_allclose

from ivqr.exceptions import RegionShapeError
from ivqr.regions import ParameterPolytope


def test_box_face_counts_2d():
    box = ParameterPolytope.box([0.0, 0.0], 1.0)
    faces = box.faces()
    # the region itself plus four edges; vertices span null spaces
    assert len(faces) == 5
    dims = sorted(f.dim for f in faces)
    assert dims == [1, 1, 1, 1, 2]
    assert faces[0].label == "region"


def test_box_face_counts_3d():
    box = ParameterPolytope.box([0.0, 0.0, 0.0], 1.0)
    faces = box.faces()
    # 1 region + 6 two-dimensional faces + 12 edges
    assert len(faces) == 19
    assert sum(f.dim == 2 for f in faces) == 6
    assert sum(f.dim == 1 for f in faces) == 12


def test_box_halfspace_faces_center_inside():
    # center strictly inside the half-space: all five edges survive
    region = ParameterPolytope.box_halfspace([0.0, 0.5], 1.0)
    faces = region.faces()
    labels = {f.label for f in faces}
    assert labels == {
        "region",
        "left-edge",
        "right-edge",
        "bottom-edge",
        "top-edge",
        "diagonal-edge",
    }
    diag = next(f for f in faces if f.label == "diagonal-edge")
    assert_allclose(diag.basis[:, 0], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    pts = diag.grid_points(0.25)
    assert_allclose(pts[:, 0], pts[:, 1])


def test_box_halfspace_faces_center_on_diagonal():
    # cut through the center: two edges collapse to vertices and drop out
    region = ParameterPolytope.box_halfspace([0.0, 0.0], 1.0)
    labels = {f.label for f in region.faces()}
    assert labels == {"region", "left-edge", "top-edge", "diagonal-edge"}


def test_box_halfspace_entirely_inside_halfspace():
    # box far above the diagonal: the cut is inactive, no diagonal edge
    region = ParameterPolytope.box_halfspace([0.0, 10.0], 1.0)
    labels = [f.label for f in region.faces()]
    assert "diagonal-edge" not in labels
    assert len(labels) == 5


def test_box_halfspace_empty_rejected():
    with pytest.raises(RegionShapeError):
        ParameterPolytope.box_halfspace([0.0, -10.0], 1.0)


def test_halfspace_filters_region_grid():
    region = ParameterPolytope.box_halfspace([0.0, 0.0], 1.0)
    pts = region.faces()[0].grid_points(0.5)
    assert np.all(pts[:, 1] >= pts[:, 0] - 1e-12)
    box_pts = ParameterPolytope.box([0.0, 0.0], 1.0).faces()[0].grid_points(0.5)
    assert pts.shape[0] < box_pts.shape[0]


def test_contains():
    region = ParameterPolytope.box_halfspace([0.0, 0.0], 1.0)
    inside = region.contains([[0.0, 0.5], [-1.0, 1.0]])
    outside = region.contains([[0.5, 0.0], [2.0, 2.0]])
    assert inside.all()
    assert not outside.any()


def test_grid_points_include_endpoints():
    box = ParameterPolytope.box([0.0, 0.0], 1.0)
    face = box.faces()[0]
    pts = face.grid_points(0.5)
    assert [-1.0, -1.0] in pts.tolist()
    assert [1.0, 1.0] in pts.tolist()


def test_bad_shape_and_radius():
    with pytest.raises(RegionShapeError):
        ParameterPolytope("ball", np.zeros(2), 1.0)
    with pytest.raises(RegionShapeError):
        ParameterPolytope.box([0.0, 0.0], 0.0)
    with pytest.raises(RegionShapeError):
        ParameterPolytope.box_halfspace([0.0, 0.0, 0.0], 1.0)
