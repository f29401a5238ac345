import numpy as np
import pytest

from chwet.mesh import (BoundaryLabel, BoundaryTag, InvertedTriangleError, MeshParseError,
                        UnlabeledBoundaryError, bisect, coarsen, conformity_defects, generate_rectangle,
                        import_mesh, remove_triangles, write_mesh)
from oracles import brute_force_conformity

SOLID = BoundaryLabel.solid()


def unit_square():
    return generate_rectangle(1, 1, 1, 1, SOLID)


def test_minimal_rectangle():
    m = unit_square()
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (4, 2, 4)


def test_rectangle_counts():
    m = generate_rectangle(2, 0.5, 200, 50, {"bottom": SOLID})
    assert m.n_triangles == 20000 and m.n_vertices == 201 * 51  # (nx+1)(ny+1)
    assert np.all(m.boundary_tags[m.boundary_edge_mask(BoundaryTag.SOLID)] == BoundaryTag.SOLID)
    assert m.perimeter(BoundaryTag.SOLID) == pytest.approx(2.0)
    assert m.perimeter(BoundaryTag.OPEN) == pytest.approx(3.0)


def test_rectangle_area_partition():
    assert generate_rectangle(1, 1, 2, 2).area() == 1.0


def test_rectangle_origin_and_orientation():
    m = generate_rectangle(1, 0.5, 4, 2, origin=(-0.5, 0.0))
    assert m.vertices[:, 0].min() == -0.5 and m.vertices[:, 0].max() == 0.5
    assert np.all(m.signed_areas() > 0)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, 1.5)])
def test_rectangle_invalid(args):
    with pytest.raises(ValueError):
        generate_rectangle(*args)


def _write(tmp_path, text):
    p = tmp_path / "m.txt"
    p.write_text(text)
    return p


def test_import_round_trip(tmp_path):
    text = """# unit square
vertices 4
0 0
1 0
1 1
0 1
triangles 2
0 1 2
0 2 3
boundary 4
0 1 0 0
1 2 0 0
2 3 0 0
3 0 0 0
"""
    m = import_mesh(_write(tmp_path, text))
    ref = unit_square()
    assert m.n_triangles == 2 and m.area() == pytest.approx(1.0)
    assert sorted(map(tuple, m.vertices.tolist())) == sorted(map(tuple, ref.vertices.tolist()))
    write_mesh(m, tmp_path / "out.txt")
    again = import_mesh(tmp_path / "out.txt")
    assert np.array_equal(again.vertices, m.vertices) and np.array_equal(again.triangles, m.triangles)


def test_import_clockwise_triangle(tmp_path):
    text = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 2 1\nboundary 3\n0 1 0 0\n1 2 0 0\n2 0 0 0\n"
    with pytest.raises(InvertedTriangleError):
        import_mesh(_write(tmp_path, text))


def test_import_missing_boundary_edge(tmp_path):
    text = "vertices 3\n0 0\n1 0\n0 1\ntriangles 1\n0 1 2\nboundary 2\n0 1 0 0\n1 2 0 0\n"
    with pytest.raises(UnlabeledBoundaryError):
        import_mesh(_write(tmp_path, text))


def test_import_parse_error(tmp_path):
    with pytest.raises(MeshParseError):
        import_mesh(_write(tmp_path, "vertices 2\n0 0\n"))


def test_bisect_empty_mark_is_identity():
    m = generate_rectangle(1, 1, 2, 2)
    assert bisect(m, []) is m


def test_bisect_all_preserves_area():
    m = bisect(unit_square(), [0, 1])
    assert m.n_triangles == 4 and m.area() == pytest.approx(1.0, abs=1e-15)


def test_bisect_one_marked_is_conforming():
    m = bisect(unit_square(), [0])
    assert m.n_triangles in (3, 4)
    assert brute_force_conformity(m.triangles, m.boundary_edges)
    assert conformity_defects(m) == 0


def test_bisect_labels_inherited():
    m = generate_rectangle(1, 1, 2, 2, {"bottom": BoundaryLabel.solid(3)})
    r = bisect(m, np.arange(m.n_triangles))
    assert r.perimeter(BoundaryTag.SOLID) == pytest.approx(1.0)
    assert set(r.boundary_subids[r.boundary_tags == BoundaryTag.SOLID]) == {3}


def test_coarsen_inverts_bisect():
    m = generate_rectangle(1, 1, 2, 2)
    r = bisect(m, np.arange(m.n_triangles))
    c = coarsen(r, np.arange(r.n_triangles))
    assert c.n_triangles == m.n_triangles and c.n_vertices == m.n_vertices
    assert sorted(map(tuple, c.vertices.tolist())) == sorted(map(tuple, m.vertices.tolist()))
    assert c.area() == pytest.approx(1.0)


def test_coarsen_empty_and_imported():
    m = generate_rectangle(1, 1, 2, 2)
    assert coarsen(m, []) is m
    assert coarsen(m, np.arange(m.n_triangles)) is m  # no refinement history


def test_random_refine_coarsen_sequence_keeps_invariants():
    rng = np.random.default_rng(3)
    m = generate_rectangle(2, 1, 4, 2, {"bottom": SOLID})
    for _ in range(6):
        m = bisect(m, rng.choice(m.n_triangles, size=max(1, m.n_triangles // 4), replace=False))
        assert brute_force_conformity(m.triangles, m.boundary_edges)
        assert m.area() == pytest.approx(2.0, rel=1e-12)
    for _ in range(4):
        m = coarsen(m, rng.choice(m.n_triangles, size=m.n_triangles // 2, replace=False))
        m.validate()
        assert brute_force_conformity(m.triangles, m.boundary_edges)
        assert m.area() == pytest.approx(2.0, rel=1e-12)
        assert m.perimeter(BoundaryTag.SOLID) == pytest.approx(2.0)


def test_remove_triangles_labels_new_boundary():
    m = generate_rectangle(1, 1, 4, 4)
    centre = np.flatnonzero(np.all(np.abs(m.vertices[m.triangles].mean(axis=1) - 0.5) < 0.25, axis=1))
    r = remove_triangles(m, centre, BoundaryLabel.solid(7))
    assert r.area() == pytest.approx(0.75)
    assert r.perimeter(BoundaryTag.SOLID) == pytest.approx(2.0)
    assert r.perimeter(BoundaryTag.OPEN) == pytest.approx(4.0)
