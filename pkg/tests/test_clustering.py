import numpy as np
import pytest

from dh2.clustering import build_cluster_tree, check_tree_assumptions


@pytest.fixture(params=[("regular", False), ("tight", False), ("tight", True)])
def tree_and_mesh(request, sphere):
    mode, adaptive = request.param
    mesh = sphere(3)
    return build_cluster_tree(mesh, 16, mode=mode, adaptive=adaptive), mesh


def test_sons_partition_father(tree_and_mesh):
    tree, _ = tree_and_mesh
    for c in tree.clusters:
        if c.is_leaf:
            continue
        joined = np.sort(np.concatenate([s.indices for s in c.sons]))
        np.testing.assert_array_equal(joined, c.indices)
        assert all(s.level == c.level + 1 and s.father == c.id for s in c.sons)


def test_leaves_partition_index_set(tree_and_mesh):
    tree, mesh = tree_and_mesh
    np.testing.assert_array_equal(np.sort(tree.leaf_order()), np.arange(mesh.n_panels))
    assert all(c.size <= tree.leaf_size for c in tree.leaves)
    assert all(c.size > 0 for c in tree.clusters)


def test_boxes_contain_panels(tree_and_mesh):
    tree, mesh = tree_and_mesh
    corners = mesh.corners
    for c in tree.clusters:
        pts = corners[c.indices].reshape(-1, 3)
        assert np.all(pts >= c.lo - 1e-12) and np.all(pts <= c.hi + 1e-12)


def test_fathers_before_sons(tree_and_mesh):
    tree, _ = tree_and_mesh
    assert all(c.id == k for k, c in enumerate(tree.clusters))
    assert all(c.father is None or c.father < c.id for c in tree.clusters)


def test_level_diameters_decrease(tree_and_mesh):
    tree, _ = tree_and_mesh
    delta = tree.level_diameters
    # regular boxes carry a panel margin that the bare root cube does not
    assert np.all(np.diff(delta[1:]) < 0)
    assert delta[1] <= delta[0] * 1.05


def test_regular_boxes_congruent(sphere):
    mesh = sphere(3)
    tree = build_cluster_tree(mesh, 16, mode="regular")
    rep = check_tree_assumptions(tree, mesh)
    assert rep.congruence_defect.max() < 1e-12
    assert rep.max_sons <= 8
    assert len(rep.lines()) == 8


def test_invalid_arguments(sphere):
    with pytest.raises(ValueError):
        build_cluster_tree(sphere(1), 0)
    with pytest.raises(ValueError):
        build_cluster_tree(sphere(1), 16, mode="bogus")
