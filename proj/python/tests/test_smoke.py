import numpy as np
import pytest

import strata


def test_category_table():
    assert len(strata.CATEGORY_NAMES) == 15
    assert strata.CATEGORY_NAMES[6] == "Pants"


def test_body_render_shapes():
    mesh = strata.make_cylinder(segments=8, rings=4)
    body = strata.build_body_gaussians(mesh, 1, (0.9, 0.7, 0.55))
    assert len(body) == len(mesh.faces)
    cam = strata.Camera.look_at((3.0, 0.0, 0.8), (0.0, 0.0, 0.8), 60.0, 32, 24)
    out = strata.render(body, mesh, cam)
    assert out["color"].shape == (24, 32, 3)
    assert out["identity"].shape == (24, 32, 15)
    assert out["alpha"].max() > 0.5
    assert set(np.unique(out["labels"])) <= {0, 12}


def test_scene_round_trip(tmp_path):
    mesh = strata.make_cylinder(segments=8, rings=4)
    body = strata.build_body_gaussians(mesh)
    path = str(tmp_path / "scene.ply")
    strata.save_scene(path, body, mesh)
    loaded = strata.load_scene(path, mesh)
    assert loaded.bitwise_equal(body)
    other = strata.make_cylinder(segments=9, rings=4)
    with pytest.raises(strata.StrataError, match="MeshHashMismatch"):
        strata.load_scene(path, other)


def test_image_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(5, 7, 3)) / 255.0
    path = str(tmp_path / "img.png")
    strata.save_image(path, img)
    assert np.array_equal(np.round(strata.load_image(path) * 255), np.round(img * 255))


def test_remove_group_on_fixture():
    fx = strata.avatar_fixture()
    truth = fx["truth"]
    cats = truth.categories
    assert 6 in cats
    removed = strata.remove_group(truth, 6)
    assert 6 not in removed.categories
    assert len(removed) == len(truth) - cats.count(6)


def test_gradcheck_ani():
    report = strata.gradcheck("ani", seed=7, coords=40)
    assert report["passed"], report
