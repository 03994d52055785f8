import struct

import numpy as np
import pytest

from gradnetot.errors import IndexOutOfRange, MalformedHeader, UnsupportedMagic
from gradnetot.experiments import images


def test_p2_hand_case():
    grid = images.parse_pgm(b"P2\n2 2\n255\n0 255\n255 0\n")
    np.testing.assert_array_equal(grid.intensities, [[0.0, 1.0], [1.0, 0.0]])
    assert (grid.n_rows, grid.n_cols) == (2, 2)


def test_comments_and_whitespace():
    grid = images.parse_pgm(b"P2 # magic\n# full line\n3 1 # size\n4\n0 2 4")
    np.testing.assert_array_equal(grid.intensities, [[0.0, 0.5, 1.0]])


def test_p5_and_p2_agree(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(5, 7)) / 255.0
    images.write_pgm(tmp_path / "a.pgm", img, binary=True)
    images.write_pgm(tmp_path / "b.pgm", img, binary=False)
    a, b = images.load_pgm(tmp_path / "a.pgm"), images.load_pgm(tmp_path / "b.pgm")
    np.testing.assert_array_equal(a.intensities, b.intensities)
    np.testing.assert_allclose(a.intensities, img, atol=1e-15)


def test_p5_sixteen_bit():
    data = b"P5\n2 1\n1000\n" + struct.pack(">HH", 0, 500)
    np.testing.assert_array_equal(images.parse_pgm(data).intensities, [[0.0, 0.5]])


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0", b"P2\n2 2\n255\n0 1 2", b"P2\n2\n", b"P2\n1 1\n0\n0",
                                  b"P5\n2 2\n255\n\x00", b"P2\n1 1\n10\n11", b"P2\nx 1\n10\n1"])
def test_malformed_headers(data):
    with pytest.raises(MalformedHeader):
        images.parse_pgm(data)


def _idx(path, imgs, magic=0x803):
    n, r, c = imgs.shape
    path.write_bytes(struct.pack(">IIII", magic, n, r, c) + imgs.astype(np.uint8).tobytes())


def test_idx_reader(tmp_path):
    imgs = np.arange(2 * 28 * 28).reshape(2, 28, 28) % 256
    _idx(tmp_path / "x.idx", imgs)
    g = images.load_idx(tmp_path / "x.idx", 1)
    assert g.intensities.shape == (28, 28)
    np.testing.assert_array_equal(g.intensities, imgs[1] / 255.0)
    with pytest.raises(IndexOutOfRange):
        images.load_idx(tmp_path / "x.idx", 2)
    _idx(tmp_path / "y.idx", imgs, magic=0x801)
    with pytest.raises(UnsupportedMagic):
        images.load_idx(tmp_path / "y.idx")
    (tmp_path / "z.idx").write_bytes(b"\x00\x00\x08")
    with pytest.raises(MalformedHeader):
        images.load_idx(tmp_path / "z.idx")


def test_fixture_digits(mnist_path):
    for k in range(5):
        g = images.load_image(mnist_path, k)
        assert g.intensities.shape == (28, 28)
        assert 0 < g.intensities.max() <= 1


def test_load_image_dispatch(tmp_path):
    images.write_pgm(tmp_path / "a.pgm", np.eye(3))
    np.testing.assert_array_equal(images.load_image(tmp_path / "a.pgm").intensities, np.eye(3))


def test_rasterize():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.5, 0.5], [2.0, 2.0]])
    H = images.rasterize(pts, n=3)
    np.testing.assert_array_equal(H, [[1.0, 0, 0], [0, 0.5, 0], [0, 0, 0.5]])


def test_ncc():
    a = np.array([[0.0, 1.0], [2.0, 3.0]])
    assert images.normalized_cross_correlation(a, 2 * a + 1) == pytest.approx(1.0)
    assert images.normalized_cross_correlation(a, -a) == pytest.approx(-1.0)
    assert images.normalized_cross_correlation(a, np.ones((2, 2))) == 0.0


def test_rasterized_samples_reconstruct_image(mnist_path):
    from gradnetot import densities as dn

    for k in range(5):
        img = images.load_image(mnist_path, k).intensities
        X = dn.image_to_mixture(img, 1e-4).sample(np.random.default_rng(k), 1000)
        assert images.normalized_cross_correlation(images.rasterize(X, 28), img) >= 0.7
