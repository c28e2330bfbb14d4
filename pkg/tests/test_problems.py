import numpy as np
import pytest

from mpirtik.linalg import KronOperator, svd
from mpirtik.problems import (
    add_noise,
    gaussian_psf,
    gen_deblur2d,
    gen_spectra,
    load_problem,
    make_problem,
    save_problem,
)


def test_spectra_operator():
    A, x = gen_spectra(64, 2.0)
    assert A.shape == (64, 64) and x.shape == (64,)
    np.testing.assert_array_equal(A, A.T)
    s = svd(A).sigma
    assert s[0] <= 1.0
    assert 1e8 <= s[0] / s[-1] <= 1e10
    # gradual decay, no gap in the leading part of the spectrum
    assert np.all(s[1:32] / s[:31] > 0.5)
    assert np.all(x >= 0) and x.max() > 0


@pytest.mark.parametrize("mu", [0.5, 1.0, 3.0])
def test_noise_level_is_exact(mu):
    p = make_problem("spectra", mu=mu, seed=7)
    assert 100 * np.linalg.norm(p.noise) / np.linalg.norm(p.b_exact) == pytest.approx(mu, rel=1e-12)


def test_noise_is_seeded():
    b = np.ones(10)
    np.testing.assert_array_equal(add_noise(b, 1.0, 3), add_noise(b, 1.0, 3))
    assert not np.array_equal(add_noise(b, 1.0, 3), add_noise(b, 1.0, 4))
    np.testing.assert_array_equal(add_noise(b, 0.0, 3), 0.0)
    with pytest.raises(ValueError):
        add_noise(b, -1.0, 3)


def test_golden_noise_seed_42(spectra):
    # frozen PCG64 draws for seed 42, n = 64, mu = 1%
    golden = [float.fromhex(h) for h in
              ("0x1.4fbb9b5dc941ep-10", "-0x1.1e75b7b72618ep-8", "0x1.9d6b0871cc32cp-9", "0x1.03133b6f90e7ep-8")]
    np.testing.assert_allclose(spectra.noise[:4], golden, rtol=1e-13)


def test_psf_has_unit_mass():
    g = gaussian_psf(2.0, 9)
    assert g.shape == (9, 9)
    assert g.sum() == pytest.approx(1.0)
    assert np.linalg.matrix_rank(g) == 1


def test_deblur2d_structure():
    K, x = gen_deblur2d(16, 12, 2.0, 5)
    assert isinstance(K, KronOperator)
    assert K.shape == (192, 192)
    assert K.Ac.shape == (16, 16) and K.Ar.shape == (12, 12)
    # column-major vectorization of a 16 x 12 image
    X = x.reshape((16, 12), order="F")
    np.testing.assert_allclose(K @ x, (K.Ac @ X @ K.Ar.T).ravel(order="F"))
    with pytest.raises(ValueError):
        gen_deblur2d(8, 8, 2.0, 4)


@pytest.mark.parametrize("kind,params", [("spectra", {"n": 16}), ("deblur2d", {"nr": 8, "nc": 6, "psf_size": 3})])
def test_problem_roundtrip(tmp_path, kind, params):
    p = make_problem(kind, mu=1.0, seed=1, **params)
    q = load_problem(save_problem(p, tmp_path / kind))
    np.testing.assert_array_equal(q.b, p.b)
    np.testing.assert_array_equal(q.x_true, p.x_true)
    np.testing.assert_array_equal(q.b_exact, p.b_exact)
    assert type(q.A) is type(p.A)
    assert q.noise_level_percent == 1.0 and q.seed == 1


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_problem("phillips")
