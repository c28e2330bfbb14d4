import numpy as np
import pytest

from mpirtik.filters import assemble_filtered, landweber_filters, pl_filters_closed
from mpirtik.fpsim import FP16, FP32, FP64, PrecisionTriple, round_array
from mpirtik.linalg import build_preconditioner, svd
from mpirtik.problems import make_problem
from mpirtik.solvers import (
    DOUBLE,
    SolverConfig,
    air_run,
    ir_from_pl,
    ir_run,
    landweber_run,
    mpir_run,
    pl_run,
    tikhonov_direct,
)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(alpha2=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(alpha2=1.0, max_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(alpha2=1.0, zeta=1.5)
    assert SolverConfig(1.0, precisions="(3,2,1)").precisions.pr1 is FP16


def test_tikhonov_direct_normal_equations(spectra):
    A, b, a2 = spectra.A, spectra.b, 1e-2
    x = tikhonov_direct(A, b, a2)
    np.testing.assert_allclose((A.T @ A + a2 * np.eye(64)) @ x, A.T @ b, atol=1e-12)


def test_tikhonov_direct_kron_matches_dense():
    p = make_problem("deblur2d", mu=1.0, seed=3, nr=8, nc=6, psf_size=3)
    D = p.A.to_dense()
    a2 = 1e-2
    ref = np.linalg.solve(D.T @ D + a2 * np.eye(D.shape[1]), D.T @ p.b)
    np.testing.assert_allclose(tikhonov_direct(p.A, p.b, a2), ref, rtol=1e-9)


def test_ir_is_mpir_double(spectra):
    cfg = SolverConfig(1e-2, 10)
    a = ir_run(spectra.A, spectra.b, cfg, spectra.x_true)
    b = mpir_run(spectra.A, spectra.b, cfg, spectra.x_true)
    for x, y in zip(a.iterates, b.iterates):
        np.testing.assert_array_equal(x, y)
    assert a.method == "ir" and b.method == "mpir"


def test_double_ir_converges_to_tikhonov(spectra):
    a2 = 1e-2
    rec = mpir_run(spectra.A, spectra.b, SolverConfig(a2, 10))
    xa = tikhonov_direct(spectra.A, spectra.b, a2)
    assert np.linalg.norm(rec.iterates[1] - xa) <= 1e-10 * np.linalg.norm(xa)
    assert np.linalg.norm(rec.x - xa) <= 1e-10 * np.linalg.norm(xa)
    assert rec.n_iter == 10 and not rec.diverged


@pytest.mark.parametrize("spec", ["(2,2,2)", "(3,2,1)", "(3,3,3)"])
def test_mpir_iterates_live_in_pr2(spectra, spec):
    t = PrecisionTriple.from_spec(spec)
    rec = mpir_run(spectra.A, spectra.b, SolverConfig(1e-2, 4, t))
    for x in rec.iterates:
        np.testing.assert_array_equal(round_array(x, t.pr2), x)


def test_mpir_low_precision_close_to_double(spectra):
    cfg = lambda t: SolverConfig(1e-2, 10, t)  # noqa: E731
    x1 = mpir_run(spectra.A, spectra.b, cfg(DOUBLE)).x
    x2 = mpir_run(spectra.A, spectra.b, cfg("(2,2,2)")).x
    assert np.linalg.norm(x2 - x1) <= 1e-4 * np.linalg.norm(x1)


def test_pl_first_step_is_tikhonov(spectra):
    a2 = 1e-2
    P = build_preconditioner(spectra.A, a2, FP64)
    rec = pl_run(spectra.A, spectra.b, P, 5, FP64)
    xa = tikhonov_direct(spectra.A, spectra.b, a2)
    assert np.linalg.norm(rec.iterates[1] - xa) <= 1e-10 * np.linalg.norm(xa)


def test_pl_matches_closed_form_filters(spectra):
    a2 = 1e-2
    P = build_preconditioner(spectra.A, a2, FP64)
    f = svd(spectra.A)
    rec = pl_run(spectra.A, spectra.b, P, 6, FP64)
    for k in (1, 3, 6):
        ref = assemble_filtered(pl_filters_closed(f.sigma, P, k), f, P.V_M, spectra.b)
        np.testing.assert_allclose(rec.iterates[k], ref, rtol=1e-8, atol=1e-8 * np.linalg.norm(ref))


def test_pl_converges_to_least_squares(rng):
    # iterated Tikhonov has the least-squares solution as its fixed point
    A = rng.standard_normal((20, 8)) + 3 * np.eye(20, 8)
    b = rng.standard_normal(20)
    P = build_preconditioner(A, 1e-1, FP64)
    rec = pl_run(A, b, P, 200, FP64)
    ls = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(rec.x, ls, rtol=1e-10, atol=1e-12)


def test_pl_low_precision_stays_in_format(spectra):
    P = build_preconditioner(spectra.A, 1e-2, FP16)
    rec = pl_run(spectra.A, spectra.b, P, 3, FP32)
    np.testing.assert_array_equal(round_array(rec.x, FP32), rec.x)


def test_landweber_matches_filters(spectra):
    f = svd(spectra.A)
    rec = landweber_run(spectra.A, spectra.b, SolverConfig(1.0, 8, zeta=1.0))
    ref = assemble_filtered(landweber_filters(f.sigma, 8), f, f.V, spectra.b)
    np.testing.assert_allclose(rec.x, ref, atol=1e-10 * np.linalg.norm(ref))


def test_landweber_step_bound(spectra):
    with pytest.raises(ValueError):
        landweber_run(2 * spectra.A, spectra.b, SolverConfig(1.0, 3))


def test_air_diverges_for_small_alpha():
    p = make_problem("spectra", mu=3.0, seed=42)
    rec = air_run(p.A, p.b, SolverConfig(1e-4, 10), p.x_true)
    assert rec.diverged
    assert rec.srre()[0] > 1e3 or rec.srre()[0] == np.inf


def test_air_stable_for_large_alpha():
    p = make_problem("spectra", mu=3.0, seed=42)
    rec = air_run(p.A, p.b, SolverConfig(1e-1, 10), p.x_true)
    assert not rec.diverged and rec.n_iter == 10


def test_air_needs_square():
    with pytest.raises(ValueError):
        air_run(np.ones((4, 3)), np.ones(4), SolverConfig(1.0, 2))


def test_ir_from_pl_first_iterates(spectra):
    a2 = 1e-2
    P = build_preconditioner(spectra.A, a2, FP64)
    ir = ir_run(spectra.A, spectra.b, SolverConfig(a2, 3), P=P)
    pl = pl_run(spectra.A, spectra.b, P, 3, FP64)
    np.testing.assert_array_equal(ir_from_pl(spectra.A, P, pl.iterates, ir.iterates, 0), 0.0)
    x1 = ir_from_pl(spectra.A, P, pl.iterates, ir.iterates, 1)
    assert np.linalg.norm(x1 - ir.iterates[1]) <= 1e-8 * np.linalg.norm(ir.iterates[1])


def test_record_csv_and_srre_errors(spectra):
    rec = mpir_run(spectra.A, spectra.b, SolverConfig(1e-2, 4))
    lines = rec.to_csv().splitlines()
    assert lines[0] == "iter,rre,residual_norm,diverged"
    assert len(lines) == 6 and lines[1].startswith("0,,")
    with pytest.raises(ValueError):
        rec.srre()
    rec2 = mpir_run(spectra.A, spectra.b, SolverConfig(1e-2, 4), x_true=spectra.x_true)
    with pytest.raises(ValueError):
        rec2.srre()
