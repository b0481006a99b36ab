import numpy as np
import pytest

from kras.eda import build_basis, decompose_matrix, derive_M, reconstruct
from kras.exceptions import LinearlyDependentBasis, NotClosedUnderDerivative, NotRepresentable
from kras.expr import evaluate, parse
from kras.quad import gl_panel_nodes

SEC61_F = ["1", "t", "sin(20*t)", "cos(20*t)"]
SEC61_VARPHI = ["1/(sin(1.2*t)^2 + 1)"]
SEC61_PHI = ["exp(sin(20*t))", "exp(cos(20*t))"]

EX1_F = ["1", "t^3", "cos(10*t)", "sin(cos(10*t))", "ln(sin(20*t)+2)"]
EX1_VARPHI = ["t^2", "sin(10*t)", "sin(10*t)*cos(cos(10*t))", "cos(20*t)/(sin(20*t)+2)"]


def test_hilbert_basis_accepted():
    b = build_basis(["1", "t"], interval=(0, 1))
    assert (b.d, b.delta, b.mu, b.kappa) == (2, 0, 0, 2)


def test_proportional_rows_rejected():
    with pytest.raises(LinearlyDependentBasis):
        build_basis(["1", "2"], interval=(0, 1))


def test_sec61_basis_dimensions():
    b = build_basis(SEC61_F, SEC61_VARPHI, SEC61_PHI, interval=(-1, 0))
    assert (b.d, b.delta, b.mu, b.kappa) == (4, 1, 2, 7)


def test_growing_f_grows_d():
    b = build_basis(SEC61_F + ["t^2"], SEC61_VARPHI, SEC61_PHI, interval=(-1, 0))
    assert b.d == 5


def test_M_of_constant():
    np.testing.assert_allclose(derive_M(build_basis(["1"], interval=(0, 1))), [[0.0]], atol=1e-14)


def test_M_example_structure():
    b = build_basis(EX1_F, EX1_VARPHI, interval=(-1, 0))
    M = derive_M(b)
    expected = np.zeros((5, 9))
    expected[1, 0] = 3.0
    expected[2, 1] = -10.0
    expected[3, 2] = -10.0
    expected[4, 3] = 20.0
    np.testing.assert_allclose(M, expected, atol=1e-10)


def test_M_sec61_against_dense_oracle():
    b = build_basis(SEC61_F, SEC61_VARPHI, interval=(-1, 0))
    M = derive_M(b)
    tau, w = gl_panel_nodes(-1, 0, 600)
    h, fp = b.eval_h(tau), b.eval_fprime(tau)
    oracle = np.linalg.solve((h * w) @ h.T, ((fp * w) @ h.T).T).T
    np.testing.assert_allclose(M, oracle, atol=1e-9)
    # d/dt sin(20t) selects 20 cos(20t) exactly; h = [varphi; f]
    np.testing.assert_allclose(M[2], [0, 0, 0, 0, 20.0], atol=1e-10)


def test_M_invariant_under_redundant_varphi():
    base = build_basis(SEC61_F, SEC61_VARPHI, interval=(-1, 0))
    grown = build_basis(SEC61_F, SEC61_VARPHI + ["t^2"], interval=(-1, 0))
    M0, M1 = derive_M(base), derive_M(grown)
    np.testing.assert_allclose(M1[:, 1], 0.0, atol=1e-10)
    np.testing.assert_allclose(np.delete(M1, 1, axis=1), M0, atol=1e-10)


def test_not_closed_under_derivative():
    with pytest.raises(NotClosedUnderDerivative, match="varphi"):
        derive_M(build_basis(["1", "t^3"], interval=(-1, 0)))


def test_zero_kernel():
    b = build_basis(SEC61_F, SEC61_VARPHI, SEC61_PHI, interval=(-1, 0))
    C = decompose_matrix([["0", None]], b, 2)
    assert C.shape == (1, 14) and not C.any()


def test_sec61_A1_values():
    b = build_basis(SEC61_F, SEC61_VARPHI, SEC61_PHI, interval=(-1, 0))
    kernel = [["0.1 + 3*sin(20*t)", "0.8*exp(sin(20*t)) - 0.3*exp(cos(20*t))"],
              ["0.3 + 1/(sin(1.2*t)^2 + 1)", "3*sin(20*t)"]]
    C = decompose_matrix(kernel, b, 2)
    values = np.sort(C[np.abs(C) > 1e-9])
    np.testing.assert_allclose(values, np.sort([0.1, 3.0, 0.8, -0.3, 0.3, 1.0, 3.0]), atol=1e-9)
    # g = [phi1, phi2, varphi, 1, t, sin, cos]; column j*2 + c
    assert C[0, 0 * 2 + 1] == pytest.approx(0.8) and C[0, 1 * 2 + 1] == pytest.approx(-0.3)
    assert C[1, 2 * 2 + 0] == pytest.approx(1.0) and C[1, 3 * 2 + 0] == pytest.approx(0.3)


def test_example1_kernel_decomposition():
    b = build_basis(EX1_F, EX1_VARPHI, interval=(-1, 0))
    kernel = [["1 + sin(cos(10*t))", "t^3 + cos(10*t)"], ["0", "ln(sin(20*t) + 2)"]]
    C = decompose_matrix(kernel, b, 2)
    assert np.count_nonzero(np.abs(C) > 1e-12) == 5
    np.testing.assert_allclose(C[np.abs(C) > 1e-12], 1.0, atol=1e-10)


def test_all_sec61_kernels_reconstruct(sec61):
    spec, ctx = sec61
    for i, (dc, kern) in enumerate(zip(ctx.decomps, spec.system.kernels)):
        tau = np.linspace(*dc.basis.interval, 200)
        for key, hat in (("A", dc.A_hat), ("B", dc.B_hat), ("C", dc.C_hat), ("BB", dc.BB_hat)):
            grid = kern[key]
            if not grid:
                continue
            ref = np.array([[np.broadcast_to(evaluate(parse(str(e)), tau), tau.shape) for e in row] for row in grid])
            got = reconstruct(hat, dc.basis, ref.shape[1], tau)
            assert np.abs(got - ref.transpose(2, 0, 1)).max() <= 1e-8, (i, key)


def test_not_representable_names_entry():
    b = build_basis(SEC61_F, SEC61_VARPHI, interval=(-1, 0))
    with pytest.raises(NotRepresentable, match=r"\(0, 1\)"):
        decompose_matrix([["1", "exp(t)"]], b, 2)
