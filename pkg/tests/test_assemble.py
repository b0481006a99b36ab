import numpy as np
import pytest

from kras.assemble import (
    bold_matrices,
    decompose_system,
    gain_variables,
    lmi_analysis,
    lmi_convex,
    lmi_overestimate,
    unknown_count,
)
from kras.exceptions import AlphaZero, BilinearityError, DimensionMismatch, InvalidZ
from kras.sdp import SdpProblem, solve
from kras.synth import ControllerGains, prepare, refine_fixed_K
from kras.system import DelaySystem, SupplyRate
from kras.verify import bilinear_margins, random_small_system


def _single_delay(r=0.8):
    system = DelaySystem(n=1, m=1, p=1, q=1, delays=(r,), A=[[[-1.0]], [[0.2]]], B=[[[1.0]]],
                         C=[[[1.0]]], D1=[[1.0]], D2=[[0.0]])
    return system, [{"f": ["1"]}]


def test_pointwise_only_M_row():
    r = 0.8
    system, bases = _single_delay(r)
    bold = bold_matrices(system, decompose_system(system, bases))
    np.testing.assert_allclose(bold.M, [[1 / np.sqrt(r), -1 / np.sqrt(r), 0.0]], atol=1e-13)
    assert bold.beta == 3 and bold.A.shape == (1, 4)
    np.testing.assert_allclose(bold.A[0, :2], [-1.0, 0.2])
    np.testing.assert_allclose(bold.A[0, 2], 0.0)
    np.testing.assert_allclose(bold.A[0, 3], 1.0)


def test_sec61_shapes(sec61):
    bold = sec61[1].bold
    assert bold.kappas == [7, 7] and bold.beta == 17
    assert bold.A.shape == (2, 35) and bold.C.shape == (2, 35)
    assert bold.B1.shape == (2, 17 + 1) and bold.B2.shape == (2, 17 + 1)
    assert bold.M.shape[1] == 1 + 2 + sum(bold.varkappas)
    np.testing.assert_allclose(bold.Lam, np.diag([1.0, 1.0, 0.7, 0.7]), atol=1e-15)


def test_dissipation_block_is_square_and_symmetric(sec61):
    bold, supply = sec61[1].bold, sec61[1].supply
    prog = lmi_analysis(bold, supply, "K", gains={"K": np.array([[-1.0, -1.0]])})
    core = prog.constraints[-1].expr
    size = bold.beta * bold.n + bold.q + bold.m
    assert core.shape == (size, size) and core.is_symmetric()


def test_Xi_regression_at_identity(sec61):
    bold = sec61[1].bold
    n, q = bold.n, bold.q
    I = np.eye(n)
    Xi = bold.Xi([I, I], [I, I], np.eye(q)).value({})
    r = (0.0, 1.0, 1.7)
    first = np.concatenate([[1 + (r[i + 1] - r[i])] * n for i in range(2)] + [[0.0] * (n + bold.kappa * n + q)])
    second = np.concatenate([[0.0] * n, [1.0] * (2 * n), [1.0] * (sum(bold.varkappas) * n),
                             [1.0] * (sum(bold.mus) * n), [1.0] * q])
    np.testing.assert_allclose(np.diag(Xi), first - second, atol=1e-15)
    assert not np.any(Xi - np.diag(np.diag(Xi)))


def test_unknown_count(sec61):
    bold = sec61[1].bold
    # sym(2) + d n^2 + sym(d n) + 2 nu sym(n) + p n with d = 8
    assert unknown_count(bold) == 3 + 32 + 136 + 12 + 2 == 185
    assert unknown_count(bold, include_gamma=True) == 186


def test_alpha_zero(sec61):
    with pytest.raises(AlphaZero):
        lmi_convex(sec61[1].bold, sec61[1].supply, (0.0, 1.0))


def test_alpha_too_long(sec61):
    with pytest.raises(DimensionMismatch):
        lmi_convex(sec61[1].bold, sec61[1].supply, np.ones(18))


@pytest.mark.parametrize("Z", [np.eye(2), np.zeros((2, 2)), np.diag([0.5, 1.2])])
def test_invalid_Z(sec61, Z):
    bold = sec61[1].bold
    with pytest.raises(InvalidZ):
        lmi_overestimate(bold, sec61[1].supply, np.eye(2), np.zeros((2, 16)), {"K": np.zeros((1, 2))}, Z)


def test_bilinear_request_rejected(sec61):
    with pytest.raises(BilinearityError):
        lmi_analysis(sec61[1].bold, sec61[1].supply, "free")


def test_gain_recovery_identity(rng):
    K = rng.standard_normal((1, 3))
    F = rng.standard_normal((3, 3))
    X = F @ F.T + 3 * np.eye(3)
    np.testing.assert_allclose((K @ X) @ np.linalg.inv(X), K, atol=1e-10)


def test_delayed_gain_variables(sec62):
    bold = sec62[1].bold
    names = gain_variables(bold)
    assert sorted(names) == ["K0", "K1", "K2", "Kc1", "Kc2"]
    assert names["Kc1"].shape == (1, 7 * 2)


def test_overestimate_tight_at_anchor(rng):
    ctx = prepare(*random_small_system(rng))
    anchor = ControllerGains.static(np.zeros((1, 2)))
    cert = refine_fixed_K(ctx, anchor)
    values = {"P1": cert.P1, "P2": cert.P2, "P3": cert.P3, "Q1": cert.Q[0], "R1": cert.R[0],
              "gamma": np.array([[cert.gamma]]), "K": anchor.K}
    prog = lmi_overestimate(ctx.bold, ctx.supply, cert.P1, cert.P2, anchor.as_dict())
    core = prog.constraints[-1]
    analysis = lmi_analysis(ctx.bold, ctx.supply, "K", gains=anchor.as_dict()).constraints[-1]
    over = -np.linalg.eigvalsh(core.expr.value(values)).max()
    exact = -np.linalg.eigvalsh(analysis.expr.value(values)).max()
    assert over == pytest.approx(exact, abs=1e-9)


def test_overestimate_solution_satisfies_bilinear_condition(rng):
    from kras.verify import overestimate_soundness_trial

    assert overestimate_soundness_trial(rng) >= -1e-7


def test_supply_rate_validation():
    with pytest.raises(ValueError):
        SupplyRate(J_tilde=np.eye(1), J1=np.eye(1), J2=np.zeros((1, 1)), J3=np.eye(1))
