import numpy as np
import pytest

from kras.exceptions import InfeasibleCertificate
from kras.sdp import (
    LmiBlock,
    SdpProblem,
    Variable,
    as_affine,
    bmat,
    frobenius_epigraph,
    read_sdpa,
    solve,
    write_sdpa,
)


def _t_problem():
    t = Variable("t", (1, 1), symmetric=True)
    block = LmiBlock(bmat([[t, np.ones((1, 1))], [np.ones((1, 1)), t]]), ">", strict=False, name="pair")
    return SdpProblem([block], t), t


def test_minimize_t_with_unit_coupling():
    prob, _ = _t_problem()
    sol = solve(prob)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    assert sol.margins["pair"] >= -1e-7


def test_constant_feasibility():
    sol = solve(SdpProblem([LmiBlock(as_affine(np.eye(2)), ">", name="I")]))
    assert sol.status == "optimal" and sol.values == {}


def test_infeasible_problem():
    x = Variable("x", (1, 1), symmetric=True)
    prob = SdpProblem([LmiBlock(x, ">", name="pos"), LmiBlock(x + np.ones((1, 1)), "<", name="neg")])
    with pytest.raises(InfeasibleCertificate):
        solve(prob)


def test_epigraph_at_anchor_is_zero():
    x = Variable("x", (2, 2))
    fix = LmiBlock(bmat([[x[0:1, 0:1] - 1.0]]), ">", strict=False, name="x00")
    t, blk = frobenius_epigraph(x, np.eye(2), 2.0)
    sol = solve(SdpProblem([fix, blk], t))
    assert sol.objective == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(sol["x"], np.eye(2), atol=1e-4)


def test_epigraph_scalar():
    t, blk = frobenius_epigraph(as_affine(np.array([[5.0]])), np.array([[3.0]]))
    assert solve(SdpProblem([blk], t)).objective == pytest.approx(4.0, abs=1e-7)


def test_epigraph_random_matrices(rng):
    X, Y = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    t, blk = frobenius_epigraph(as_affine(X), Y, 0.7)
    sol = solve(SdpProblem([blk], t))
    assert sol.objective == pytest.approx(0.7 * np.sum((X - Y) ** 2), rel=1e-8, abs=1e-8)


def test_epigraph_rejects_nonpositive_weight():
    with pytest.raises(ValueError):
        frobenius_epigraph(as_affine(np.eye(1)), np.eye(1), 0.0)


def test_sdpa_round_trip(tmp_path, sec61):
    from kras.assemble import lmi_convex

    prog = lmi_convex(sec61[1].bold, sec61[1].supply, (5.0,))
    prob = SdpProblem(prog.constraints, prog.objective)
    path = tmp_path / "convex.dat-s"
    write_sdpa(prob, path)
    again = read_sdpa(path)
    (c0, k0), (c1, k1) = prob.objective_vector(), again.objective_vector()
    assert np.array_equal(c0, c1) and k0 == k1
    blocks0, blocks1 = prob.canonical_blocks(), again.canonical_blocks()
    assert len(blocks0) == len(blocks1)
    for (F0, F), (G0, G) in zip(blocks0, blocks1):
        assert np.array_equal(F0, G0) and np.array_equal(F, G)
    write_sdpa(again, tmp_path / "again.dat-s")
    assert (tmp_path / "again.dat-s").read_bytes() == path.read_bytes()
