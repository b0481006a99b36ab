import csv
import io
import json

import numpy as np
import pytest
from scipy.signal import freqresp

from kras.assemble import lmi_analysis
from kras.exceptions import Infeasible, KrasError
from kras.sdp import LmiBlock, SdpProblem, solve
from kras.synth import (
    ControllerGains,
    IterateParams,
    iterate,
    prepare,
    refine_fixed_K,
    refine_fixed_P,
    synth_convex,
)
from kras.system import DelaySystem
from kras.verify import closed_loop, spectral_abscissa


def _scalar(A0, B0=1.0, C0=1.0, BB0=0.0, D1=1.0, D2=0.0, r=0.5):
    system = DelaySystem(n=1, m=1, p=1, q=1, delays=(r,), A=[[[A0]]], B=[[[B0]]], C=[[[C0]]],
                         BB=[[[BB0]]], D1=[[D1]], D2=[[D2]])
    return prepare(system, [{"f": ["1"]}])


def test_convex_sec61(sec61, sec61_convex):
    gains, gamma, _ = sec61_convex
    assert gains.K.shape == (1, 2) and np.all(gains.K < 0)
    assert 0 < gamma < 1.0


def test_convex_gain_is_certified_and_stabilizing(sec61, sec61_convex):
    ctx = sec61[1]
    gains, gamma, _ = sec61_convex
    cert = refine_fixed_K(ctx, gains)
    assert cert.gamma <= gamma * 1.05
    assert spectral_abscissa(closed_loop(ctx.system, gains, ctx.decomps)) < 0


def test_zero_gain_on_unstable_plant(sec61):
    with pytest.raises(Infeasible, match="not exponentially stable"):
        refine_fixed_K(sec61[1], ControllerGains.static(np.zeros((1, 2))))


def test_scalar_unstable_plant_is_stabilized():
    ctx = _scalar(1.0, D1=0.0)
    gains, _, _ = synth_convex(ctx)
    assert 1.0 + gains.K[0, 0] < 0


def test_zero_gain_gamma_bounds_transfer_norm():
    # x' = -x + w, z = x + 0.5 w: peak gain 1.5 at zero frequency
    ctx = _scalar(-1.0, D1=1.0, D2=0.5)
    cert = refine_fixed_K(ctx, ControllerGains.static(np.zeros((1, 1))))
    _, H = freqresp(([1.0], [1.0, 1.0]), np.logspace(-4, 3, 400))
    hinf = np.abs(H + 0.5).max()
    assert hinf * (1 - 1e-6) <= cert.gamma <= hinf * 1.01


def _gamma_with_P_fixed(ctx, k):
    prog = lmi_analysis(ctx.bold, ctx.supply, "K", gains={"K": np.array([[k]])})
    P1, P2 = prog.variables["P1"], prog.variables["P2"]
    pins = [LmiBlock(P1 - np.eye(1), ">", False, "P1>=1"), LmiBlock(P1 - np.eye(1), "<", False, "P1<=1"),
            LmiBlock(P2, ">", False, "P2>=0"), LmiBlock(P2, "<", False, "P2<=0")]
    try:
        return solve(SdpProblem(prog.constraints + pins, prog.gamma), ctx.settings).objective
    except KrasError:
        return np.inf


def test_fixed_P_gain_matches_grid_optimum():
    ctx = _scalar(0.5, BB0=0.3)
    gains, cert = refine_fixed_P(ctx, np.eye(1), np.zeros((1, 1)), gain_reg=0.0)
    grid = np.arange(-6.0, -3.0, 0.05)
    best = grid[int(np.argmin([_gamma_with_P_fixed(ctx, k) for k in grid]))]
    assert gains.K[0, 0] == pytest.approx(best, rel=0.05)
    assert cert.gamma <= _gamma_with_P_fixed(ctx, best) + 1e-6


def test_fixed_P_with_zero_P2_is_well_formed(sec61):
    ctx = sec61[1]
    try:
        gains, _ = refine_fixed_P(ctx, np.eye(2), np.zeros((2, ctx.bold.d * 2)))
        assert np.all(np.isfinite(gains.K))
    except Infeasible:
        pass


def test_alternation_does_not_increase_gamma(sec61, sec61_convex):
    ctx = sec61[1]
    gains = sec61_convex[0]
    cert = refine_fixed_K(ctx, gains)
    for _ in range(3):
        gains, new = refine_fixed_P(ctx, cert.P1, cert.P2, anchor=gains)
        assert new.gamma <= cert.gamma + 1e-6
        cert = refine_fixed_K(ctx, gains)
        assert cert.gamma <= new.gamma + 1e-6


@pytest.mark.parametrize("kwargs", [dict(rho1=0), dict(rho2=-1), dict(eps=0), dict(max_iters=-1)])
def test_iterate_params_validation(kwargs):
    with pytest.raises(ValueError):
        IterateParams(**kwargs)


def test_short_iterate_run_and_reports(sec61):
    log = iterate(sec61[1], IterateParams(max_iters=2, eps=1e-12))
    assert log.n_iterations == 2 and log.is_monotone()
    assert log.gamma == pytest.approx(log.certificate.gamma)
    rows = list(csv.DictReader(io.StringIO(log.to_csv(timings=False))))
    assert [r["iter"] for r in rows] == ["1", "2"] and "seconds" not in rows[0]
    payload = json.loads(log.dumps())
    assert payload["gains"]["mode"] == "static" and len(payload["records"]) == 2


def test_delayed_controller_convex(sec62):
    ctx = sec62[1]
    gains, gamma, _ = synth_convex(ctx)
    assert gains.mode == "delayed" and len(gains.K_list) == 3 and len(gains.Kc_list) == 2
    cert = refine_fixed_K(ctx, gains)
    assert cert.gamma < 0.6
    assert spectral_abscissa(closed_loop(ctx.system, gains, ctx.decomps)) < 0
