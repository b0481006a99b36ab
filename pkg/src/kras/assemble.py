"""Block matrices and matrix inequalities of the synthesis conditions.

The augmented closed-loop vector is
``theta = [x(t); x(t-r_1); ...; x(t-r_nu); xi; e; w]`` of size
``beta n + q`` with ``beta = 1 + nu + kappa``, where ``xi`` collects the
projections of the state history on the normalized ``h`` bases and ``e``
the projections on the normalized approximation residuals.

Three families of inequalities are produced:

* :func:`lmi_analysis` -- the Krasovskii-functional condition with either
  the gains or ``(P1, P2)`` fixed (otherwise the condition is bilinear);
* :func:`lmi_convex` -- the convexified condition obtained with the
  projection lemma and the slack ``W = X^-1``;
* :func:`lmi_overestimate` -- the psd-convex overestimate used by the
  proximal iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .eda import EdaDecomposition, build_basis, decompose_matrix, derive_M
from .exceptions import AlphaZero, DimensionMismatch, InvalidZ
from .quad import interval_data
from .sdp import AffineExpr, LmiBlock, Variable, blkdiag, bmat, kron, sy
from .system import DelaySystem, SupplyRate

__all__ = [
    "BoldSet",
    "LmiProgram",
    "decompose_system",
    "bold_matrices",
    "gain_variables",
    "gain_terms",
    "lmi_analysis",
    "lmi_convex",
    "lmi_overestimate",
    "supply_blocks",
    "unknown_count",
]


def decompose_system(system: DelaySystem, bases) -> list:
    """Build bases, moments and kernel coefficients for every interval.

    Parameters
    ----------
    system : DelaySystem
    bases : list of dict or IntervalBasis
        Per interval either a ready :class:`~kras.eda.IntervalBasis` or a
        dict with keys ``f``, ``varphi``, ``phi``.

    Returns
    -------
    list of EdaDecomposition
    """
    if len(bases) != system.nu:
        raise DimensionMismatch(f"{len(bases)} bases given for {system.nu} intervals")
    out = []
    for i, spec in enumerate(bases, start=1):
        if isinstance(spec, dict):
            basis = build_basis(spec.get("f", ()), spec.get("varphi", ()), spec.get("phi", ()),
                                system.interval(i), index=i)
        else:
            basis = spec
            if tuple(basis.interval) != system.interval(i):
                raise DimensionMismatch(f"basis {i} is defined on {basis.interval}, expected {system.interval(i)}")
        grams = interval_data(basis)
        M = derive_M(basis, grams)
        k = system.kernels[i - 1]
        out.append(EdaDecomposition(
            basis=basis, grams=grams, M=M,
            A_hat=decompose_matrix(k["A"], basis, system.n, grams),
            B_hat=decompose_matrix(k["B"], basis, system.p, grams),
            C_hat=decompose_matrix(k["C"], basis, system.n, grams),
            BB_hat=decompose_matrix(k["BB"], basis, system.p, grams),
        ))
    return out


@dataclass
class BoldSet:
    """Constant block matrices of the augmented closed-loop representation.

    Attributes
    ----------
    A, B1, C, B2 : ndarray
        State and output maps of ``theta`` and of the lifted input.
    M : ndarray
        ``d x (1 + nu + varkappa)`` derivative map of the normalized
        projections on ``f``.
    I_hat : ndarray
        ``dn x varkappa n`` map from ``xi`` to the ``f`` projections.
    Lam : ndarray
        ``diag(interval length * I_n)``.
    S : ndarray
        Map from ``theta`` to ``eta = [x; f projections]``.
    """

    system: DelaySystem
    decomps: list
    A: np.ndarray
    B1: np.ndarray
    C: np.ndarray
    B2: np.ndarray
    M: np.ndarray
    I_hat: np.ndarray
    Lam: np.ndarray
    S: np.ndarray
    ds: list = field(default_factory=list)
    varkappas: list = field(default_factory=list)
    mus: list = field(default_factory=list)
    kappas: list = field(default_factory=list)

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        return self.system.m

    @property
    def p(self):
        return self.system.p

    @property
    def q(self):
        return self.system.q

    @property
    def nu(self):
        return self.system.nu

    @property
    def mode(self):
        return self.system.mode

    @property
    def d(self):
        return sum(self.ds)

    @property
    def varkappa(self):
        return sum(self.varkappas)

    @property
    def mu(self):
        return sum(self.mus)

    @property
    def kappa(self):
        return sum(self.kappas)

    @property
    def beta(self):
        return 1 + self.nu + self.kappa

    @property
    def ell(self):
        """Size ``beta n + q + m`` of the core inequality."""
        return self.beta * self.n + self.q + self.m

    @property
    def T(self):
        return [dc.grams.T for dc in self.decomps]

    @property
    def T_tilde(self):
        return [dc.grams.T_tilde for dc in self.decomps]

    def Xi(self, Qs, Rs, J3) -> AffineExpr:
        """Variable-dependent diagonal block of the core inequality."""
        n = self.n
        r = self.system.r
        first = [Qs[i] + (r[i + 1] - r[i]) * Rs[i] for i in range(self.nu)]
        first.append(AffineExpr(np.zeros((n + self.kappa * n + self.q,) * 2)))
        second = [AffineExpr(np.zeros((n, n)))] + list(Qs)
        second += [kron(np.eye(k), Rs[i]) for i, k in enumerate(self.varkappas)]
        second += [kron(np.eye(k), Rs[i]) for i, k in enumerate(self.mus)]
        second.append(J3)
        return blkdiag(*first) - blkdiag(*second)


def bold_matrices(system: DelaySystem, decomps) -> BoldSet:
    """Assemble the constant block matrices.

    Parameters
    ----------
    system : DelaySystem
    decomps : list of EdaDecomposition
        One per interval, from :func:`decompose_system`.
    """
    n, p, nu = system.n, system.p, system.nu
    if len(decomps) != nu:
        raise DimensionMismatch(f"{len(decomps)} decompositions for {nu} intervals")
    In, Ip = np.eye(n), np.eye(p)
    Ts = [dc.grams.T for dc in decomps]
    Tts = [dc.grams.T_tilde for dc in decomps]

    def row(pointwise, hats, I, tail):
        blocks = list(pointwise)
        blocks += [h @ np.kron(T, I) for h, T in zip(hats, Ts)]
        blocks += [h @ np.kron(Tt, I) for h, Tt in zip(hats, Tts)]
        blocks.append(tail)
        return np.hstack(blocks)

    A = row(system.A, [dc.A_hat for dc in decomps], In, system.D1)
    B1 = row(system.B, [dc.B_hat for dc in decomps], Ip, np.zeros((n, system.q)))
    C = row(system.C, [dc.C_hat for dc in decomps], In, system.D2)
    B2 = row(system.BB, [dc.BB_hat for dc in decomps], Ip, np.zeros((system.m, system.q)))

    ds = [dc.basis.d for dc in decomps]
    vks = [dc.basis.varkappa for dc in decomps]
    mus = [dc.basis.mu for dc in decomps]
    kps = [dc.basis.kappa for dc in decomps]
    d, vk = sum(ds), sum(vks)
    r = system.r
    Mplus = np.zeros((d, nu + 1 + vk))
    Mminus = np.zeros((d, nu + 1 + vk))
    row0 = 0
    col0 = nu + 1
    for i, dc in enumerate(decomps):
        g = dc.grams
        Fi = g.sqrt_F_inv
        fa = dc.basis.eval_f(np.array([-r[i]]))[:, 0]
        fb = dc.basis.eval_f(np.array([-r[i + 1]]))[:, 0]
        Mplus[row0:row0 + ds[i], i] = Fi @ fa
        Mminus[row0:row0 + ds[i], i + 1] = Fi @ fb
        Mminus[row0:row0 + ds[i], col0:col0 + vks[i]] = Fi @ dc.M @ g.sqrt_H
        row0 += ds[i]
        col0 += vks[i]
    Mbold = Mplus - Mminus
    Ihat_small = block_diag(*[dc.grams.sqrt_F_inv @ np.hstack([np.zeros((dc.basis.d, dc.basis.delta)),
                                                               np.eye(dc.basis.d)]) @ dc.grams.sqrt_H
                              for dc in decomps])
    I_hat = np.kron(Ihat_small, In)
    Lam = block_diag(*[(r[i + 1] - r[i]) * In for i in range(nu)])
    beta = 1 + nu + sum(kps)
    mu = sum(mus)
    S = np.zeros((n + d * n, beta * n + system.q))
    S[:n, :n] = In
    S[n:, (1 + nu) * n:(1 + nu + vk) * n] = I_hat
    bold = BoldSet(system, list(decomps), A, B1, C, B2, Mbold, I_hat, Lam, S, ds, vks, mus, kps)
    expect = beta * n + system.q
    for name, mat, cols in (("A", A, expect), ("C", C, expect), ("B1", B1, beta * p + system.q),
                            ("B2", B2, beta * p + system.q)):
        if mat.shape[1] != cols:
            raise DimensionMismatch(f"block {name} has {mat.shape[1]} columns, expected {cols}")
    assert mu * n + vk * n + (1 + nu) * n == beta * n
    return bold


# ---------------------------------------------------------------------------
# gains and supply rate as affine expressions

def gain_variables(bold: BoldSet, prefix: str = "K") -> dict:
    """Decision variables for the controller gains.

    Static mode: ``{prefix: p x n}``.  Delayed mode: ``{prefix0..prefix_nu}``
    (``p x n``) and ``{prefix + "c1"..}`` (``p x kappa_i n``).
    """
    p, n = bold.p, bold.n
    if bold.mode == "static":
        return {prefix: Variable(prefix, (p, n))}
    out = {f"{prefix}{i}": Variable(f"{prefix}{i}", (p, n)) for i in range(bold.nu + 1)}
    for i, k in enumerate(bold.kappas, start=1):
        out[f"{prefix}c{i}"] = Variable(f"{prefix}c{i}", (p, k * n))
    return out


def _bold_K(bold: BoldSet, gains: dict, prefix: str) -> AffineExpr:
    """Delayed-mode row ``[K_0..K_nu, Kc_i (T_i kron I), Kc_i (T~_i kron I), 0]``."""
    n = bold.n
    blocks = [gains[f"{prefix}{i}"] for i in range(bold.nu + 1)]
    blocks += [gains[f"{prefix}c{i}"] @ np.kron(T, np.eye(n)) for i, T in enumerate(bold.T, start=1)]
    blocks += [gains[f"{prefix}c{i}"] @ np.kron(Tt, np.eye(n)) for i, Tt in enumerate(bold.T_tilde, start=1)]
    blocks.append(np.zeros((bold.p, bold.q)))
    return bmat([blocks])


def gain_terms(bold: BoldSet, gains: dict, prefix: str = "K"):
    """Contributions of the gains to the state and output rows.

    Returns ``(GX, GZ)`` with ``Omega = A + GX`` and ``Sigma = C + GZ``.
    ``gains`` maps names to constants or affine expressions.
    """
    gains = {k: v if isinstance(v, AffineExpr) else AffineExpr(v) for k, v in gains.items()}
    if bold.mode == "static":
        lift = blkdiag(kron(np.eye(bold.beta), gains[prefix]), np.zeros((bold.q, bold.q)))
        return bold.B1 @ lift, bold.B2 @ lift
    Kb = _bold_K(bold, gains, prefix)
    return bold.system.B[0] @ Kb, bold.system.BB[0] @ Kb


def supply_blocks(supply: SupplyRate, gamma=None):
    """``(Jt, J1, J2, J3)`` as affine expressions; ``gamma`` is a 1x1 expression for L2 gain."""
    if supply.has_gamma:
        m, q = supply.m, supply.q
        return (AffineExpr(np.eye(m)), kron(-np.eye(m), gamma), AffineExpr(np.zeros((m, q))),
                kron(np.eye(q), gamma))
    return tuple(AffineExpr(x) for x in (supply.J_tilde, supply.J1, supply.J2, supply.J3))


# ---------------------------------------------------------------------------
# inequality builders

@dataclass
class LmiProgram:
    """Constraints plus declared variables of one synthesis/analysis step."""

    constraints: list
    variables: dict
    gamma: AffineExpr | None = None

    @property
    def objective(self):
        return self.gamma


def _cert_variables(bold: BoldSet, suffix: str = ""):
    n, d = bold.n, bold.d
    P1 = Variable("P1" + suffix, (n, n), symmetric=True)
    P2 = Variable("P2" + suffix, (n, d * n))
    P3 = Variable("P3" + suffix, (d * n, d * n), symmetric=True)
    Qs = [Variable(f"Q{i}{suffix}", (n, n), symmetric=True) for i in range(1, bold.nu + 1)]
    Rs = [Variable(f"R{i}{suffix}", (n, n), symmetric=True) for i in range(1, bold.nu + 1)]
    return P1, P2, P3, Qs, Rs


def _bold_P(bold: BoldSet, P1, P2) -> AffineExpr:
    n = bold.n
    tail = bold.mu * n + bold.q + bold.m
    return bmat([[P1, np.zeros((n, bold.nu * n)), as_expr(P2) @ bold.I_hat, np.zeros((n, tail))]])


def as_expr(x):
    return x if isinstance(x, AffineExpr) else AffineExpr(x)


def _Phi(bold: BoldSet, P2, P3, Qs, Rs, Sigma, J) -> AffineExpr:
    Jt, J1, J2, J3 = J
    n, d, m, q = bold.n, bold.d, bold.m, bold.q
    tail = bold.mu * n + q + m
    L = bmat([[as_expr(P2)],
              [np.zeros((bold.nu * n, d * n))],
              [bold.I_hat.T @ as_expr(P3)],
              [np.zeros((tail, d * n))]])
    Rm = np.hstack([np.kron(bold.M, np.eye(n)), np.zeros((d * n, tail))])
    U = bmat([[np.zeros((bold.beta * n, m))], [-J2.T], [Jt]])
    V = bmat([[Sigma, np.zeros((m, m))]])
    return sy(L @ Rm + U @ V) + blkdiag(bold.Xi(Qs, Rs, J3), J1)


def _positivity(bold: BoldSet, P1, P2, P3, Qs, name="P-positivity"):
    n = bold.n
    aug = blkdiag(np.zeros((n, n)), *[kron(np.eye(di), Qs[i]) for i, di in enumerate(bold.ds)])
    return LmiBlock(bmat([[P1, P2], [as_expr(P2).T, P3]]) + aug, ">", name=name)


def _qr_blocks(Qs, Rs):
    out = [LmiBlock(Q, ">", name=f"{Q.name}>0") for Q in Qs]
    out += [LmiBlock(R, ">", name=f"{R.name}>0") for R in Rs]
    return out


def _gamma_var(supply: SupplyRate):
    return Variable("gamma", (1, 1), symmetric=True) if supply.has_gamma else None


def lmi_analysis(bold: BoldSet, supply: SupplyRate, fixing: str = "K", gains: dict | None = None,
                 P1=None, P2=None) -> LmiProgram:
    """Krasovskii-functional condition with part of the unknowns fixed.

    Parameters
    ----------
    bold : BoldSet
    supply : SupplyRate
    fixing : {"K", "P", "free"}
        ``"K"`` fixes the gains (``gains`` required), ``"P"`` fixes
        ``(P1, P2)``; ``"free"`` keeps everything variable, which is
        bilinear and raises :class:`~kras.exceptions.BilinearityError`.
    gains : dict, optional
        Gain values keyed like :func:`gain_variables` (``K`` or
        ``K0..``, ``Kc1..``).
    P1, P2 : ndarray, optional
        Fixed values when ``fixing == "P"``.

    Returns
    -------
    LmiProgram
    """
    gamma = _gamma_var(supply)
    J = supply_blocks(supply, gamma)
    vP1, vP2, P3, Qs, Rs = _cert_variables(bold)
    variables = {"P3": P3, **{Q.name: Q for Q in Qs}, **{R.name: R for R in Rs}}
    if fixing == "K":
        if gains is None:
            raise ValueError("gains are required when fixing='K'")
        P1e, P2e = vP1, vP2
        variables.update(P1=vP1, P2=vP2)
        G = gains
    elif fixing == "P":
        if P1 is None or P2 is None:
            raise ValueError("P1 and P2 are required when fixing='P'")
        P1e, P2e = AffineExpr(P1), AffineExpr(P2)
        G = gain_variables(bold)
        variables.update(G)
    elif fixing == "free":
        P1e, P2e = vP1, vP2
        G = gain_variables(bold)
        variables.update(P1=vP1, P2=vP2, **G)
    else:
        raise ValueError(f"unknown fixing {fixing!r}")
    if gamma is not None:
        variables["gamma"] = gamma
    GX, GZ = gain_terms(bold, G)
    Omega = bold.A + GX
    Sigma = bold.C + GZ
    Pb = _bold_P(bold, P1e, P2e)
    Pi = bmat([[Omega, np.zeros((bold.n, bold.m))]])
    core = sy(Pb.T @ Pi) + _Phi(bold, P2e, P3, Qs, Rs, Sigma, J)
    cons = [_positivity(bold, P1e, P2e, P3, Qs)] + _qr_blocks(Qs, Rs)
    cons.append(LmiBlock(core, "<", name="dissipation"))
    return LmiProgram(cons, variables, gamma)


def lmi_convex(bold: BoldSet, supply: SupplyRate, alpha) -> LmiProgram:
    """Convexified synthesis condition in the variables ``X, P'``, ``V``.

    Parameters
    ----------
    alpha : sequence of float
        ``beta`` relaxation scalars (shorter sequences are zero padded);
        ``alpha[0]`` must be nonzero.

    Returns
    -------
    LmiProgram
        Variables include ``X`` and the gain numerators ``V`` (or ``V0..``,
        ``Vc1..``); gains are recovered as ``V X^-1``.
    """
    alpha = np.zeros(bold.beta) if alpha is None else np.asarray(alpha, dtype=float).ravel()
    if alpha.size > bold.beta:
        raise DimensionMismatch(f"alpha has {alpha.size} entries, expected at most {bold.beta}")
    alpha = np.concatenate([alpha, np.zeros(bold.beta - alpha.size)])
    if alpha[0] == 0.0:
        raise AlphaZero("the first relaxation scalar must be nonzero")
    n, m, q = bold.n, bold.m, bold.q
    gamma = _gamma_var(supply)
    J = supply_blocks(supply, gamma)
    X = Variable("X", (n, n), symmetric=True)
    P1, P2, P3, Qs, Rs = _cert_variables(bold)
    V = gain_variables(bold, prefix="V")
    lift = blkdiag(kron(np.eye(bold.beta), X), np.eye(q))
    GX, GZ = gain_terms(bold, V, prefix="V")
    Pi = bmat([[bold.A @ lift + GX, np.zeros((n, m))]])
    Sigma = bold.C @ lift + GZ
    Pb = _bold_P(bold, P1, P2)
    Phi = _Phi(bold, P2, P3, Qs, Rs, Sigma, J)
    left = np.vstack([np.eye(n), np.kron(alpha.reshape(-1, 1), np.eye(n)), np.zeros((q + m, n))])
    core = sy(left @ bmat([[-1.0 * X, Pi]])) + bmat([[np.zeros((n, n)), Pb], [Pb.T, Phi]])
    cons = [_positivity(bold, P1, P2, P3, Qs)] + _qr_blocks(Qs, Rs)
    cons.append(LmiBlock(core, "<", name="convex-dissipation"))
    variables = {"X": X, "P1": P1, "P2": P2, "P3": P3, **{Q.name: Q for Q in Qs}, **{R.name: R for R in Rs}, **V}
    if gamma is not None:
        variables["gamma"] = gamma
    return LmiProgram(cons, variables, gamma)


def lmi_overestimate(bold: BoldSet, supply: SupplyRate, P1_anchor, P2_anchor, gains_anchor: dict,
                     Z=None) -> LmiProgram:
    """Psd-convex overestimate of the bilinear condition around an anchor.

    A feasible point of the returned program satisfies the bilinear
    condition of :func:`lmi_analysis`.  At the anchor itself the
    overestimate is tight.

    Parameters
    ----------
    P1_anchor, P2_anchor : ndarray
    gains_anchor : dict
        Anchor gains keyed like :func:`gain_variables`.
    Z : ndarray, optional
        Weight with ``0 < Z < I``; defaults to ``I/2``.
    """
    n, m = bold.n, bold.m
    Z = 0.5 * np.eye(n) if Z is None else np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape == (1, 1) and n > 1:
        Z = float(Z[0, 0]) * np.eye(n)
    if Z.shape != (n, n):
        raise DimensionMismatch(f"Z must be {n}x{n}")
    Zs = 0.5 * (Z + Z.T)
    lam = np.linalg.eigvalsh(Zs)
    if lam.min() <= 0 or lam.max() >= 1:
        raise InvalidZ(f"Z must satisfy 0 < Z < I (eigenvalues in [{lam.min():.3g}, {lam.max():.3g}])")
    gamma = _gamma_var(supply)
    J = supply_blocks(supply, gamma)
    P1, P2, P3, Qs, Rs = _cert_variables(bold)
    G = gain_variables(bold)
    GX, GZ = gain_terms(bold, G)
    GXa, _ = gain_terms(bold, gains_anchor)
    Sigma = bold.C + GZ
    Pb = _bold_P(bold, P1, P2)
    Pt = _bold_P(bold, P1_anchor, P2_anchor).const
    N = bmat([[GX, np.zeros((n, m))]])
    Nt = np.hstack([GXa.const, np.zeros((n, m))])
    T = sy(Pb.T @ np.hstack([bold.A, np.zeros((n, m))])) + _Phi(bold, P2, P3, Qs, Rs, Sigma, J)
    top = T + sy(Pt.T @ N + Pb.T @ Nt - Pt.T @ Nt)
    dP = Pb - Pt
    dN = N - Nt
    core = bmat([[top, dP.T, dN.T],
                 [dP, -Zs, np.zeros((n, n))],
                 [dN, np.zeros((n, n)), Zs - np.eye(n)]])
    cons = [_positivity(bold, P1, P2, P3, Qs)] + _qr_blocks(Qs, Rs)
    cons.append(LmiBlock(core, "<", name="overestimate"))
    variables = {"P1": P1, "P2": P2, "P3": P3, **{Q.name: Q for Q in Qs}, **{R.name: R for R in Rs}, **G}
    if gamma is not None:
        variables["gamma"] = gamma
    return LmiProgram(cons, variables, gamma)


def unknown_count(bold: BoldSet, include_gamma: bool = False) -> int:
    """Number of scalar unknowns of the bilinear condition."""
    n, d, nu, p = bold.n, bold.d, bold.nu, bold.p
    sym = lambda k: k * (k + 1) // 2  # noqa: E731
    count = sym(n) + d * n * n + sym(d * n) + 2 * nu * sym(n)
    if bold.mode == "static":
        count += p * n
    else:
        count += (nu + 1) * p * n + sum(p * k * n for k in bold.kappas)
    return count + (1 if include_gamma else 0)
