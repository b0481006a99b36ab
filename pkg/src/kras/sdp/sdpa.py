"""Sparse SDPA text format export and import.

The file describes ``min c^T x`` subject to ``sum_k x_k F_k - F_0 >= 0``.
Variable names and shapes are stored in ``*`` comment lines so that a
problem read back has the same variable structure.  Numbers are written
with ``repr`` which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import numpy as np

from .affine import AffineExpr, Variable
from .problem import LmiBlock, SdpProblem

__all__ = ["write_sdpa", "read_sdpa"]


def write_sdpa(problem: SdpProblem, path) -> None:
    """Write ``problem`` (with strictness margins folded in) to ``path``."""
    c, c0 = problem.objective_vector()
    blocks = problem.canonical_blocks()
    lines = ["* kras SDPA export"]
    for name, v in problem.variables.items():
        kind = "sym" if v.symmetric else "full"
        lines.append(f"* var {name} {kind} {v.shape[0]} {v.shape[1]}")
    for i, blk in enumerate(problem.constraints):
        lines.append(f"* block {i} {blk.name or '-'}")
    lines.append(f"* objconst {c0!r}")
    lines.append(str(problem.n_params))
    lines.append(str(len(blocks)))
    lines.append(" ".join(str(F0.shape[0]) for F0, _ in blocks))
    lines.append(" ".join(repr(float(v)) for v in c))
    for b, (F0, F) in enumerate(blocks, start=1):
        n = F0.shape[0]
        iu, ju = np.triu_indices(n)
        vals = -F0[iu, ju]
        for i, j, val in zip(iu, ju, vals):
            if val != 0.0:
                lines.append(f"0 {b} {i + 1} {j + 1} {float(val)!r}")
        for k in range(F.shape[2]):
            vals = F[iu, ju, k]
            for i, j, val in zip(iu[vals != 0], ju[vals != 0], vals[vals != 0]):
                lines.append(f"{k + 1} {b} {i + 1} {j + 1} {float(val)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sdpa(path) -> SdpProblem:
    """Read a file written by :func:`write_sdpa` (or plain SDPA sparse format).

    Returns a problem whose constraints are non-strict ``F(x) >= 0`` blocks
    with exactly the stored coefficients.
    """
    var_specs, names, objconst = [], [], 0.0
    data = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line[0] in "*\"":
                parts = line[1:].split()
                if len(parts) == 5 and parts[0] == "var":
                    var_specs.append((parts[1], parts[2] == "sym", int(parts[3]), int(parts[4])))
                elif len(parts) >= 2 and parts[0] == "block":
                    names.append(parts[2] if len(parts) > 2 and parts[2] != "-" else "")
                elif len(parts) == 2 and parts[0] == "objconst":
                    objconst = float(parts[1])
                continue
            data.append(line.replace(",", " ").replace("{", " ").replace("}", " "))
    m = int(data[0].split()[0])
    nblocks = int(data[1].split()[0])
    sizes = [abs(int(s)) for s in data[2].split()][:nblocks]
    c = np.array([float(s) for s in data[3].split()][:m])
    F0 = [np.zeros((n, n)) for n in sizes]
    F = [np.zeros((n, n, m)) for n in sizes]
    for line in data[4:]:
        k, b, i, j, val = line.split()
        k, b, i, j, val = int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(val)
        if k == 0:
            F0[b][i, j] = F0[b][j, i] = -val
        else:
            F[b][i, j, k - 1] = F[b][j, i, k - 1] = val
    if not var_specs:
        var_specs = [(f"x{k + 1}", True, 1, 1) for k in range(m)]
    variables = [Variable(nm, (r, cc), symmetric=sym) for nm, sym, r, cc in var_specs]
    offsets, pos = [], 0
    for v in variables:
        offsets.append((pos, pos + v.size))
        pos += v.size
    if pos != m:
        raise ValueError(f"variable metadata describes {pos} parameters, file has {m}")

    def expr_of(const, coeff):
        coeffs = {v.name: coeff[..., a:b] for v, (a, b) in zip(variables, offsets)}
        return AffineExpr(const, coeffs, {v.name: v for v in variables})

    constraints = []
    for b, n in enumerate(sizes):
        name = names[b] if b < len(names) else ""
        constraints.append(LmiBlock(expr_of(F0[b], F[b]), ">", strict=False, name=name))
    objective = expr_of(np.array([[objconst]]), c.reshape(1, 1, m))
    return SdpProblem(constraints, objective, extra_variables=variables)
