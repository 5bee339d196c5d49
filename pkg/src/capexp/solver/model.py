"""Solver-neutral LP/MILP container and a block-oriented builder."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = -1, 0, 1
_SENSE_CODES = {"<=": LE, "<": LE, "L": LE, "==": EQ, "=": EQ, "E": EQ, ">=": GE, ">": GE, "G": GE}

FEAS_TOL = 1e-6
INT_TOL = 1e-6
DEFAULT_MIP_GAP = 1e-4


class SolverError(RuntimeError):
    """The backend failed numerically or returned an unexpected status."""


class ContractError(RuntimeError):
    """A solver operation was called outside its precondition."""


def sense_code(s) -> int:
    if isinstance(s, (int, np.integer)):
        if s not in (LE, EQ, GE):
            raise ValueError(f"bad sense code {s}")
        return int(s)
    try:
        return _SENSE_CODES[s]
    except KeyError:
        raise ValueError(f"bad sense {s!r}") from None


@dataclass(frozen=True, eq=False)
class LinearModel:
    """``min c @ x + offset`` s.t. ``A x (sense) rhs``, ``lb <= x <= ub``.

    ``var_blocks`` / ``row_blocks`` map a block name to the indices it owns;
    names of single entries are ``block[k]``.
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # int8 codes LE / EQ / GE
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray  # bool mask
    offset: float = 0.0
    var_blocks: Mapping[str, np.ndarray] = field(default_factory=dict)
    row_blocks: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n, m = len(self.c), len(self.rhs)
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        for arr, k in ((self.lb, n), (self.ub, n), (self.integer, n), (self.sense, m)):
            if len(arr) != k:
                raise ValueError("inconsistent model dimensions")
        if np.any(self.lb > self.ub):
            raise ValueError("variable with lb > ub")
        if not np.all(np.isfinite(self.A.data)) or not np.all(np.isfinite(self.c)):
            raise ValueError("non-finite coefficient")
        if np.any(np.isnan(self.rhs)):
            raise ValueError("NaN right-hand side")
        for arr in (self.c, self.rhs, self.lb, self.ub, self.integer, self.sense):
            arr.setflags(write=False)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def is_mip(self) -> bool:
        return bool(self.integer.any())

    def var_index(self, block: str) -> np.ndarray:
        return self.var_blocks[block]

    def row_index(self, block: str) -> np.ndarray:
        return self.row_blocks[block]

    def var_names(self) -> list[str]:
        return _names(self.var_blocks, self.num_vars, "x")

    def row_names(self) -> list[str]:
        return _names(self.row_blocks, self.num_rows, "r")

    def objective(self, x) -> float:
        return float(self.c @ np.asarray(x, float) + self.offset)

    def violation(self, x) -> float:
        """Largest bound or row violation of ``x``."""
        x = np.asarray(x, float)
        act = self.A @ x
        viol = np.zeros(self.num_rows)
        viol[self.sense == LE] = (act - self.rhs)[self.sense == LE]
        viol[self.sense == GE] = (self.rhs - act)[self.sense == GE]
        viol[self.sense == EQ] = np.abs(act - self.rhs)[self.sense == EQ]
        worst = max(viol.max(initial=0.0), (self.lb - x).max(initial=0.0), (x - self.ub).max(initial=0.0))
        return float(max(worst, 0.0))

    def relaxed(self) -> "LinearModel":
        return self.replace(integer=np.zeros(self.num_vars, bool))

    def replace(self, **kw) -> "LinearModel":
        fields = dict(c=self.c, A=self.A, sense=self.sense, rhs=self.rhs, lb=self.lb, ub=self.ub,
                      integer=self.integer, offset=self.offset, var_blocks=self.var_blocks,
                      row_blocks=self.row_blocks)
        fields.update(kw)
        for k in ("c", "rhs", "lb", "ub"):
            fields[k] = np.array(fields[k], dtype=float)
        fields["integer"] = np.array(fields["integer"], dtype=bool)
        fields["sense"] = np.array(fields["sense"], dtype=np.int8)
        return LinearModel(**fields)

    def with_bounds(self, lb=None, ub=None) -> "LinearModel":
        return self.replace(lb=self.lb if lb is None else lb, ub=self.ub if ub is None else ub)


def _names(blocks, n, prefix):
    out = [f"{prefix}{i}" for i in range(n)]
    for name, idx in blocks.items():
        idx = np.asarray(idx)
        for k, i in enumerate(idx.ravel()):
            out[int(i)] = f"{name}[{k}]"
    return out


class ModelBuilder:
    """Accumulates variable and row blocks, then freezes them into a :class:`LinearModel`."""

    def __init__(self):
        self._c: list[np.ndarray] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self.num_vars = 0
        self.num_rows = 0
        self.offset = 0.0
        self.var_blocks: dict[str, np.ndarray] = {}
        self.row_blocks: dict[str, np.ndarray] = {}

    def add_vars(self, shape, *, lb=0.0, ub=np.inf, cost=0.0, integer=False, name: str | None = None) -> np.ndarray:
        """Add a block of variables; returns their indices reshaped to ``shape``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=int))
        idx = np.arange(self.num_vars, self.num_vars + n).reshape(shape)
        self._c.append(np.broadcast_to(np.asarray(cost, float), shape).ravel().copy())
        self._lb.append(np.broadcast_to(np.asarray(lb, float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), shape).ravel().copy())
        self._int.append(np.broadcast_to(np.asarray(integer, bool), shape).ravel().copy())
        self.num_vars += n
        if name:
            self._register(self.var_blocks, name, idx)
        return idx

    def add_rows(self, count: int, rows, cols, vals, sense, rhs, name: str | None = None) -> np.ndarray:
        """Add ``count`` rows given COO triplets with row numbers local to the block."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape).ravel()
        if rows.size and (rows.min() < 0 or rows.max() >= count):
            raise ValueError("local row index out of range")
        if cols.size and (cols.min() < 0 or cols.max() >= self.num_vars):
            raise ValueError("column index out of range")
        s = np.asarray(sense)
        codes = np.full(count, sense_code(s.item()), np.int8) if s.ndim == 0 else np.array([sense_code(v) for v in s], np.int8)
        self._rows.append(rows + self.num_rows)
        self._cols.append(cols)
        self._vals.append(vals.copy())
        self._sense.append(codes)
        self._rhs.append(np.broadcast_to(np.asarray(rhs, float), (count,)).copy())
        idx = np.arange(self.num_rows, self.num_rows + count)
        self.num_rows += count
        if name:
            self._register(self.row_blocks, name, idx)
        return idx

    def add_row(self, cols, vals, sense, rhs, name: str | None = None) -> int:
        cols = np.asarray(cols).ravel()
        return int(self.add_rows(1, np.zeros(cols.size, int), cols, vals, sense, rhs, name)[0])

    def set_cost(self, idx, cost) -> None:
        c = np.concatenate(self._c) if self._c else np.zeros(0)
        c[np.asarray(idx)] = cost
        self._c = [c]

    @staticmethod
    def _register(blocks, name, idx):
        if name in blocks:
            blocks[name] = np.concatenate([blocks[name].ravel(), idx.ravel()])
        else:
            blocks[name] = idx

    def build(self) -> LinearModel:
        n, m = self.num_vars, self.num_rows
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)
        A = sp.csr_matrix((cat(self._vals, float), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
                          shape=(m, n))
        A.sum_duplicates()
        return LinearModel(cat(self._c, float), A, cat(self._sense, np.int8), cat(self._rhs, float),
                           cat(self._lb, float), cat(self._ub, float), cat(self._int, bool), float(self.offset),
                           dict(self.var_blocks), dict(self.row_blocks))


def write_lp(model: LinearModel, path) -> None:
    """Write ``model`` in CPLEX LP text format (debugging aid)."""
    names = [_lp_name(s) for s in model.var_names()]
    rnames = [_lp_name(s) for s in model.row_names()]

    def expr(idx, vals):
        terms = [f"{'-' if v < 0 else '+'} {abs(v):.12g} {names[j]}" for j, v in zip(idx, vals) if v != 0]
        return " ".join(terms) if terms else "0 " + (names[0] if names else "")

    nz = np.flatnonzero(model.c)
    lines = ["\\ written by capexp", "Minimize", f" obj: {expr(nz, model.c[nz])}"]
    if model.offset:
        lines[-1] += f" + {model.offset:.12g}"
    lines.append("Subject To")
    ops = {LE: "<=", EQ: "=", GE: ">="}
    A = model.A.tocsr()
    for i in range(model.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        lines.append(f" {rnames[i]}: {expr(A.indices[lo:hi], A.data[lo:hi])} {ops[int(model.sense[i])]} {model.rhs[i]:.12g}")
    lines.append("Bounds")
    for j in range(model.num_vars):
        lo, hi = model.lb[j], model.ub[j]
        lo_s = "-inf" if np.isneginf(lo) else f"{lo:.12g}"
        hi_s = "+inf" if np.isposinf(hi) else f"{hi:.12g}"
        lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    ints = [names[j] for j in np.flatnonzero(model.integer)]
    if ints:
        lines.append("General")
        lines.extend(f" {s}" for s in ints)
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _lp_name(s: str) -> str:
    return s.replace("[", "(").replace("]", ")").replace(",", "_").replace(" ", "")
