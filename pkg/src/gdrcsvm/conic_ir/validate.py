"""Solver-independent feasibility check of a primal point."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .program import CONSTRAINT_KINDS, ConicProgram
from .solve import ConicSolution


@dataclass(frozen=True)
class Violation:
    kind: str
    label: str
    index: int
    margin: float


@dataclass(frozen=True)
class ValidationReport:
    """Worst signed margin per constraint kind (negative means violated).

    ``entries`` holds one :class:`Violation` record per constraint, so the
    provenance label of any offending row can be recovered.
    """

    tol: float
    worst: Mapping[str, Violation]
    entries: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return all(v.margin >= -self.tol for v in self.worst.values())

    @property
    def min_psd_eigenvalue(self) -> float:
        v = self.worst.get("psd")
        return v.margin if v is not None else float("inf")

    @property
    def min_margin(self) -> float:
        margins = [v.margin for k, v in self.worst.items() if k != "eq"]
        return min(margins) if margins else float("inf")

    @property
    def max_eq_residual(self) -> float:
        v = self.worst.get("eq")
        return -v.margin if v is not None else 0.0

    def failures(self) -> list[Violation]:
        return [v for v in self.entries if v.margin < -self.tol]

    def summary(self) -> str:
        lines = [f"validation {'passed' if self.ok else 'FAILED'} at tol={self.tol:g}"]
        for kind in CONSTRAINT_KINDS:
            v = self.worst.get(kind)
            if v is not None:
                lines.append(f"  {kind:8s} worst margin {v.margin: .3e}  [{v.label}]")
        return "\n".join(lines)


def validate(
    program: ConicProgram,
    solution: Union[ConicSolution, Mapping[str, np.ndarray]],
    tol: float = 1e-6,
) -> ValidationReport:
    values = solution.values if isinstance(solution, ConicSolution) else solution
    missing = [b for b in program.blocks if b not in values]
    if missing:
        raise KeyError(f"solution lacks values for blocks {missing}")
    entries = []
    worst: dict[str, Violation] = {}
    for i, con in enumerate(program.constraints):
        v = Violation(con.kind, con.label, i, con.margin(values))
        entries.append(v)
        if con.kind not in worst or v.margin < worst[con.kind].margin:
            worst[con.kind] = v
    return ValidationReport(tol=tol, worst=worst, entries=tuple(entries))
