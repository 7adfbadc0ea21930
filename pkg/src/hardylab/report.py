"""Two-sided identity checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

REL_FLOOR = 1e-30


@dataclass
class IdentityReport:
    check: str
    lhs: float
    rhs: float
    h: float
    extra: dict = field(default_factory=dict)

    @property
    def abs_residual(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_residual(self) -> float:
        return self.abs_residual / max(abs(self.lhs), abs(self.rhs), REL_FLOOR)

    def passed(self, rel_tol: float) -> bool:
        return self.rel_residual <= rel_tol

    def to_dict(self) -> dict:
        d = asdict(self)
        d["abs_residual"] = self.abs_residual
        d["rel_residual"] = self.rel_residual
        return d
