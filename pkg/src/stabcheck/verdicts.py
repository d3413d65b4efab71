"""Structured pass/fail/inconclusive results with witnesses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    """Outcome of one sampled check.

    A pass means no violation was found at the sampling resolution used; it
    is a falsification-style result, never a proof.  Failing verdicts carry
    at least one concrete witness.
    """

    check: str
    status: str
    witness: Optional[dict] = None
    tolerance: Optional[float] = None
    samples: Optional[int] = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"invalid verdict status {self.status!r}")
        if self.status == FAIL and self.witness is None:
            raise ValueError("failing verdicts must carry a witness")

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "status": self.status,
            "witness": self.witness,
            "tolerance": self.tolerance,
            "samples": self.samples,
            "detail": self.detail,
        }
