"""Check records and verification reports shared by all verifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["Check", "Report", "sigma_check", "abs_check", "info_check"]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

# default sigma multiplier for statistical checks; the harness overrides
# this from the config's tolerance_sigmas field
DEFAULT_SIGMAS = 3.0


@dataclass
class Check:
    """One verified quantity: estimate +/- stderr judged against a target."""

    name: str
    estimate: float
    stderr: float
    target: float
    tol: float
    tol_kind: str          # "sigma" | "abs" | "bound-sigma" | "none"
    status: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "tol": self.tol,
            "tol_kind": self.tol_kind,
            "status": self.status,
        }


@dataclass
class Report:
    """Outcome of one verification task."""

    task: str
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks)

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.checks if c.status == FAIL)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "meta": self.meta,
        }


def sigma_check(name: str, estimate: float, target: float, stderr: float,
                sigmas: float | None = None) -> Check:
    """Pass iff |estimate - target| <= sigmas * stderr."""
    if sigmas is None:
        sigmas = DEFAULT_SIGMAS
    gap = abs(estimate - target)
    ok = gap <= sigmas * stderr
    return Check(name, float(estimate), float(stderr), float(target),
                 float(sigmas), "sigma", PASS if ok else FAIL)


def abs_check(name: str, estimate: float, target: float, atol: float) -> Check:
    """Pass iff |estimate - target| <= atol."""
    ok = abs(estimate - target) <= atol
    return Check(name, float(estimate), 0.0, float(target), float(atol),
                 "abs", PASS if ok else FAIL)


def bound_check(name: str, estimate: float, bound: float, stderr: float,
                sigmas: float = 3.0) -> Check:
    """One-sided: pass iff estimate <= bound + sigmas * stderr."""
    ok = estimate <= bound + sigmas * stderr
    return Check(name, float(estimate), float(stderr), float(bound),
                 float(sigmas), "bound-sigma", PASS if ok else FAIL)


def info_check(name: str, estimate: float, stderr: float = 0.0,
               status: str = PASS) -> Check:
    """A reported quantity that carries no pass/fail semantics of its own."""
    return Check(name, float(estimate), float(stderr), float("nan"), 0.0,
                 "none", status)
