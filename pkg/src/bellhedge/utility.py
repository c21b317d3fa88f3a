"""OCE monetary utilities.

An OCE utility turns a concave, normalised utility function ``u`` into the
monetary utility ``U[X] = sup_y E[u(X + y)] - y``.  The sup is a 1-d concave
maximisation; it is solved row-wise by the kernels in :mod:`bellhedge.kernels`.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from . import kernels
from .rng import keyed_rng

FAMILIES = (
    "expectation",
    "worst_case",
    "cvar",
    "entropy",
    "truncated_entropy",
    "vicky",
    "normalized_quadratic",
)
_CODES = {name: code for code, name in enumerate(FAMILIES)}

# families whose u is not differentiable at 0 (or not pointwise at all)
_NONSMOOTH = {"worst_case", "cvar"}


class OCEError(ArithmeticError):
    """The certainty-equivalent optimisation failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class OCERangeError(OCEError):
    pass


@dataclass(frozen=True)
class UtilityFamily:
    kind: str
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(f"unknown utility family {self.kind!r}; expected one of {FAMILIES}")
        if not (self.lam > 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"risk aversion lambda must be positive and finite, got {self.lam}")
        if self.kind in ("worst_case", "expectation"):
            return
        u0 = u_eval(self, 0.0)
        if abs(u0) > 1e-9:
            raise ValueError(f"{self.kind}: u(0) = {u0} is not normalised")
        if self.kind not in _NONSMOOTH:
            h = 1e-6
            slope = (u_eval(self, h) - u_eval(self, -h)) / (2 * h)
            if abs(slope - 1.0) > 1e-9:
                raise ValueError(f"{self.kind}: u'(0) = {slope} is not normalised")

    @property
    def code(self):
        return _CODES[self.kind]

    @property
    def coherent(self):
        return self.kind in ("expectation", "worst_case", "cvar")

    @property
    def time_consistent(self):
        return self.kind in ("expectation", "entropy")

    def u(self, x):
        if self.kind == "worst_case":
            raise ValueError("worst_case has no pointwise utility; it is a distribution-level minimum")
        return kernels._kernels_py.u_vec(self.code, self.lam, x)

    def du(self, x):
        if self.kind == "worst_case":
            raise ValueError("worst_case has no pointwise utility; it is a distribution-level minimum")
        return kernels._kernels_py.du_vec(self.code, self.lam, x)

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam}


@dataclass(frozen=True)
class EmpiricalDistribution:
    outcomes: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.outcomes, dtype=float).ravel()
        p = np.asarray(self.probabilities, dtype=float).ravel()
        if x.shape != p.shape or x.size == 0:
            raise ValueError("outcomes and probabilities must be non-empty and of equal length")
        if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must be non-negative and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "outcomes", x)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def uniform(cls, outcomes):
        x = np.asarray(outcomes, dtype=float).ravel()
        return cls(x, np.full(x.size, 1.0 / x.size))

    def shifted(self, c):
        return EmpiricalDistribution(self.outcomes + c, self.probabilities)

    def scaled(self, n):
        return EmpiricalDistribution(self.outcomes * n, self.probabilities)

    def mean(self):
        return float(self.probabilities @ self.outcomes)


def u_eval(fam: UtilityFamily, x: float) -> float:
    """Pointwise utility ``u(x)``."""
    return float(fam.u(np.asarray(x, dtype=float)))


def oce_batch(fam: UtilityFamily, outcomes, probs, closed_form=False, backend=None):
    """OCE values over the last axis of ``outcomes``/``probs``.

    ``probs`` broadcasts against ``outcomes``.  Returns ``(values, ystar)``
    shaped like the leading axes.  With ``closed_form`` the entropy family is
    evaluated through its log-moment formula instead of the y-search.
    """
    x = np.asarray(outcomes, dtype=float)
    p = np.broadcast_to(np.asarray(probs, dtype=float), x.shape)
    lead = x.shape[:-1]
    rows_x = x.reshape(-1, x.shape[-1])
    rows_p = p.reshape(-1, x.shape[-1])
    if closed_form and fam.kind == "entropy":
        values = _entropy_rows(fam.lam, rows_x, rows_p)
        return values.reshape(lead), -values.reshape(lead)
    impl = kernels.get_backend(backend)
    values, ystar, status = impl.oce_rows(fam.code, fam.lam, rows_x, rows_p)
    if np.any(status != 0):
        bad = int(np.flatnonzero(status)[0])
        diag = {"row": bad, "status": int(status[bad]), "outcomes": rows_x[bad].tolist(), "probs": rows_p[bad].tolist()}
        if status[bad] == kernels._kernels_py.STATUS_RANGE:
            raise OCERangeError(f"{fam.kind}: lambda * spread exceeds the exponent cap", diag)
        raise OCEError(f"{fam.kind}: OCE evaluation failed (status {int(status[bad])})", diag)
    return values.reshape(lead), ystar.reshape(lead)


def oce_value(fam: UtilityFamily, dist: EmpiricalDistribution):
    """``(U[X], y*)`` for a single discrete law."""
    values, ystar = oce_batch(fam, dist.outcomes[None, :], dist.probabilities[None, :])
    return float(values[0]), float(ystar[0])


def oce_objective(fam: UtilityFamily, dist: EmpiricalDistribution, y: float) -> float:
    """Inner objective ``E[u(X + y)] - y``."""
    if fam.kind == "worst_case":
        raise ValueError("worst_case has no inner objective")
    return float(dist.probabilities @ fam.u(dist.outcomes + y) - y)


def _entropy_rows(lam, x, p):
    with np.errstate(divide="ignore"):
        logp = np.where(p > 0.0, np.log(np.where(p > 0.0, p, 1.0)), -np.inf)
    a = logp - lam * x
    m = np.max(a, axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(a - m), axis=1))
    return -lse / lam


def entropy_closed_form(lam: float, dist: EmpiricalDistribution) -> float:
    """``-(1/lam) log E[exp(-lam X)]`` with a max-shift against overflow."""
    if lam <= 0.0:
        raise ValueError("lambda must be positive")
    return float(_entropy_rows(lam, dist.outcomes[None, :], dist.probabilities[None, :])[0])


AXIOMS = ("normalized", "monotone", "concave", "cash_invariant", "risk_averse", "coherent")


@dataclass
class AxiomReport:
    family: dict
    trials: int
    tolerance: float
    passed: dict = field(default_factory=dict)
    max_violation: dict = field(default_factory=dict)
    counterexamples: dict = field(default_factory=dict)

    def ok(self, *names):
        names = names or ("monotone", "concave", "cash_invariant", "risk_averse")
        return all(self.passed[n] for n in names)

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _draw_law(rng, scale):
    n = int(rng.integers(2, 9))
    p = rng.dirichlet(np.ones(n))
    # dirichlet output may miss 1 by a few ulps
    p = p / p.sum()
    x = scale * rng.standard_normal(n)
    return x, p


def check_axioms(fam: UtilityFamily, trials: int = 1000, seed: int = 0, tol: float = 1e-8) -> AxiomReport:
    """Randomised check of the monetary-utility axioms for ``fam``.

    Monotonicity, concavity, cash invariance and the Jensen bound ``U <= E``
    are the axioms proper; coherence is reported but is only expected of the
    positively homogeneous families.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    scale = 3.0 if fam.kind in ("expectation", "worst_case") else 3.0 / fam.lam
    report = AxiomReport(family=fam.to_dict(), trials=trials, tolerance=tol)
    worst = {a: 0.0 for a in AXIOMS}
    examples = {}

    def U(x, p):
        return float(oce_batch(fam, x[None, :], p[None, :])[0][0])

    def record(name, violation, detail):
        if violation > worst[name]:
            worst[name] = violation
        if violation > tol and name not in examples:
            examples[name] = detail

    for t in range(trials):
        rng = keyed_rng(seed, "axioms", fam.code, t)
        x, p = _draw_law(rng, scale)
        ux = U(x, p)

        zero = U(np.zeros_like(x), p)
        record("normalized", abs(zero), {"outcomes": [0.0] * len(x), "U": zero})

        bump = np.abs(rng.standard_normal(x.size)) * (rng.random(x.size) < 0.7) * scale
        uy = U(x + bump, p)
        record("monotone", ux - uy, {"X": x.tolist(), "Y": (x + bump).tolist(), "p": p.tolist(), "U[X]": ux, "U[Y]": uy})

        y2 = scale * rng.standard_normal(x.size)
        alpha = float(rng.random())
        mix = U(alpha * x + (1 - alpha) * y2, p)
        rhs = alpha * ux + (1 - alpha) * U(y2, p)
        record("concave", rhs - mix, {"X": x.tolist(), "Y": y2.tolist(), "p": p.tolist(), "alpha": alpha, "U[mix]": mix, "mix of U": rhs})

        c = float(scale * rng.standard_normal())
        uc = U(x + c, p)
        record("cash_invariant", abs(uc - ux - c), {"X": x.tolist(), "p": p.tolist(), "c": c, "U[X+c]": uc, "U[X]+c": ux + c})

        mean = float(p @ x)
        record("risk_averse", ux - mean, {"X": x.tolist(), "p": p.tolist(), "U[X]": ux, "E[X]": mean})

        n = 2.0 if t % 2 == 0 else float(rng.uniform(0.25, 4.0))
        un = U(n * x, p)
        record("coherent", abs(un - n * ux), {"X": x.tolist(), "p": p.tolist(), "n": n, "U[nX]": un, "nU[X]": n * ux})

    report.max_violation = worst
    report.passed = {a: worst[a] <= tol for a in AXIOMS}
    report.counterexamples = examples
    return report


class UtilityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str = "entropy"
    lam: float = 1.0

    @field_validator("kind")
    @classmethod
    def _kind(cls, v):
        if v not in FAMILIES:
            raise ValueError(f"unknown utility family {v!r}; expected one of {list(FAMILIES)}")
        return v

    def family(self) -> UtilityFamily:
        return UtilityFamily(self.kind, self.lam)
