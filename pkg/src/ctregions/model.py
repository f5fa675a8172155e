"""Problem instance and the Hamiltonian system matrices of the two arc types.

The cost is fixed: identity state and terminal weights and a unit input
weight, all with a factor one half.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError


def _check_sign(bound_sign):
    if bound_sign not in (1, -1):
        raise DomainError(f"bound_sign must be +1 or -1, got {bound_sign!r}")
    return int(bound_sign)


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """Single-input LTI system with horizon, input bound and parameter box."""

    A: np.ndarray
    B: np.ndarray
    t_f: float
    u_max: float
    theta_lo: np.ndarray
    theta_hi: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if B.ndim == 2:
            if B.shape[1] != 1:
                raise DimensionError("only single-input systems are supported")
            B = B[:, 0]
        if B.shape != (n,):
            raise DimensionError(f"B must have {n} entries, got shape {B.shape}")
        lo = np.array(self.theta_lo, dtype=float).ravel()
        hi = np.array(self.theta_hi, dtype=float).ravel()
        if lo.shape != (n,) or hi.shape != (n,):
            raise DimensionError("theta bounds must have one entry per state")
        for name, arr in (("A", A), ("B", B), ("theta_lo", lo), ("theta_hi", hi)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} has non-finite entries")
        if not (np.isfinite(self.t_f) and self.t_f > 0):
            raise DomainError(f"t_f must be positive, got {self.t_f}")
        if not (np.isfinite(self.u_max) and self.u_max > 0):
            raise DomainError(f"u_max must be positive, got {self.u_max}")
        if not np.all(lo < hi):
            raise DomainError("theta lower bounds must be strictly below upper bounds")
        for arr in (A, B, lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "theta_lo", lo)
        object.__setattr__(self, "theta_hi", hi)
        object.__setattr__(self, "t_f", float(self.t_f))
        object.__setattr__(self, "u_max", float(self.u_max))
        object.__setattr__(self, "n", n)

    def in_theta(self, x0, tol=0.0):
        x0 = np.asarray(x0, dtype=float)
        return bool(np.all(x0 >= self.theta_lo - tol) and np.all(x0 <= self.theta_hi + tol))

    @property
    def theta_volume(self):
        return float(np.prod(self.theta_hi - self.theta_lo))

    def with_theta(self, lo, hi):
        return LtiSystem(self.A, self.B, self.t_f, self.u_max, lo, hi)


def demo_system():
    """Third-order stable chain with input on the last state."""
    A = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-2.0, -2.0, -5.0]]
    B = [0.0, 0.0, 1.0]
    return LtiSystem(A, B, t_f=5.0, u_max=0.4,
                     theta_lo=[-2.6, -0.9, -0.7], theta_hi=[2.6, 0.9, 0.7])


class ArcSequence(enum.Enum):
    """Single-switch arc catalog.

    "Upper" means the control sits on its upper bound ``u = +u_max``; under
    ``u = -clip(sigma)`` that pins the switching function at or below
    ``-u_max``, so the corresponding ``bound_sign`` (sign of sigma) is -1.
    """

    FREE_FULL = "FreeFull"
    UPPER_BA_THEN_FREE = "UpperBaThenFree"
    UPPER_BA_FULL = "UpperBaFull"
    LOWER_BA_THEN_FREE = "LowerBaThenFree"
    LOWER_BA_FULL = "LowerBaFull"

    @property
    def bound_sign(self):
        if self is ArcSequence.FREE_FULL:
            return 0
        return -1 if self.name.startswith("UPPER") else 1

    @property
    def transitional(self):
        return self.name.endswith("THEN_FREE")

    @property
    def full_bound(self):
        return self.name.endswith("BA_FULL")

    @classmethod
    def from_structure(cls, bound_sign, switches):
        """Arc from the sign of sigma on the first arc and whether it switches."""
        if bound_sign == 0:
            return cls.FREE_FULL
        upper = bound_sign < 0
        if switches:
            return cls.UPPER_BA_THEN_FREE if upper else cls.LOWER_BA_THEN_FREE
        return cls.UPPER_BA_FULL if upper else cls.LOWER_BA_FULL


REGION_IDS = {
    ArcSequence.FREE_FULL: "CR01",
    ArcSequence.UPPER_BA_THEN_FREE: "CR02",
    ArcSequence.UPPER_BA_FULL: "CR03",
    ArcSequence.LOWER_BA_THEN_FREE: "CR04",
    ArcSequence.LOWER_BA_FULL: "CR05",
}
ARC_BY_REGION = {v: k for k, v in REGION_IDS.items()}


def hamiltonian_free(sys):
    """Generator of the joint state-costate flow on a free arc (u = -B^T lambda)."""
    n = sys.n
    return np.block([
        [sys.A, -np.outer(sys.B, sys.B)],
        [-np.eye(n), -sys.A.T],
    ])


def control_on_arc(sys, bound_sign):
    return -_check_sign(bound_sign) * sys.u_max


def hamiltonian_bound(sys, bound_sign):
    """Homogeneous (2n+1)-dimensional generator of a bound-active arc.

    The last coordinate is the constant 1 carrying the affine input term.
    """
    u_arc = control_on_arc(sys, bound_sign)
    n = sys.n
    M = np.zeros((2 * n + 1, 2 * n + 1))
    M[:n, :n] = sys.A
    M[:n, 2 * n] = u_arc * sys.B
    M[n:2 * n, :n] = -np.eye(n)
    M[n:2 * n, n:2 * n] = -sys.A.T
    return M
