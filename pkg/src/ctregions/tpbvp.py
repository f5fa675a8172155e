"""Closed-form two-point boundary value problems for free and bound-active arcs."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularityError
from .linalg import RCOND_MIN, mat_exp, solve
from .model import control_on_arc, hamiltonian_bound, hamiltonian_free


@dataclass(frozen=True)
class BlockedExponential:
    phi11: np.ndarray
    phi12: np.ndarray
    phi21: np.ndarray
    phi22: np.ndarray
    affine_x: np.ndarray
    affine_lambda: np.ndarray

    @classmethod
    def from_matrix(cls, E, n):
        E = np.asarray(E)
        if E.shape[-1] == 2 * n + 1:
            ax, al = E[..., :n, 2 * n], E[..., n:2 * n, 2 * n]
        else:
            ax = np.zeros(E.shape[:-2] + (n,))
            al = np.zeros(E.shape[:-2] + (n,))
        return cls(E[..., :n, :n], E[..., :n, n:2 * n],
                   E[..., n:2 * n, :n], E[..., n:2 * n, n:2 * n], ax, al)


def blocked_exponential(M, t, n):
    return BlockedExponential.from_matrix(mat_exp(M, t), n)


@dataclass(frozen=True)
class FreeGain:
    """``lambda(0) = K_f x0`` for a free arc of the given length."""

    K_f: np.ndarray
    horizon: float


# Longest sub-horizon used when composing the boundary map.  Over long
# horizons the pencil Phi22 - Phi12 mixes exponentially growing and decaying
# modes and the single-shot formula loses about seven digits; chaining the
# same formula over short segments keeps it at rounding level.
SEGMENT = 1.0


def _segments(horizon):
    k = max(1, int(np.ceil(horizon / SEGMENT - 1e-12)))
    return k, horizon / k


def _compose(phi, k, where):
    """Pull ``lambda = P x + p`` back across ``k`` identical segments.

    Starts from the terminal condition ``lambda(t_f) = x(t_f)``.
    """
    n = phi.phi11.shape[0]
    P = np.eye(n)
    p = np.zeros(n)
    for _ in range(k):
        pencil = phi.phi22 - P @ phi.phi12
        rhs = np.column_stack([P @ phi.phi11 - phi.phi21,
                               P @ phi.affine_x + p - phi.affine_lambda])
        try:
            sol = solve(pencil, rhs)
        except SingularityError as exc:
            raise SingularityError(f"singular TPBVP pencil at {where}", rcond=exc.rcond) from None
        P, p = sol[:, :n], sol[:, n]
    return P, p


def free_gain(sys, horizon):
    """``K_f`` with ``lambda(0) = K_f x0`` on a free arc of length ``horizon``.

    Each segment solves ``(Phi22 - P Phi12) K = P Phi11 - Phi21``; with a single
    segment and ``P = I`` this is ``K_f = -(Phi22 - Phi12)^-1 (Phi21 - Phi11)``.
    """
    horizon = float(horizon)
    if not (0.0 <= horizon <= sys.t_f * (1 + 1e-12)):
        raise DomainError(f"horizon {horizon} outside [0, t_f]")
    if horizon == 0.0:
        return FreeGain(np.eye(sys.n), 0.0)
    k, d = _segments(horizon)
    phi = blocked_exponential(hamiltonian_free(sys), d, sys.n)
    K, _ = _compose(phi, k, f"horizon={horizon}")
    return FreeGain(K, horizon)


def free_gains(sys, horizons):
    """Stack of free-arc gains, one per horizon (vectorised over horizons)."""
    h = np.asarray(horizons, dtype=float).ravel()
    n = sys.n
    if np.any(h < 0) or np.any(h > sys.t_f * (1 + 1e-12)):
        raise DomainError("horizon outside [0, t_f]")
    k = np.maximum(1, np.ceil(h / SEGMENT - 1e-12).astype(int))
    phi = blocked_exponential(hamiltonian_free(sys), h / k, n)
    P = np.broadcast_to(np.eye(n), (len(h), n, n)).copy()
    for it in range(int(k.max(initial=0))):
        sel = k > it
        Ps = P[sel]
        pencil = phi.phi22[sel] - Ps @ phi.phi12[sel]
        cond = np.linalg.cond(pencil)
        if not np.all(cond * RCOND_MIN < 1.0):
            raise SingularityError("singular TPBVP pencil", rcond=float(1.0 / cond.max()))
        P[sel] = np.linalg.solve(pencil, Ps @ phi.phi11[sel] - phi.phi21[sel])
    return P


@dataclass(frozen=True)
class BoundTerminalSigma:
    """``sigma(t_f; x0) = a_s . x0 + c_s`` on a full-horizon bound-active arc.

    ``K_s`` and ``k_s`` give the initial costate ``lambda(0) = K_s x0 + k_s``.
    """

    a_s: np.ndarray
    c_s: float
    K_s: np.ndarray
    k_s: np.ndarray
    bound_sign: int


def bound_terminal_sigma(sys, bound_sign):
    n = sys.n
    k, d = _segments(sys.t_f)
    phi = blocked_exponential(hamiltonian_bound(sys, bound_sign), d, n)
    K_s, k_s = _compose(phi, k, "bound arc")
    # forward image of lambda(0) = K_s x0 + k_s; lambda(t_f) equals x(t_f)
    E = mat_exp(_input_generator(sys, bound_sign), sys.t_f)
    a_s = E[:n, :n].T @ sys.B
    c_s = float(sys.B @ E[:n, n])
    return BoundTerminalSigma(a_s=a_s, c_s=c_s, K_s=K_s, k_s=k_s, bound_sign=int(bound_sign))


def _input_generator(sys, bound_sign):
    n = sys.n
    G = np.zeros((n + 1, n + 1))
    G[:n, :n] = sys.A
    G[:n, n] = control_on_arc(sys, bound_sign) * sys.B
    return G


def bound_state_at(sys, x0, bound_sign, t):
    """State under the constant bound control ``-bound_sign * u_max``.

    ``x0`` may be ``(n,)`` or ``(m, n)``; ``t`` a scalar or ``(m,)`` array.
    """
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > sys.t_f * (1 + 1e-12)):
        raise DomainError("propagation time outside [0, t_f]")
    E = mat_exp(_input_generator(sys, bound_sign), t)
    n = sys.n
    if t.ndim == 0:
        return x0 @ E[:n, :n].T + E[:n, n]
    return np.einsum("kij,kj->ki", E[:, :n, :n], np.broadcast_to(x0, (len(t), n))) + E[:, :n, n]
