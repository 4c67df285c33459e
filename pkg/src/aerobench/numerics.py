"""Dense linear-algebra routines for the small systems used by the controllers.

Everything here targets matrices of a handful of rows (2-3 states, a few
dozen QP variables), so the solvers favor simple, auditable iterations:
scaled-and-squared Taylor series for the matrix exponential, Kleinman-Newton
for the continuous Riccati equation, a plain fixed-point sweep for the
discrete one, and FISTA with adaptive restart for box-constrained QPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import fista_box


class SynthesisError(RuntimeError):
    """Riccati synthesis failed (non-stabilizable pair or no convergence)."""


def _as_matrix(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    return b.reshape(-1, 1) if b.ndim == 1 else b


def expm(m: np.ndarray) -> np.ndarray:
    """Matrix exponential via scaling-and-squaring of the Taylor series.

    Terms are accumulated until they fall below machine precision relative
    to the running sum, so the result is accurate to roundoff for the
    well-scaled small matrices used here.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expm expects a square matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("expm expects finite entries")
    norm = np.linalg.norm(m, 1)
    squarings = 0
    if norm > 0.5:
        squarings = int(np.ceil(np.log2(norm / 0.5)))
        m = m / (2.0**squarings)
    n = m.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, 60):
        term = term @ m / k
        result = result + term
        if np.linalg.norm(term, 1) <= np.finfo(float).eps * np.linalg.norm(result, 1):
            break
    for _ in range(squarings):
        result = result @ result
    return result


def zoh_discretize(a: np.ndarray, b: np.ndarray, ts: float):
    """Exact sampling of dx/dt = a x + b u under piecewise-constant input.

    Uses the augmented-matrix exponential: exp([[a, b], [0, 0]] ts) packs
    ad in the top-left block and bd in the top-right column(s).
    """
    if ts <= 0.0:
        raise ValueError("ts must be positive")
    a = np.asarray(a, dtype=float)
    b_col = _as_matrix(b)
    n = a.shape[0]
    if a.shape != (n, n) or b_col.shape[0] != n:
        raise ValueError("dimension mismatch between a and b")
    m = np.zeros((n + b_col.shape[1], n + b_col.shape[1]))
    m[:n, :n] = a
    m[:n, n:] = b_col
    e = expm(m * ts)
    ad = e[:n, :n]
    bd = e[:n, n:]
    return ad, (bd.ravel() if np.asarray(b).ndim == 1 else bd)


def solve_lyapunov_continuous(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Solve a' p + p a + w = 0 by Kronecker vectorization (small n only)."""
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    n = a.shape[0]
    eye = np.eye(n)
    coeff = np.kron(eye, a.T) + np.kron(a.T, eye)
    p = np.linalg.solve(coeff, -w.flatten(order="F")).reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def max_real_eig(a: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(a).real))


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def _stabilizing_gain(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Initial stabilizing gain by pole shifting (Bass' method).

    With beta exceeding the spectral abscissa, the shifted Lyapunov equation
    (a + beta I) z + z (a + beta I)' = 2 b b' has a positive definite
    solution for controllable pairs, and k0 = b' inv(z) places a - b k0 in
    the open left half plane.
    """
    n = a.shape[0]
    beta = float(np.linalg.norm(a, "fro")) + 0.5
    z = solve_lyapunov_continuous(-(a + beta * np.eye(n)).T, 2.0 * b @ b.T)
    # z solves (a + beta I) z + z (a + beta I)' = 2 b b'
    eigvals = np.linalg.eigvalsh(z)
    if eigvals.min() <= 1e-12 * max(1.0, eigvals.max()):
        raise SynthesisError("pair (a, b) appears uncontrollable; no stabilizing gain found")
    k0 = np.linalg.solve(z, b).T
    if max_real_eig(a - b @ k0) >= 0.0:
        raise SynthesisError("pole-shifting initialization failed to stabilize the pair")
    return k0


def solve_care(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100,
) -> np.ndarray:
    """Stabilizing solution of a'p + pa - p b inv(r) b' p + q = 0.

    Kleinman-Newton iteration: starting from a stabilizing gain, each sweep
    solves one Lyapunov equation and refines the gain; convergence is
    quadratic.  Raises SynthesisError if the pair is not stabilizable, the
    iteration stalls, or the closed loop ends up unstable (e.g. undetectable
    cost).
    """
    a = np.asarray(a, dtype=float)
    b = _as_matrix(b)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    r_inv = np.linalg.inv(r)
    k = _stabilizing_gain(a, b)
    p = np.zeros_like(a)
    for _ in range(max_iter):
        acl = a - b @ k
        p_next = solve_lyapunov_continuous(acl, q + k.T @ r @ k)
        k = r_inv @ b.T @ p_next
        if np.linalg.norm(p_next - p, "fro") <= tol * max(1.0, np.linalg.norm(p_next, "fro")):
            p = p_next
            break
        p = p_next
    else:
        raise SynthesisError("Kleinman-Newton iteration did not converge")
    residual = a.T @ p + p @ a - p @ b @ r_inv @ b.T @ p + q
    if np.linalg.norm(residual, "fro") >= 1e-8:
        raise SynthesisError(f"Riccati residual {np.linalg.norm(residual, 'fro'):.3e} too large")
    # small margin so a marginal pole (undetectable cost) is not accepted
    # on the strength of a favourable rounding error
    if max_real_eig(a - b @ (r_inv @ b.T @ p)) >= -1e-9:
        raise SynthesisError("closed loop is not Hurwitz (cost likely undetectable)")
    return p


def solve_dare(
    ad: np.ndarray,
    bd: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200_000,
):
    """Stabilizing solution of the discrete Riccati equation and its gain.

    Plain fixed-point sweep p <- q + ad'p ad - ad'p bd (r + bd'p bd)^-1 bd'p ad
    from p = q; geometric convergence at the squared closed-loop spectral
    radius, which is plenty for the 2x2/3x3 systems used here.
    Returns (p, k) with k = (r + bd'p bd)^-1 bd'p ad.
    """
    ad = np.asarray(ad, dtype=float)
    bd = _as_matrix(bd)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))

    def _residual(p):
        gain = np.linalg.solve(r + bd.T @ p @ bd, bd.T @ p @ ad)
        return ad.T @ p @ ad - p - ad.T @ p @ bd @ gain + q

    p = q.copy()
    converged = False
    for _ in range(max_iter):
        bpb = r + bd.T @ p @ bd
        gain = np.linalg.solve(bpb, bd.T @ p @ ad)
        p_next = q + ad.T @ p @ ad - ad.T @ p @ bd @ gain
        p_next = 0.5 * (p_next + p_next.T)
        delta_small = np.linalg.norm(p_next - p, "fro") <= tol * max(
            1.0, np.linalg.norm(p_next, "fro")
        )
        p = p_next
        # the iterate gap understates the residual when the closed loop is
        # slow, so once it is small keep sweeping until the residual clears
        if delta_small and np.linalg.norm(_residual(p), "fro") < 5e-11:
            converged = True
            break
    if not converged:
        raise SynthesisError("discrete Riccati fixed-point iteration did not converge")
    k = np.linalg.solve(r + bd.T @ p @ bd, bd.T @ p @ ad)
    residual = ad.T @ p @ ad - p - ad.T @ p @ bd @ k + q
    if np.linalg.norm(residual, "fro") >= 1e-10:
        raise SynthesisError(
            f"discrete Riccati residual {np.linalg.norm(residual, 'fro'):.3e} too large"
        )
    if spectral_radius(ad - bd @ k) >= 1.0 - 1e-9:
        raise SynthesisError("discrete closed loop is not Schur stable")
    return p, k


def power_iteration(h: np.ndarray, iters: int = 200, tol: float = 1e-12) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    n = h.shape[0]
    # two deterministic starts guard against an unlucky orthogonal one
    best = 0.0
    for start in range(2):
        v = np.ones(n) if start == 0 else np.cos(np.arange(n, dtype=float))
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = h @ v
            norm = np.linalg.norm(w)
            if norm <= 0.0:
                break
            v = w / norm
            lam_new = float(v @ (h @ v))
            if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
                lam = lam_new
                break
            lam = lam_new
        best = max(best, lam)
    return best


@dataclass
class BoxQp:
    """min 0.5 z'Hz + f'z subject to lower <= z <= upper (H symmetric PSD)."""

    h: np.ndarray
    f: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        n = self.f.shape[0]
        if self.h.shape != (n, n):
            raise ValueError("H and f dimensions disagree")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds and f dimensions disagree")
        if np.max(np.abs(self.h - self.h.T)) > 1e-10:
            raise ValueError("H must be symmetric within 1e-10")
        if np.any(self.lower > self.upper):
            raise ValueError("empty box: lower > upper somewhere")
        self.h = 0.5 * (self.h + self.h.T)


@dataclass
class QpResult:
    z: np.ndarray
    iterations: int
    converged: bool


def solve_box_qp(
    qp: BoxQp,
    tol: float = 1e-6,
    max_iter: int = 400,
    z0: np.ndarray | None = None,
    lipschitz: float | None = None,
) -> QpResult:
    """FISTA with adaptive restart; step 1/L with L from power iteration.

    Hitting the iteration cap is not an error: the best iterate comes back
    with ``converged=False`` and the caller decides what to do with it.
    """
    if lipschitz is None:
        lipschitz = power_iteration(qp.h) * 1.01
    if lipschitz <= 0.0:
        lipschitz = 1.0
    if z0 is None:
        z0 = np.clip(np.zeros_like(qp.f), qp.lower, qp.upper)
    z, iterations, converged = fista_box(
        qp.h,
        qp.f,
        qp.lower,
        qp.upper,
        np.asarray(z0, dtype=float),
        float(lipschitz),
        float(tol),
        int(max_iter),
    )
    return QpResult(z=z, iterations=int(iterations), converged=bool(converged))
