"""Time integration of ``(D_t + P) u = f`` on a periodic grid.

Crank-Nicolson with a matrix-free GMRES solve is the default; Strang
splitting is available for the flat metric without magnetic field as a
cross-check.  Coefficients are sampled at step midpoints.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .weyl import GridFunction, apply_P, boxed_coefficients


class PropagationError(RuntimeError):
    """A step failed; ``partial`` holds the solution computed so far."""

    def __init__(self, msg, residual=None, partial=None):
        super().__init__(msg)
        self.residual = residual
        self.partial = partial


@dataclass(frozen=True)
class PropagatorConfig:
    scheme: str = "crank_nicolson"
    dt: float = 1e-3
    tol: float = 1e-10
    stride: int = 10
    max_iter: int = 500

    def __post_init__(self):
        if self.scheme not in ("crank_nicolson", "strang_split"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")


def spectral_scale(spec, grid, t=0.0):
    """Upper estimate of the largest eigenvalue of the discrete ``P``."""
    c = boxed_coefficients(spec, grid, t)
    kmax = grid.nyquist + float(np.max(np.abs(c.a), initial=0.0))
    gmax = float(np.max(np.linalg.eigvalsh(c.g)))
    return gmax * grid.n * kmax**2 + float(np.max(c.V))


def _is_flat(spec):
    return getattr(spec.metric, "name", "") == "flat" and spec.magnetic is None


def _forcing_values(forcing, t, grid):
    if forcing is None:
        return None
    f = forcing(t)
    vals = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=complex)
    if vals.shape != grid.shape:
        raise ValueError("forcing lives on a different grid")
    return vals


def step(spec, cfg, u, t, forcing=None, guess=None):
    """Advance ``u`` from ``t`` to ``t + dt``.

    Returns ``(u_next, info)`` where ``info`` carries the solver iteration
    count and relative residual.
    """
    dt = cfg.dt
    grid = u.grid
    tm = t + 0.5 * dt
    fm = _forcing_values(forcing, tm, grid)
    if cfg.scheme == "strang_split":
        if not _is_flat(spec):
            raise ValueError("Strang splitting needs the flat metric without magnetic field")
        if fm is not None:
            raise ValueError("Strang splitting does not take a forcing term")
        c = boxed_coefficients(spec, grid, tm)
        half = np.exp(-0.5j * dt * c.V)
        K = grid.freqs()
        kin = np.exp(-1j * dt * np.sum(K * K, axis=-1))
        v = half * u.values
        v = np.fft.ifftn(kin * np.fft.fftn(v))
        return u.like(half * v), {"iterations": 0, "residual": 0.0}

    coeffs = boxed_coefficients(spec, grid, tm)
    shape = grid.shape
    size = u.values.size

    def P(vec):
        return apply_P(spec, tm, GridFunction(grid, vec.reshape(shape)), coeffs).values.ravel()

    def lhs(vec):
        return vec + 0.5j * dt * P(vec)

    A = LinearOperator((size, size), matvec=lhs, dtype=complex)
    b = u.values.ravel() - 0.5j * dt * P(u.values.ravel())
    if fm is not None:
        b = b + 1j * dt * fm.ravel()
    x0 = u.values.ravel() if guess is None else guess.ravel()
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = gmres(A, b, x0=x0, rtol=cfg.tol, atol=0.0, restart=min(50, size), maxiter=cfg.max_iter,
                    callback=cb, callback_type="pr_norm")
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(lhs(x) - b) / (bn if bn > 0 else 1.0))
    if info != 0 and res > 10 * cfg.tol:
        raise PropagationError(f"GMRES did not converge at t={t:.6g}: relative residual {res:.3e}", residual=res)
    return u.like(x.reshape(shape)), {"iterations": count[0], "residual": res}


@dataclass
class Solution:
    times: list
    snapshots: list
    norms: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    rayleigh_imag: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.snapshots[-1]

    def write(self, directory):
        """Write snapshots and the run manifest under ``directory``."""
        snap_dir = os.path.join(directory, "snapshots")
        os.makedirs(snap_dir, exist_ok=True)
        for i, (t, u) in enumerate(zip(self.times, self.snapshots)):
            u.save(os.path.join(snap_dir, f"snap_{i:05d}.bin"), t)
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)


def spec_hash(spec):
    """Stable digest of a spec's parameters."""
    text = json.dumps({"name": spec.name, "n": spec.n, "m": spec.m, "T": spec.T, "params": spec.params},
                      sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def solve(spec, cfg, u0, T, forcing=None, check_every=None):
    """Integrate from ``u0`` over ``[0, T]`` and keep snapshots every ``cfg.stride`` steps.

    The step count is ``ceil(T/dt)`` with ``dt`` shrunk to divide ``T``.
    ``check_every`` samples the imaginary part of the Rayleigh quotient of
    ``P`` (Hermiticity monitor).
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T > spec.T + 1e-12:
        raise ValueError(f"T={T} exceeds the spec horizon {spec.T}")
    nsteps = int(np.ceil(T / cfg.dt - 1e-9)) if T > 0 else 0
    if nsteps:
        cfg = PropagatorConfig(cfg.scheme, T / nsteps, cfg.tol, cfg.stride, cfg.max_iter)
    sol = Solution(times=[0.0], snapshots=[u0], norms=[u0.norm()])
    sol.manifest = {
        "spec": spec.name, "spec_params": spec.params, "spec_hash": spec_hash(spec),
        "config": asdict(cfg), "steps": nsteps, "T": T,
        "grid": {"n": u0.grid.n, "N": u0.grid.N, "L": u0.grid.L},
        "stability_product": cfg.dt * spectral_scale(spec, u0.grid),
    }
    u, guess = u0, None
    for k in range(nsteps):
        t = k * cfg.dt
        try:
            un, info = step(spec, cfg, u, t, forcing, guess)
        except PropagationError as err:
            err.partial = sol
            raise
        guess = 2.0 * un.values - u.values  # linear extrapolation for the next solve
        u = un
        sol.norms.append(u.norm())
        sol.residuals.append(info["residual"])
        if check_every and (k + 1) % check_every == 0:
            Pu = apply_P(spec, t + cfg.dt, u)
            q = Pu.inner(u) / max(u.norm() ** 2, 1e-300)
            sol.rayleigh_imag.append(abs(q.imag) / max(abs(q), 1e-300))
        if (k + 1) % cfg.stride == 0 or k == nsteps - 1:
            sol.times.append((k + 1) * cfg.dt)
            sol.snapshots.append(u)
    sol.manifest["norms"] = [float(v) for v in sol.norms]
    sol.manifest["max_solver_residual"] = float(max(sol.residuals, default=0.0))
    return sol


def manufactured_forcing(spec, ustar, dt_ustar):
    """``f(t) = (D_t + P) u*(t) = -i du*/dt + P u*`` for a prescribed ``u*``.

    ``ustar(t)`` and ``dt_ustar(t)`` return grid functions.
    """

    def f(t):
        u = ustar(t)
        return u.like(-1j * dt_ustar(t).values + apply_P(spec, t, u).values)

    return f
