"""Deterministic reference solvers on fixed grids.

Three schemes, all float64 and bitwise reproducible:

solve_diffusion_limit
    The eps -> 0 limit equations. Linear model: implicit Euler for
    d_t rho = d_x (c/(3 sigma) d_x rho) on nodes, tridiagonal solve per
    step. Material coupling: damped Newton per step for
    d_t (Cv T + a T^4) = d_x (a c/(3 sigma) d_x T^4).

solve_transport_sn
    Micro-macro discrete-ordinates IMEX scheme, uniform in eps:
    rho and T live on cell centers, g on faces. The stiff relaxation
    sigma g and the material exchange are implicit (scalar Newton per
    cell), transport terms explicit upwind. Dirichlet inflow enters the
    adjacent macro update implicitly, so the scheme stays stable and
    consistent down to eps = 1e-8 with the parabolic step restriction
    dt <= cfl * min(eps h / c, 3 sigma_min h^2 / (2c)).

solve_stationary
    The steady coupled system. The transport sweeps are affine in the
    emission source, so <I> = M B(T) + b with a dense matrix M built
    once; Newton then runs on the temperature equation alone. Intended
    for modest grids (the dense M is (n+1)^2).

All solvers accept optional manufactured-solution source hooks used by
the convergence tests; they default to zero.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import solve_banded
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .errors import ContractViolation, NumericalError
from .sampling import angular_flux_mean


@dataclass
class Grid1D:
    n_cells: int
    x_range: tuple

    def __post_init__(self):
        if self.n_cells < 4:
            raise ContractViolation(f"need at least 4 cells, got {self.n_cells}")
        if self.x_range[1] <= self.x_range[0]:
            raise ContractViolation(f"empty x_range {self.x_range}")

    @property
    def h(self):
        return (self.x_range[1] - self.x_range[0]) / self.n_cells

    @property
    def nodes(self):
        return np.linspace(self.x_range[0], self.x_range[1], self.n_cells + 1)

    @property
    def centers(self):
        return self.x_range[0] + (np.arange(self.n_cells) + 0.5) * self.h


@dataclass
class ReferenceSolution:
    """Fields on a space(-time) grid with linear interpolation access."""

    x: np.ndarray
    rho: np.ndarray
    t: np.ndarray = None          # None for stationary solutions
    T: np.ndarray = None
    scheme: str = ""
    meta: dict = field(default_factory=dict)

    def _interp(self, arr, t, x):
        x = np.asarray(x, dtype=np.float64)
        xq = np.clip(x, self.x[0], self.x[-1])
        if self.t is None:
            return np.interp(xq, self.x, arr)
        t = np.asarray(t, dtype=np.float64)
        tq = np.clip(t, self.t[0], self.t[-1])
        itp = RegularGridInterpolator((self.t, self.x), arr)
        tt, xx = np.broadcast_arrays(tq, xq)
        pts = np.column_stack([tt.ravel(), xx.ravel()])
        return itp(pts).reshape(tt.shape)

    def interpolate(self, t, x, which="rho"):
        if which == "rho":
            return self._interp(self.rho, t, x)
        if which == "T":
            if self.T is None:
                raise ContractViolation("this solution has no temperature field")
            return self._interp(self.T, t, x)
        raise ContractViolation(f"unknown field {which!r}")


def _snapshot_times(spec, n_snapshots):
    t0, t1 = spec.t_range
    return np.linspace(t0, t1, n_snapshots)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {name}")


def _initial_fields(spec, x):
    if spec.ic.kind == "equilibrium":
        T0 = spec.ic.T0(x)
        return spec.planck_rho(T0), T0
    rho0 = np.zeros_like(x)
    T0 = spec.ic.T0(x) if spec.has_material else None
    return rho0, T0


# -- diffusion limit ----------------------------------------------------

def solve_diffusion_limit(spec, grid, dt=None, n_snapshots=201, rho0_override=None,
                          source=None):
    """Implicit solve of the eps -> 0 limit equations on grid nodes."""
    if spec.stationary:
        raise ContractViolation("use solve_stationary for the steady problem")
    x = grid.nodes
    h = grid.h
    n = x.size
    periodic = spec.bc_left.kind == "periodic"
    sig_mid = spec.sigma(0.5 * (x[:-1] + x[1:]))

    snaps = _snapshot_times(spec, n_snapshots)
    if dt is None:
        # backward Euler is unconditionally stable; pick dt for accuracy,
        # resolving the grid CFL-like scale without the explicit h^2 bound
        t0, t1 = spec.t_range
        dt = (t1 - t0) / max(400.0, 4.0 * n)
    linear = not spec.has_material

    if linear:
        dcoef = spec.c / (3.0 * sig_mid)
    else:
        dcoef = spec.a * spec.c / (3.0 * sig_mid)  # flux carries d_x T^4
    dcoef_wrap = float(dcoef[0] + dcoef[-1]) / 2.0  # wrap midpoint coefficient

    if periodic and spec.has_material:
        raise ContractViolation(
            "periodic material diffusion limit is not assembled; use the sn scheme")

    def lap(v):
        # flux-form d_x (dcoef d_x v); wall rows are overwritten by bc equations
        out = np.empty_like(v)
        flux = dcoef * (v[1:] - v[:-1]) / h      # at midpoints
        out[1:-1] = (flux[1:] - flux[:-1]) / h
        out[0] = out[-1] = 0.0
        return out

    if linear:
        rho = (np.zeros_like(x) if rho0_override is None
               else np.asarray(rho0_override(x), dtype=np.float64))
        if spec.ic.kind == "equilibrium":
            raise ContractViolation("equilibrium start needs the material coupling")

        def assemble(dts):
            r = dts / (h * h)
            lower = np.zeros(n)
            diag = np.ones(n)
            upper = np.zeros(n)
            diag[1:-1] = 1.0 + r * (dcoef[:-1] + dcoef[1:])
            lower[0:n - 2] = -r * dcoef[:n - 2]
            upper[2:] = -r * dcoef[1:]
            if periodic:
                rows, cols, vals = [], [], []
                for i in range(n):
                    im, ip = (i - 1) % n, (i + 1) % n
                    dm = dcoef_wrap if i == 0 else dcoef[i - 1]
                    dp = dcoef_wrap if i == n - 1 else dcoef[i]
                    rows += [i, i, i]
                    cols += [im, i, ip]
                    vals += [-r * dm, 1.0 + r * (dm + dp), -r * dp]
                return splu(csc_matrix((vals, (rows, cols)), shape=(n, n)))
            for idx, bc in ((0, spec.bc_left), (-1, spec.bc_right)):
                if bc.kind in ("dirichlet", "dirichlet_split"):
                    if idx == 0:
                        diag[0] = 1.0
                        upper[1] = 0.0
                    else:
                        diag[-1] = 1.0
                        lower[-2] = 0.0
                elif bc.kind == "reflecting":
                    d = dcoef[0] if idx == 0 else dcoef[-1]
                    if idx == 0:
                        diag[0] = 1.0 + 2.0 * r * d
                        upper[1] = -2.0 * r * d
                    else:
                        diag[-1] = 1.0 + 2.0 * r * d
                        lower[-2] = -2.0 * r * d
                else:
                    raise ContractViolation(f"unsupported bc {bc.kind} for diffusion limit")
            return np.vstack([upper, diag, lower])

        out_rho = np.empty((snaps.size, n))
        out_rho[0] = rho
        t = snaps[0]
        op, op_dts = None, None
        for k in range(1, snaps.size):
            n_sub = max(1, int(np.ceil((snaps[k] - t) / dt - 1e-12)))
            dts = (snaps[k] - t) / n_sub
            if op is None or dts != op_dts:
                op, op_dts = assemble(dts), dts
            for _ in range(n_sub):
                rhs = rho.copy()
                if source is not None:
                    rhs += dts * source(t, x)
                if periodic:
                    rho = op.solve(rhs)
                else:
                    if spec.bc_left.kind in ("dirichlet", "dirichlet_split"):
                        rhs[0] = spec.bc_left.value
                    if spec.bc_right.kind in ("dirichlet", "dirichlet_split"):
                        rhs[-1] = spec.bc_right.value
                    rho = solve_banded((1, 1), op, rhs)
                t += dts
            _check_finite("diffusion-limit rho", rho)
            out_rho[k] = rho
        return ReferenceSolution(x=x, t=snaps, rho=out_rho, T=None,
                                 scheme="diffusion_limit",
                                 meta={"dt": dt, "n_cells": grid.n_cells})

    # material coupling: Newton in T each implicit step
    rho0, T = _initial_fields(spec, x)
    out_T = np.empty((snaps.size, n))
    out_T[0] = T
    t = snaps[0]

    def wall_T(bc):
        return (spec.s_d * bc.value / (spec.a * spec.c)) ** 0.25

    for k in range(1, snaps.size):
        n_sub = max(1, int(np.ceil((snaps[k] - t) / dt - 1e-12)))
        dts = (snaps[k] - t) / n_sub
        for _ in range(n_sub):
            Tn = T.copy()
            phin = Tn ** 4

            def resid(Tc):
                phi = Tc ** 4
                F = spec.cv * (Tc - Tn) + spec.a * (phi - phin) - dts * lap(phi)
                if source is not None:
                    F -= dts * source(t, x)
                for idx, bc in ((0, spec.bc_left), (-1, spec.bc_right)):
                    if bc.kind in ("dirichlet", "dirichlet_split"):
                        F[idx] = Tc[idx] - wall_T(bc)
                    elif bc.kind == "reflecting":
                        d = dcoef[0] if idx == 0 else dcoef[-1]
                        flux_in = d * (phi[1] - phi[0]) / h if idx == 0 else \
                            -d * (phi[-1] - phi[-2]) / h
                        F[idx] = spec.cv * (Tc[idx] - Tn[idx]) + spec.a * (phi[idx] - phin[idx]) \
                            - dts * 2.0 * flux_in / h
                        if source is not None:
                            F[idx] -= dts * source(t, x[idx:idx + 1])[0]
                return F

            F = resid(T)
            for it in range(50):
                if np.max(np.abs(F)) < 1e-13 * max(1.0, float(np.max(np.abs(T) ** 4))):
                    break
                p3 = 4.0 * T ** 3
                lower = np.zeros(n)
                diag = spec.cv + spec.a * p3
                upper = np.zeros(n)
                rr = dts / (h * h)
                diag[1:-1] += rr * (dcoef[:-1] + dcoef[1:]) * p3[1:-1]
                lower[0:-2] = -rr * dcoef[:-1] * p3[:-2]
                upper[2:] = -rr * dcoef[1:] * p3[2:]
                for idx, bc in ((0, spec.bc_left), (-1, spec.bc_right)):
                    if bc.kind in ("dirichlet", "dirichlet_split"):
                        diag[idx] = 1.0
                        if idx == 0:
                            upper[1] = 0.0
                        else:
                            lower[-2] = 0.0
                    elif bc.kind == "reflecting":
                        d = dcoef[0] if idx == 0 else dcoef[-1]
                        diag[idx] = spec.cv + spec.a * p3[idx] + 2.0 * rr * d * p3[idx]
                        if idx == 0:
                            upper[1] = -2.0 * rr * d * p3[1]
                        else:
                            lower[-2] = -2.0 * rr * d * p3[-2]
                dT = solve_banded((1, 1), np.vstack([upper, diag, lower]), -F)
                step_len = 1.0
                nf = float(np.linalg.norm(F))
                while step_len > 2 ** -30:
                    Tc = T + step_len * dT
                    Fc = resid(Tc)
                    if np.all(np.isfinite(Fc)) and np.linalg.norm(Fc) <= nf * (1 - 1e-4 * step_len) + 1e-300:
                        T, F = Tc, Fc
                        break
                    step_len *= 0.5
                else:
                    raise NumericalError("diffusion-limit Newton line search stalled")
            else:
                raise NumericalError("diffusion-limit Newton did not converge")
            t += dts
        _check_finite("diffusion-limit T", T)
        out_T[k] = T
    out_rho = spec.planck_rho(out_T)
    return ReferenceSolution(x=x, t=snaps, rho=out_rho, T=out_T,
                             scheme="diffusion_limit",
                             meta={"dt": dt, "n_cells": grid.n_cells})


# -- discrete ordinates, micro-macro IMEX -------------------------------

def sn_time_step(spec, grid, cfl=0.45):
    """Step bound uniform in eps.

    Kinetic regime (eps ~ 1): explicit upwind advection, dt <= eps h / c.
    Diffusive regime (eps / h << sigma): the relaxation damps the advection
    and the explicit macro flux behaves like diffusion with D = c/(3 sigma),
    dt <= 3 sigma_min h^2 / (2 c). The max of the two covers the crossover,
    capped by the plain CFL h/c.
    """
    h = grid.h
    smin = float(np.min(spec.sigma(grid.nodes)))
    hyper = spec.eps * h / spec.c
    para = 1.5 * smin * h * h / spec.c
    return cfl * min(h / spec.c, max(hyper, para))


def solve_transport_sn(spec, grid, rule, dt=None, cfl=0.45, n_snapshots=201,
                       sources=None, g0_override=None, rho0_override=None):
    """Micro-macro IMEX discrete ordinates solve; uniform accuracy in eps."""
    if spec.stationary:
        raise ContractViolation("use solve_stationary for the steady problem")
    h = grid.h
    nc = grid.n_cells
    xc = grid.centers
    periodic = spec.bc_left.kind == "periodic"
    xf = grid.nodes[:-1] if periodic else grid.nodes
    nf = xf.size
    mu = rule.nodes
    wmu = 0.5 * rule.weights * mu
    gamma = float(np.sum(wmu[mu > 0.0]))
    pos = mu > 0.0
    neg = ~pos
    mirror = slice(None, None, -1)  # symmetric rule: index reversal flips mu
    sq0 = np.sqrt(spec.sigma0)
    sig_f = spec.sigma(xf)
    sig_c = spec.sigma(xc)

    if dt is None:
        dt = sn_time_step(spec, grid, cfl)
    snaps = _snapshot_times(spec, n_snapshots)

    rho, T = _initial_fields(spec, xc)
    if rho0_override is not None:
        rho = np.asarray(rho0_override(xc), dtype=np.float64)
    g = np.zeros((nf, rule.n))
    if g0_override is not None:
        g = np.asarray(g0_override(xf[:, None], mu[None, :]), dtype=np.float64).copy()

    out_rho = np.empty((snaps.size, nc))
    out_T = np.empty((snaps.size, nc)) if spec.has_material else None
    out_rho[0] = rho
    if out_T is not None:
        out_T[0] = T

    def src(kind, t):
        if sources is None or kind not in sources:
            return 0.0
        if kind == "micro":
            return sources["micro"](t, xf[:, None], mu[None, :])
        return sources[kind](t, xc)

    t = snaps[0]
    for k in range(1, snaps.size):
        n_sub = max(1, int(np.ceil((snaps[k] - t) / dt - 1e-12)))
        dts = (snaps[k] - t) / n_sub
        relax = spec.eps ** 2 / (spec.c * dts)
        beta = spec.c * dts * gamma / (spec.eps * h)
        for _ in range(n_sub):
            # face fluxes <mu g>; walls use only the outgoing half, the
            # incoming half enters the adjacent macro update implicitly
            phi = g @ wmu
            if not periodic:
                if spec.bc_left.kind in ("dirichlet", "dirichlet_split"):
                    phi[0] = g[0, neg] @ wmu[neg]
                elif spec.bc_left.kind == "reflecting":
                    phi[0] = 0.0
                if spec.bc_right.kind in ("dirichlet", "dirichlet_split"):
                    phi[-1] = g[-1, pos] @ wmu[pos]
                elif spec.bc_right.kind == "reflecting":
                    phi[-1] = 0.0

            if periodic:
                dphi = (np.roll(phi, -1) - phi) / h
            else:
                dphi = (phi[1:] - phi[:-1]) / h
            rho_t = rho - (spec.c * dts / sq0) * dphi + dts * spec.c * src("macro", t)

            pcoef = rho_t.copy()
            qcoef = np.full(nc, spec.c * spec.cv / spec.s_d) if spec.has_material else None
            if not periodic:
                if spec.bc_left.kind in ("dirichlet", "dirichlet_split"):
                    pcoef[0] = (rho_t[0] + beta * spec.bc_left.value) / (1.0 + beta)
                    if qcoef is not None:
                        qcoef = qcoef.copy()
                        qcoef[0] /= (1.0 + beta)
                if spec.bc_right.kind in ("dirichlet", "dirichlet_split"):
                    pcoef[-1] = (rho_t[-1] + beta * spec.bc_right.value) / (1.0 + beta)
                    if qcoef is not None:
                        qcoef[-1] /= (1.0 + beta)

            if spec.has_material:
                Tn = T.copy()
                alpha = spec.eps ** 2 * spec.cv / dts
                s_mat = src("material", t)
                Tc = Tn.copy()
                for _ in range(80):
                    F = (alpha + sig_c * spec.s_d * qcoef) * (Tc - Tn) \
                        + sig_c * spec.a * spec.c * Tc ** 4 - sig_c * spec.s_d * pcoef \
                        - (s_mat if np.ndim(s_mat) else 0.0)
                    Fp = alpha + sig_c * spec.s_d * qcoef + 4.0 * sig_c * spec.a * spec.c * Tc ** 3
                    step = F / Fp
                    Tnew = np.maximum(Tc - step, 0.5 * Tc)
                    if np.max(np.abs(Tnew - Tc)) < 1e-14 * max(1.0, float(np.max(np.abs(Tnew)))):
                        Tc = Tnew
                        break
                    Tc = Tnew
                else:
                    raise NumericalError("material Newton did not converge")
                T = Tc
                rho = pcoef - qcoef * (T - Tn)
            else:
                rho = pcoef

            # refresh wall g before the micro update needs neighbors
            if not periodic:
                for side, idx, bc, inflow in (("left", 0, spec.bc_left, pos),
                                              ("right", nf - 1, spec.bc_right, neg)):
                    inner = 1 if idx == 0 else nf - 2
                    cell = 0 if idx == 0 else nc - 1
                    if bc.kind in ("dirichlet", "dirichlet_split"):
                        g[idx, ~inflow] = g[inner, ~inflow]
                        g[idx, inflow] = (sq0 / spec.eps) * (bc.value - rho[cell])
                    elif bc.kind == "reflecting":
                        g[idx, ~inflow] = g[inner, ~inflow]
                        g[idx, inflow] = g[idx][mirror][inflow]
                    else:
                        raise ContractViolation(f"unsupported bc {bc.kind} for the sn scheme")

            # upwind mu d_x g at faces
            if periodic:
                dgm = (g - np.roll(g, 1, axis=0)) / h   # backward, mu > 0
                dgp = (np.roll(g, -1, axis=0) - g) / h  # forward, mu < 0
                upw = np.where(pos[None, :], mu[None, :] * dgm, mu[None, :] * dgp)
                drho = (rho - np.roll(rho, 1)) / h
                interior = slice(0, nf)
            else:
                upw = np.zeros((nf, rule.n))
                upw[1:, pos] = mu[pos][None, :] * (g[1:, pos] - g[:-1, pos]) / h
                upw[:-1, neg] = mu[neg][None, :] * (g[1:, neg] - g[:-1, neg]) / h
                drho = np.zeros(nf)
                drho[1:-1] = (rho[1:] - rho[:-1]) / h
                interior = slice(1, nf - 1)
            mean_upw = upw @ (0.5 * rule.weights)
            rhs = relax * g - spec.eps * (upw - mean_upw[:, None]) \
                - sq0 * mu[None, :] * drho[:, None]
            s_mic = src("micro", t)
            if np.ndim(s_mic):
                rhs = rhs + s_mic
            g_new = rhs / (relax + sig_f[:, None])
            g[interior] = g_new[interior]
            t += dts
        _check_finite("sn rho", rho)
        out_rho[k] = rho
        if out_T is not None:
            _check_finite("sn T", T)
            out_T[k] = T

    return ReferenceSolution(x=xc, t=snaps, rho=out_rho, T=out_T,
                             scheme="sn_imex",
                             meta={"dt": dt, "n_cells": nc, "n_ordinates": rule.n})


# -- stationary coupled system ------------------------------------------

def solve_stationary(spec, grid, rule, tol=1e-11, max_newton=100):
    """Steady transport-conduction solve by sweep elimination + Newton."""
    if not spec.stationary:
        raise ContractViolation("solve_stationary wants a grte_stationary problem")
    x = grid.nodes
    n = x.size
    h = grid.h
    sig = spec.sigma(x)
    mu = rule.nodes
    if n > 513:
        raise ContractViolation("stationary solver builds a dense (n+1)^2 matrix; "
                                "use at most 512 cells")

    # affine sweep maps: I_m = S_m B + b_m  for emission source B(x)
    M = np.zeros((n, n))
    bvec = np.zeros(n)
    for m in range(rule.n):
        mum = mu[m]
        S = np.zeros((n, n))
        b = np.zeros(n)
        if mum > 0:
            b[0] = spec.bc_left.value
            for i in range(1, n):
                aa = mum / h
                bb = sig[i] / spec.eps
                S[i] = (aa * S[i - 1]) / (aa + bb)
                S[i, i] += bb / (aa + bb)
                b[i] = (aa * b[i - 1]) / (aa + bb)
        else:
            b[-1] = spec.bc_right.value
            for i in range(n - 2, -1, -1):
                aa = -mum / h
                bb = sig[i] / spec.eps
                S[i] = (aa * S[i + 1]) / (aa + bb)
                S[i, i] += bb / (aa + bb)
                b[i] = (aa * b[i + 1]) / (aa + bb)
        M += 0.5 * rule.weights[m] * S
        bvec += 0.5 * rule.weights[m] * b

    lap = np.zeros((n, n))
    for i in range(1, n - 1):
        lap[i, i - 1] = lap[i, i + 1] = 1.0 / (h * h)
        lap[i, i] = -2.0 / (h * h)

    def emission(T):
        return spec.a * spec.c * T ** 4 / spec.s_d

    def mean_intensity(T):
        return M @ emission(T) + bvec

    def resid(T):
        F = spec.eps ** 2 * (lap @ T) + sig * (spec.s_d * mean_intensity(T)
                                               - spec.a * spec.c * T ** 4)
        F[0] = T[0] - spec.bc_left.T_value
        F[-1] = T[-1] - spec.bc_right.T_value
        return F

    T = spec.bc_left.T_value + (spec.bc_right.T_value - spec.bc_left.T_value) \
        * (x - x[0]) / (x[-1] - x[0])
    F = resid(T)

    def floor(T):
        # residual rounding floor: the eps^2/h^2 Laplacian entries and the
        # emission terms each contribute ~machine-eps relative noise
        scale = spec.eps ** 2 / (h * h) * max(1.0, float(np.max(np.abs(T)))) \
            + float(np.max(sig)) * spec.a * spec.c \
            * max(1.0, float(np.max(np.abs(T)))) ** 4
        return 100.0 * np.finfo(np.float64).eps * scale

    for _ in range(max_newton):
        if np.max(np.abs(F)) < max(tol, floor(T)):
            break
        p3 = 4.0 * spec.a * spec.c * T ** 3
        J = spec.eps ** 2 * lap + sig[:, None] * (M * p3[None, :]) - np.diag(sig * p3)
        J[0] = 0.0
        J[0, 0] = 1.0
        J[-1] = 0.0
        J[-1, -1] = 1.0
        dT = np.linalg.solve(J, -F)
        step_len = 1.0
        nf = float(np.linalg.norm(F))
        while step_len > 2 ** -30:
            Tc = T + step_len * dT
            Fc = resid(Tc)
            if np.all(np.isfinite(Fc)) and np.linalg.norm(Fc) <= nf * (1 - 1e-4 * step_len) + 1e-300:
                T, F = Tc, Fc
                break
            step_len *= 0.5
        else:
            if np.max(np.abs(F)) < max(tol, floor(T)):
                break  # stalled at the rounding floor: converged
            raise NumericalError("stationary Newton line search stalled")
    else:
        raise NumericalError("stationary Newton did not converge")
    rho = mean_intensity(T)
    _check_finite("stationary T", T)
    return ReferenceSolution(x=x, t=None, rho=rho, T=T, scheme="stationary_sweep",
                             meta={"n_cells": grid.n_cells, "n_ordinates": rule.n})


# -- labels and persistence ----------------------------------------------

def extract_labels(ref, spec, n_labels, seed, grid_shape=(50, 50)):
    """Pointwise labels on a coarse uniform grid, subsampled with `seed`.

    Material problems label the temperature, the linear model labels rho.
    Returns (points, values): points are (t,x) rows, or (x,) rows for
    stationary problems.
    """
    which = "T" if spec.has_material else "rho"
    if ref.t is None:
        xs = np.linspace(spec.x_range[0], spec.x_range[1], grid_shape[-1])
        pts = xs.reshape(-1, 1)
        vals = ref.interpolate(None, xs, which)
    else:
        ts = np.linspace(spec.t_range[0], spec.t_range[1], grid_shape[0])
        xs = np.linspace(spec.x_range[0], spec.x_range[1], grid_shape[1])
        tt, xx = np.meshgrid(ts, xs, indexing="ij")
        pts = np.column_stack([tt.ravel(), xx.ravel()])
        vals = ref.interpolate(tt.ravel(), xx.ravel(), which)
    if n_labels > pts.shape[0]:
        raise ContractViolation(
            f"{n_labels} labels requested from a grid of {pts.shape[0]} points")
    idx = np.random.default_rng(seed).choice(pts.shape[0], n_labels, replace=False)
    return pts[idx], np.asarray(vals).ravel()[idx]


_FMT = "%.17g"


def reference_to_csv(ref, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        fields = ["t", "x", "rho"] + (["T"] if ref.T is not None else [])
        w.writerow(fields)
        if ref.t is None:
            for j in range(ref.x.size):
                row = ["", _FMT % ref.x[j], _FMT % ref.rho[j]]
                if ref.T is not None:
                    row.append(_FMT % ref.T[j])
                w.writerow(row)
        else:
            for i in range(ref.t.size):
                for j in range(ref.x.size):
                    row = [_FMT % ref.t[i], _FMT % ref.x[j], _FMT % ref.rho[i, j]]
                    if ref.T is not None:
                        row.append(_FMT % ref.T[i, j])
                    w.writerow(row)


def save_reference(ref, path):
    """Exact binary cache (npz) of a ReferenceSolution."""
    arrays = {"x": ref.x, "rho": ref.rho}
    if ref.t is not None:
        arrays["t"] = ref.t
    if ref.T is not None:
        arrays["T"] = ref.T
    header = json.dumps({"scheme": ref.scheme, "meta": ref.meta}, sort_keys=True)
    arrays["header"] = np.frombuffer(header.encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_reference(path):
    with np.load(path) as z:
        header = json.loads(bytes(z["header"].tobytes()).decode())
        return ReferenceSolution(
            x=z["x"], rho=z["rho"],
            t=z["t"] if "t" in z.files else None,
            T=z["T"] if "T" in z.files else None,
            scheme=header["scheme"], meta=header["meta"])
