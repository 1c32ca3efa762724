"""Problem descriptions, micro-macro residuals and loss assemblies.

The radiative transfer unknown I(t,x,mu) is decomposed as

    I = rho + (eps / sqrt(sigma0)) g,     rho = <I>,  <g> = 0,

with <.> = (1/2) integral over mu in [-1,1] (angular measure s_d = 2).
The governing residuals below are the micro, macro and material balance
equations of that decomposition; their eps -> 0 limits are regular, which
is what makes the least-squares loss usable across regimes.

Three loss assemblies are provided:

    loss_mdapnn     micro-macro form, optional labeled-data term
    loss_pinn       unsplit form on I (and T), no conservation term
    loss_stationary micro-macro form of the steady coupled system

Boundary and initial terms are lists of named residuals in a documented
order so per-term weight vectors line up:

    dirichlet pair       [bdry_left, bdry_right]
    reflecting left      [rho_x_left, g_mirror_left]
    dirichlet_split face [rho_pin, g_absorb]
    periodic pair        [rho_match, g_match]
    stationary           [bdry_left, bdry_right, T_left, T_right]
    initial, zero start        [init_I]  (+ [init_T] if material coupling)
    initial, equilibrium start [init_rho_planck, init_g, init_T]
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ContractViolation
from .net import forward, forward_jet, Jet

PROBLEM_KINDS = ("linear_transport", "grte_timedep", "grte_stationary")
BC_KINDS = ("dirichlet", "dirichlet_split", "reflecting", "periodic")
IC_KINDS = ("zero", "equilibrium", "none")
MODEL_VARIANTS = ("pinn", "apnn", "mdapnn", "data_driven")


@dataclass
class BoundaryCondition:
    kind: str
    value: float = 0.0    # inflow intensity I_B for the dirichlet kinds
    T_value: float = 0.0  # wall temperature pin, stationary problems only


@dataclass
class InitialCondition:
    kind: str
    T0_desc: tuple = ("constant", 1.0)

    def T0(self, x):
        return _field_of(self.T0_desc, x)


def _field_of(desc, x):
    x = np.asarray(x, dtype=np.float64)
    if desc[0] == "constant":
        return np.full_like(x, float(desc[1]))
    if desc[0] == "sinusoid":
        mean, amp, wavenumber = (float(v) for v in desc[1:4])
        return mean + amp * np.sin(wavenumber * x)
    raise ContractViolation(f"unknown field description {desc!r}")


@dataclass
class ProblemSpec:
    kind: str
    eps: float
    c: float = 1.0
    a: float = 1.0
    cv: float = 1.0
    sigma0: float = 1.0
    s_d: float = 2.0
    x_range: tuple = (0.0, 1.0)
    t_range: tuple = (0.0, 1.0)  # ignored for the stationary kind
    sigma_desc: tuple = ("constant", 1.0)
    bc_left: BoundaryCondition = field(default_factory=lambda: BoundaryCondition("dirichlet", 1.0))
    bc_right: BoundaryCondition = field(default_factory=lambda: BoundaryCondition("dirichlet", 0.0))
    ic: InitialCondition = field(default_factory=lambda: InitialCondition("zero"))
    model_variant: str = "mdapnn"

    def sigma(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.sigma_desc[0] == "constant":
            return np.full_like(x, float(self.sigma_desc[1]))
        if self.sigma_desc[0] == "quadratic":
            s0, s1 = float(self.sigma_desc[1]), float(self.sigma_desc[2])
            return s0 + (s1 * x) ** 2
        raise ContractViolation(f"unknown opacity description {self.sigma_desc!r}")

    def planck_rho(self, T):
        """Angular mean of the Planckian at temperature T: a c T^4 / s_d."""
        return self.a * self.c * np.asarray(T, dtype=np.float64) ** 4 / self.s_d

    @property
    def stationary(self):
        return self.kind == "grte_stationary"

    @property
    def has_material(self):
        return self.kind in ("grte_timedep", "grte_stationary")


def validate_problem(spec):
    """Raise ContractViolation on any inconsistency; return spec unchanged."""
    bad = []
    if spec.kind not in PROBLEM_KINDS:
        bad.append(f"kind {spec.kind!r} not in {PROBLEM_KINDS}")
    if not (spec.eps > 0):
        bad.append(f"eps must be positive, got {spec.eps}")
    if not (spec.sigma0 > 0):
        bad.append(f"sigma0 must be positive, got {spec.sigma0}")
    if spec.x_range[1] <= spec.x_range[0]:
        bad.append(f"empty x_range {spec.x_range}")
    if not spec.stationary and spec.t_range[1] <= spec.t_range[0]:
        bad.append(f"empty t_range {spec.t_range}")
    xs = np.linspace(spec.x_range[0], spec.x_range[1], 257)
    if bad == [] and np.min(spec.sigma(xs)) <= 0:
        bad.append("opacity is not positive on the domain")
    for side, bc in (("left", spec.bc_left), ("right", spec.bc_right)):
        if bc.kind not in BC_KINDS:
            bad.append(f"{side} bc kind {bc.kind!r} not in {BC_KINDS}")
    if (spec.bc_left.kind == "periodic") != (spec.bc_right.kind == "periodic"):
        bad.append("periodic faces must come in a pair")
    if spec.ic.kind not in IC_KINDS:
        bad.append(f"ic kind {spec.ic.kind!r} not in {IC_KINDS}")
    if spec.stationary and spec.ic.kind != "none":
        bad.append("stationary problems take ic kind 'none'")
    if not spec.stationary and spec.ic.kind == "none":
        bad.append("time dependent problems need an initial condition")
    if spec.kind == "linear_transport" and spec.ic.kind == "equilibrium":
        bad.append("equilibrium start needs the material coupling")
    if spec.stationary and "periodic" in (spec.bc_left.kind, spec.bc_right.kind):
        bad.append("stationary problems use wall boundary conditions")
    if spec.model_variant not in MODEL_VARIANTS:
        bad.append(f"model variant {spec.model_variant!r} not in {MODEL_VARIANTS}")
    if bad:
        raise ContractViolation("; ".join(bad))
    return spec


@dataclass
class LossWeights:
    """lambda0 data, lambda1 boundary, lambda2 initial, lambda3 conservation.

    lambda1 / lambda2 may be scalars (applied to every term) or sequences
    matching the problem's boundary / initial term counts.
    """

    lambda0: float = 0.0
    lambda1: object = 1.0
    lambda2: object = 1.0
    lambda3: float = 1.0

    def boundary_vector(self, n):
        return _weight_vector(self.lambda1, n, "lambda1")

    def initial_vector(self, n):
        return _weight_vector(self.lambda2, n, "lambda2")


def _weight_vector(lam, n, name):
    arr = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ContractViolation(f"{name} has {arr.size} entries, problem has {n} terms")
    if np.any(arr < 0):
        raise ContractViolation(f"{name} entries must be nonnegative")
    return arr


@dataclass
class LossBreakdown:
    """Weighted loss groups (floats) plus every named term unweighted."""

    governing: float
    boundary: float
    initial: float
    conservation: float
    data: float
    total: float
    terms: dict = field(default_factory=dict)

    GROUPS = ("governing", "boundary", "initial", "conservation", "data")


# -- pointwise residuals (tape level) ---------------------------------

def residual_micro(spec, g_jet, flux_mean, rho_jet, x, mu):
    """Micro balance; all eps-scaled terms stay, the residual is O(1) in eps."""
    sig = spec.sigma(x)
    sq0 = math.sqrt(spec.sigma0)
    r = ad.scale(rho_jet.d_x, sq0 * mu) + ad.scale(g_jet.value, sig)
    r = r + ad.scale(g_jet.d_x, spec.eps * mu) + ad.scale(flux_mean, -spec.eps)
    if not spec.stationary:
        r = r + ad.scale(g_jet.d_t, spec.eps ** 2 / spec.c)
    return r


def residual_macro(spec, rho_jet, flux_mean, T_jet=None):
    if spec.stationary:
        return T_jet.d_xx + ad.scale(flux_mean, 2.0 / math.sqrt(spec.sigma0))
    r = ad.scale(rho_jet.d_t, 1.0 / spec.c) + ad.scale(flux_mean, 1.0 / math.sqrt(spec.sigma0))
    if spec.has_material:
        r = r + ad.scale(T_jet.d_t, spec.cv / spec.s_d)
    return r


def residual_material(spec, T_jet, rho_value, x):
    sig = spec.sigma(x)
    relax = ad.scale(rho_value, sig * spec.s_d) + ad.scale(T_jet.value ** 4, -sig * spec.a * spec.c)
    if spec.stationary:
        return ad.scale(T_jet.d_xx, spec.eps ** 2) + ad.scale(relax, -1.0)
    return ad.scale(T_jet.d_t, spec.eps ** 2 * spec.cv) + ad.scale(relax, -1.0)


def residual_conservation(g_quad_values, rule):
    """<g> at each collocation point; g_quad_values is (n, N_s)."""
    return ad.rowdot(g_quad_values, 0.5 * rule.weights)


def residual_data(pred_values, labels):
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if pred_values.value.shape != labels.shape:
        raise ContractViolation(
            f"{pred_values.value.shape} predictions vs {labels.shape} labels")
    return pred_values + (-labels)


# -- field access helpers ----------------------------------------------

def _jet_col(jet, j):
    pick = lambda t: None if t is None else t.col(j)
    return Jet(value=pick(jet.value), d_t=pick(jet.d_t),
               d_x=pick(jet.d_x), d_xx=pick(jet.d_xx))


def rho_jet_of(nets, pts, channels):
    if "rho_T" in nets:
        return _jet_col(forward_jet(nets["rho_T"], pts, channels), 0)
    return forward_jet(nets["rho"], pts, channels)


def T_jet_of(nets, pts, channels):
    if "rho_T" in nets:
        return _jet_col(forward_jet(nets["rho_T"], pts, channels), 1)
    return forward_jet(nets["T"], pts, channels)


def rho_values_of(nets, pts):
    if "rho_T" in nets:
        return forward(nets["rho_T"], pts).col(0)
    return forward(nets["rho"], pts)


def T_values_of(nets, pts):
    if "rho_T" in nets:
        return forward(nets["rho_T"], pts).col(1)
    return forward(nets["T"], pts)


def _msq(r):
    return (r * r).mean()


def _with_x(face_samples, spec, stationary):
    """Point arrays for one face: kinetic (t|x|mu) and fluid (t|x) blocks."""
    xb = {"left": spec.x_range[0], "right": spec.x_range[1]}[face_samples.face]
    if stationary:
        mu = face_samples.mu.reshape(-1, 1)
        kin = np.column_stack([np.full(mu.size, xb), mu.ravel()])
        flu = np.array([[xb]])
        return kin, flu, mu
    t = face_samples.t.reshape(-1, 1)
    mu = face_samples.mu.reshape(-1, 1)
    kin = np.column_stack([t.ravel(), np.full(t.size, xb), mu.ravel()])
    flu = np.column_stack([t.ravel(), np.full(t.size, xb)])
    return kin, flu, mu


# -- boundary and initial term lists -----------------------------------

def boundary_terms_mm(spec, nets, boundary_samples):
    """Micro-macro boundary residual list in the documented order."""
    terms = []
    sq0 = math.sqrt(spec.sigma0)
    done_periodic = False
    for fs in boundary_samples:
        if fs.kind == "periodic":
            if done_periodic:
                continue
            done_periodic = True
            t = fs.t.reshape(-1, 1)
            mu = fs.mu.reshape(-1, 1)
            xl, xr = spec.x_range
            flu_l = np.column_stack([t.ravel(), np.full(t.size, xl)])
            flu_r = np.column_stack([t.ravel(), np.full(t.size, xr)])
            kin_l = np.column_stack([t.ravel(), np.full(t.size, xl), mu.ravel()])
            kin_r = np.column_stack([t.ravel(), np.full(t.size, xr), mu.ravel()])
            rl, rr = rho_values_of(nets, flu_l), rho_values_of(nets, flu_r)
            gl, gr = forward(nets["g"], kin_l), forward(nets["g"], kin_r)
            terms.append(("bdry_rho_match", rl + ad.scale(rr, -1.0)))
            terms.append(("bdry_g_match", gl + ad.scale(gr, -1.0)))
            continue
        kin, flu, mu = _with_x(fs, spec, spec.stationary)
        side = fs.face
        bc = spec.bc_left if side == "left" else spec.bc_right
        if fs.kind == "dirichlet":
            # inflow-only: rho + (eps/sqrt(sigma0)) g = I_B; rho_b broadcasts
            # against g_b when the fluid block is a single stationary point
            rho_b = rho_values_of(nets, flu)
            g_b = forward(nets["g"], kin)
            mismatch = rho_b + ad.scale(g_b, spec.eps / sq0) + (-bc.value)
            terms.append((f"bdry_{side}", mismatch))
        elif fs.kind == "dirichlet_split":
            rho_b = rho_values_of(nets, flu)
            g_b = forward(nets["g"], kin)
            terms.append((f"bdry_rho_pin_{side}", rho_b + (-bc.value)))
            terms.append((f"bdry_g_absorb_{side}", g_b))
        elif fs.kind == "reflecting":
            rho_jet = rho_jet_of(nets, flu, ("d_x",))
            kin_m = kin.copy()
            kin_m[:, -1] *= -1.0
            g_in = forward(nets["g"], kin)
            g_out = forward(nets["g"], kin_m)
            terms.append((f"bdry_rho_x_{side}", rho_jet.d_x))
            terms.append((f"bdry_g_mirror_{side}", g_in + ad.scale(g_out, -1.0)))
        else:
            raise ContractViolation(f"unhandled bc kind {fs.kind}")
    if spec.stationary:
        # temperature pins at the walls ride along as extra terms
        for side, xb, val in (("left", spec.x_range[0], spec.bc_left.T_value),
                              ("right", spec.x_range[1], spec.bc_right.T_value)):
            Tb = T_values_of(nets, np.array([[xb]]))
            terms.append((f"bdry_T_{side}", Tb + (-val)))
    return terms


def initial_terms_mm(spec, nets, initial_pts):
    if spec.stationary:
        return []
    x = initial_pts[:, 0].reshape(-1, 1)
    mu = initial_pts[:, 1].reshape(-1, 1)
    t0 = np.full(x.size, spec.t_range[0])
    flu = np.column_stack([t0, x.ravel()])
    kin = np.column_stack([t0, x.ravel(), mu.ravel()])
    sq0 = math.sqrt(spec.sigma0)
    g0 = forward(nets["g"], kin)
    rho0 = rho_values_of(nets, flu)
    if spec.ic.kind == "equilibrium":
        T0net = T_values_of(nets, flu)
        planck = ad.scale(T0net ** 4, spec.a * spec.c / spec.s_d)
        T0 = spec.ic.T0(x)
        return [("init_rho_planck", rho0 + ad.scale(planck, -1.0)),
                ("init_g", g0),
                ("init_T", T_values_of(nets, flu) + (-T0))]
    # zero start: vacuum field, I(0,x,mu) = 0
    terms = [("init_I", rho0 + ad.scale(g0, spec.eps / sq0))]
    if spec.has_material:
        T0 = spec.ic.T0(x)
        terms.append(("init_T", T_values_of(nets, flu) + (-T0)))
    return terms


# -- loss assemblies ----------------------------------------------------

def _interior_blocks(spec, samples, rule):
    pts = samples.interior
    n = pts.shape[0]
    ns = rule.n
    if spec.stationary:
        x = pts[:, 0].reshape(-1, 1)
        mu = pts[:, 1].reshape(-1, 1)
        base = x
        qpts = np.column_stack([np.repeat(x.ravel(), ns), np.tile(rule.nodes, n)])
    else:
        t = pts[:, 0].reshape(-1, 1)
        x = pts[:, 1].reshape(-1, 1)
        mu = pts[:, 2].reshape(-1, 1)
        base = np.column_stack([t.ravel(), x.ravel()])
        qpts = np.column_stack([np.repeat(t.ravel(), ns), np.repeat(x.ravel(), ns),
                                np.tile(rule.nodes, n)])
    return pts, base, x, mu, qpts, n, ns


def _mm_interior(spec, nets, samples, rule):
    pts, base, x, mu, qpts, n, ns = _interior_blocks(spec, samples, rule)
    g_channels = ("d_x",) if spec.stationary else ("d_t", "d_x")
    g_jet = forward_jet(nets["g"], pts, g_channels)
    gq = forward_jet(nets["g"], qpts, ("d_x",))
    flux_mean = ad.rowdot(gq.d_x.reshape((n, ns)), 0.5 * rule.weights * rule.nodes)
    cons = residual_conservation(gq.value.reshape((n, ns)), rule)
    if spec.stationary:
        rt_jet = forward_jet(nets["rho_T"], base, ("d_x", "d_xx"))
        rho_jet = _jet_col(rt_jet, 0)
        T_jet = _jet_col(rt_jet, 1)
        micro = residual_micro(spec, g_jet, flux_mean, rho_jet, x, mu)
        macro = residual_macro(spec, rho_jet, flux_mean, T_jet)
        material = residual_material(spec, T_jet, rho_jet.value, x)
        return micro, macro, material, cons
    if spec.has_material:
        if "rho_T" in nets:
            rt_jet = forward_jet(nets["rho_T"], base, ("d_t", "d_x"))
            rho_jet, T_jet = _jet_col(rt_jet, 0), _jet_col(rt_jet, 1)
        else:
            rho_jet = forward_jet(nets["rho"], base, ("d_t", "d_x"))
            T_jet = forward_jet(nets["T"], base, ("d_t",))
        micro = residual_micro(spec, g_jet, flux_mean, rho_jet, x, mu)
        macro = residual_macro(spec, rho_jet, flux_mean, T_jet)
        material = residual_material(spec, T_jet, rho_jet.value, x)
        return micro, macro, material, cons
    rho_jet = forward_jet(nets["rho"], base, ("d_t", "d_x"))
    micro = residual_micro(spec, g_jet, flux_mean, rho_jet, x, mu)
    macro = residual_macro(spec, rho_jet, flux_mean, None)
    return micro, macro, None, cons


def _assemble(named_weighted):
    """Sum weighted scalar tensors in fixed order; return (total, breakdown)."""
    total = None
    groups = {g: 0.0 for g in LossBreakdown.GROUPS}
    terms = {}
    for group, name, lam, msq_tensor in named_weighted:
        val = float(np.asarray(msq_tensor.value).reshape(()))
        terms[name] = val
        if lam == 0.0:
            groups[group] += 0.0
            continue
        piece = ad.scale(msq_tensor, lam)
        groups[group] += float(lam) * val
        total = piece if total is None else total + piece
    if total is None:
        total = ad.Tensor(np.zeros(()))
    bd = LossBreakdown(total=float(np.asarray(total.value).reshape(())),
                       terms=terms, **groups)
    return total, bd


def loss_mdapnn(nets, samples, weights, spec, rule):
    """Micro-macro loss with optional labeled-data term.

    Returns (total loss Tensor, LossBreakdown). The asymptotic-preserving
    variant is the same assembly with weights.lambda0 = 0; the pure
    data-driven variant zeroes everything except lambda0.
    """
    micro, macro, material, cons = _mm_interior(spec, nets, samples, rule)
    pieces = [("governing", "micro", 1.0, _msq(micro)),
              ("governing", "macro", 1.0, _msq(macro))]
    if material is not None:
        pieces.append(("governing", "material", 1.0, _msq(material)))
    b_terms = boundary_terms_mm(spec, nets, samples.boundary)
    lam1 = weights.boundary_vector(len(b_terms))
    for lam, (name, r) in zip(lam1, b_terms):
        pieces.append(("boundary", name, float(lam), _msq(r)))
    i_terms = initial_terms_mm(spec, nets, samples.initial) if samples.initial is not None else []
    lam2 = weights.initial_vector(len(i_terms))
    for lam, (name, r) in zip(lam2, i_terms):
        pieces.append(("initial", name, float(lam), _msq(r)))
    pieces.append(("conservation", "conservation", float(weights.lambda3), _msq(cons)))
    if samples.data_points is not None and samples.data_values is not None:
        pts = np.asarray(samples.data_points, dtype=np.float64)
        pred = (T_values_of(nets, pts) if spec.has_material else rho_values_of(nets, pts))
        pieces.append(("data", "data", float(weights.lambda0),
                       _msq(residual_data(pred, samples.data_values))))
    elif weights.lambda0 != 0.0:
        raise ContractViolation("lambda0 > 0 but the sample set carries no labels")
    return _assemble(pieces)


def loss_stationary(nets, samples, weights, spec, rule):
    """Steady-state micro-macro loss; an alias with a stationary-spec check."""
    if not spec.stationary:
        raise ContractViolation("loss_stationary wants a grte_stationary problem")
    return loss_mdapnn(nets, samples, weights, spec, rule)


def _pinn_boundary(spec, nets, boundary_samples):
    terms = []
    done_periodic = False
    for fs in boundary_samples:
        if fs.kind == "periodic":
            if done_periodic:
                continue
            done_periodic = True
            t = fs.t.reshape(-1, 1)
            mu = fs.mu.reshape(-1, 1)
            xl, xr = spec.x_range
            kin_l = np.column_stack([t.ravel(), np.full(t.size, xl), mu.ravel()])
            kin_r = np.column_stack([t.ravel(), np.full(t.size, xr), mu.ravel()])
            terms.append(("bdry_I_match",
                          forward(nets["I"], kin_l) + ad.scale(forward(nets["I"], kin_r), -1.0)))
            continue
        kin, flu, mu = _with_x(fs, spec, spec.stationary)
        bc = spec.bc_left if fs.face == "left" else spec.bc_right
        if fs.kind in ("dirichlet", "dirichlet_split"):
            terms.append((f"bdry_{fs.face}", forward(nets["I"], kin) + (-bc.value)))
        elif fs.kind == "reflecting":
            kin_m = kin.copy()
            kin_m[:, -1] *= -1.0
            terms.append((f"bdry_I_mirror_{fs.face}",
                          forward(nets["I"], kin) + ad.scale(forward(nets["I"], kin_m), -1.0)))
        else:
            raise ContractViolation(f"unhandled bc kind {fs.kind}")
    if spec.stationary:
        for side, xb, val in (("left", spec.x_range[0], spec.bc_left.T_value),
                              ("right", spec.x_range[1], spec.bc_right.T_value)):
            Tb = forward(nets["T"], np.array([[xb]]))
            terms.append((f"bdry_T_{side}", Tb + (-val)))
    return terms


def loss_pinn(nets, samples, weights, spec, rule):
    """Least-squares loss on the unsplit equations for I (and T).

    The relaxation term keeps its 1/eps^2-stiff balance, so this loss loses
    the governing information as eps -> 0; it is the comparison baseline.
    """
    pts, base, x, mu, qpts, n, ns = _interior_blocks(spec, samples, rule)
    channels = ("d_x",) if spec.stationary else ("d_t", "d_x")
    I_jet = forward_jet(nets["I"], pts, channels)
    Iq = forward(nets["I"], qpts)
    I_mean = ad.rowdot(Iq.reshape((n, ns)), 0.5 * rule.weights)
    sig = spec.sigma(x)
    transport = ad.scale(I_jet.d_x, spec.eps * mu)
    if not spec.stationary:
        transport = transport + ad.scale(I_jet.d_t, spec.eps ** 2 / spec.c)
    if spec.has_material:
        T_channels = ("d_xx",) if spec.stationary else ("d_t",)
        T_jet = forward_jet(nets["T"], base, T_channels)
        planck = ad.scale(T_jet.value ** 4, spec.a * spec.c / spec.s_d)
        r1 = transport + ad.scale(planck + ad.scale(I_jet.value, -1.0), -sig)
        relax = ad.scale(I_mean, sig * spec.s_d) + ad.scale(T_jet.value ** 4, -sig * spec.a * spec.c)
        if spec.stationary:
            r2 = ad.scale(T_jet.d_xx, spec.eps ** 2) + ad.scale(relax, -1.0)
        else:
            r2 = ad.scale(T_jet.d_t, spec.eps ** 2 * spec.cv) + ad.scale(relax, -1.0)
        pieces = [("governing", "transport", 1.0, _msq(r1)),
                  ("governing", "material", 1.0, _msq(r2))]
    else:
        r1 = transport + ad.scale(I_mean + ad.scale(I_jet.value, -1.0), -sig)
        pieces = [("governing", "transport", 1.0, _msq(r1))]
    b_terms = _pinn_boundary(spec, nets, samples.boundary)
    lam1 = weights.boundary_vector(len(b_terms))
    for lam, (name, r) in zip(lam1, b_terms):
        pieces.append(("boundary", name, float(lam), _msq(r)))
    if samples.initial is not None and not spec.stationary:
        xi = samples.initial[:, 0].reshape(-1, 1)
        mui = samples.initial[:, 1].reshape(-1, 1)
        t0 = np.full(xi.size, spec.t_range[0])
        kin = np.column_stack([t0, xi.ravel(), mui.ravel()])
        flu = np.column_stack([t0, xi.ravel()])
        if spec.ic.kind == "equilibrium":
            I0 = spec.planck_rho(spec.ic.T0(xi))
        else:
            I0 = np.zeros_like(xi)
        i_terms = [("init_I", forward(nets["I"], kin) + (-I0))]
        if spec.has_material:
            i_terms.append(("init_T", forward(nets["T"], flu) + (-spec.ic.T0(xi))))
        lam2 = weights.initial_vector(len(i_terms))
        for lam, (name, r) in zip(lam2, i_terms):
            pieces.append(("initial", name, float(lam), _msq(r)))
    if samples.data_points is not None and samples.data_values is not None and spec.has_material:
        pred = forward(nets["T"], np.asarray(samples.data_points, dtype=np.float64))
        pieces.append(("data", "data", float(weights.lambda0),
                       _msq(residual_data(pred, samples.data_values))))
    return _assemble(pieces)


def governing_loss_value(nets, samples, spec, rule):
    """Unweighted governing loss (float) of the micro-macro assembly."""
    micro, macro, material, _ = _mm_interior(spec, nets, samples, rule)
    val = float(_msq(micro).value) + float(_msq(macro).value)
    if material is not None:
        val += float(_msq(material).value)
    return val


def governing_loss_limit(nets, samples, spec, rule):
    """Governing loss of the analytic eps -> 0 limit system on the same nets.

    Limit micro:    sqrt(sigma0) mu d_x rho + sigma g = 0
    Limit macro:    unchanged (it carries no eps)
    Limit material: sigma (s_d rho - a c T^4) = 0
    """
    zero_eps = replace(spec, eps=0.0)
    micro, macro, material, _ = _mm_interior(zero_eps, nets, samples, rule)
    val = float(_msq(micro).value) + float(_msq(macro).value)
    if material is not None:
        val += float(_msq(material).value)
    return val


def ap_limit_check(nets, samples, spec, rule, eps_values):
    """Governing-loss gap between finite eps and the analytic limit.

    Returns a list of dicts with keys eps, loss, loss_limit, gap, rel_gap,
    on the same networks and sample set for every eps.
    """
    limit = governing_loss_limit(nets, samples, spec, rule)
    out = []
    for eps in eps_values:
        val = governing_loss_value(nets, samples, replace(spec, eps=float(eps)), rule)
        gap = abs(val - limit)
        out.append({"eps": float(eps), "loss": val, "loss_limit": limit,
                    "gap": gap, "rel_gap": gap / max(abs(limit), 1e-300)})
    return out
