"""Experiment configuration: INI schema, validation, hashing.

One config file describes one experiment end to end: the physical problem,
the networks, sample counts, loss weights, optimizer, reference solver and
output requests. parse_config reports every violation at once rather than
stopping at the first, since configs are usually edited in batches.
"""

import configparser
import hashlib
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .model import (BC_KINDS, MODEL_VARIANTS, PROBLEM_KINDS, BoundaryCondition,
                    InitialCondition, LossWeights, ProblemSpec, validate_problem)
from .net import OUTPUT_ACTIVATIONS, init_network
from .train import AdamHyper

SECTIONS = ("problem", "networks", "sampling", "weights", "optimizer",
            "reference", "outputs")

NET_NAMES = ("I", "g", "rho", "rho_T", "T")

_PROBLEM_KEYS = {"kind", "eps", "c", "a", "cv", "sigma0", "sigma",
                 "x_min", "x_max", "t_min", "t_max",
                 "bc_left", "bc_right", "initial", "variant"}
_SAMPLING_KEYS = {"n_interior", "n_boundary", "n_initial", "n_data",
                  "seed", "sobol_skip", "quadrature"}
_WEIGHT_KEYS = {"lambda0", "lambda1", "lambda2", "lambda3"}
_OPTIMIZER_KEYS = {"lr", "beta1", "beta2", "eps_hat", "max_steps",
                   "lr_schedule", "decay_factor", "decay_every"}
_REFERENCE_KEYS = {"scheme", "n_cells", "n_snapshots", "cfl", "label_grid", "dt"}
_OUTPUT_KEYS = {"slice_times", "probe_x", "eval_points"}


@dataclass
class SamplingPlan:
    n_interior: int
    n_boundary: int
    n_initial: int
    n_data: int = 0
    seed: int = 0
    sobol_skip: int = 1
    quadrature: int = 10


@dataclass
class ReferencePlan:
    scheme: str
    n_cells: int = 100
    n_snapshots: int = 201
    cfl: float = 0.45
    label_grid: tuple = (50, 50)
    dt: float = 0.0  # 0 = solver default


@dataclass
class OutputPlan:
    slice_times: tuple
    probe_x: tuple = ()
    eval_points: int = 256


@dataclass
class ExperimentConfig:
    name: str
    spec: ProblemSpec
    networks: dict           # name -> (layer_sizes, output_activation)
    sampling: SamplingPlan
    weights: LossWeights
    optimizer: AdamHyper
    reference: ReferencePlan
    outputs: OutputPlan
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def variant(self):
        return self.spec.model_variant


def _coordinate_labels(spec):
    if spec.stationary:
        return ("x", "mu"), ("x",)
    return ("t", "x", "mu"), ("t", "x")


def build_networks(config, seed=None):
    """Instantiate the configured networks with per-net derived seeds."""
    import numpy as np
    kin_labels, flu_labels = _coordinate_labels(config.spec)
    if seed is None:
        seed = config.sampling.seed
    nets = {}
    for idx, name in enumerate(NET_NAMES):
        if name not in config.networks:
            continue
        sizes, act = config.networks[name]
        labels = kin_labels if name in ("I", "g") else flu_labels
        net_seed = int(np.random.SeedSequence((int(seed), idx)).generate_state(1)[0])
        nets[name] = init_network(list(sizes), labels, act, seed=net_seed)
    return nets


# -- parsing helpers -----------------------------------------------------

def _parse_bc(text):
    parts = text.split()
    if not parts:
        raise ValueError("empty boundary condition")
    kind = parts[0]
    if kind not in BC_KINDS:
        raise ValueError(f"bc kind {kind!r} not in {BC_KINDS}")
    value = 0.0
    T_value = 0.0
    rest = parts[1:]
    if rest and rest[0] != "T":
        value = float(rest[0])
        rest = rest[1:]
    if rest:
        if rest[0] != "T" or len(rest) != 2:
            raise ValueError(f"trailing tokens {rest!r} (expected 'T <value>')")
        T_value = float(rest[1])
    return BoundaryCondition(kind, value, T_value)


def _parse_field_desc(parts):
    if parts[0] == "constant" and len(parts) == 2:
        return ("constant", float(parts[1]))
    if parts[0] == "sinusoid" and len(parts) == 4:
        wn = parts[3]
        wavenumber = math.pi * float(wn[:-2] or 1.0) if wn.endswith("pi") else float(wn)
        return ("sinusoid", float(parts[1]), float(parts[2]), wavenumber)
    raise ValueError(f"unknown field description {' '.join(parts)!r}")


def _parse_initial(text):
    parts = text.split()
    if parts[0] == "none":
        return InitialCondition("none")
    if parts[0] == "zero":
        if len(parts) > 1:
            return InitialCondition("zero", _parse_field_desc(parts[1:]))
        return InitialCondition("zero")
    if parts[0] == "equilibrium":
        return InitialCondition("equilibrium", _parse_field_desc(parts[1:]))
    raise ValueError(f"unknown initial condition {text!r}")


def _parse_sigma(text):
    parts = text.split()
    if parts[0] == "constant" and len(parts) == 2:
        return ("constant", float(parts[1]))
    if parts[0] == "quadratic" and len(parts) == 3:
        return ("quadratic", float(parts[1]), float(parts[2]))
    raise ValueError(f"unknown opacity description {text!r}")


def _parse_lambda(text):
    vals = [float(v) for v in text.split()]
    if not vals:
        raise ValueError("empty weight")
    return vals[0] if len(vals) == 1 else tuple(vals)


class _Collector:
    """Gathers violations; reads typed values with error capture."""

    def __init__(self, raw):
        self.raw = raw
        self.bad = []

    def has(self, section, key):
        return key in self.raw.get(section, {})

    def get(self, section, key, conv, required=True, default=None):
        sec = self.raw.get(section, {})
        if key not in sec:
            if required:
                self.bad.append(f"[{section}] missing required key '{key}'")
            return default
        try:
            return conv(sec[key])
        except (ValueError, TypeError) as exc:
            self.bad.append(f"[{section}] {key}: {exc}")
            return default


def load_raw(path):
    """Read the INI file into {section: {key: string}} without validation."""
    if not os.path.exists(path):
        raise ConfigurationError([f"config file not found: {path}"])
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    cp.optionxform = str  # keep key case (net names are case sensitive)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigurationError([f"malformed config: {exc}"]) from None
    return {s: dict(cp.items(s)) for s in cp.sections()}


def apply_overrides(raw, overrides):
    """Apply 'section.key=value' strings onto the raw map (in place)."""
    bad = []
    for item in overrides or ():
        if "=" not in item:
            bad.append(f"override {item!r} is not of the form section.key=value")
            continue
        target, value = item.split("=", 1)
        if "." not in target:
            bad.append(f"override {item!r} is not of the form section.key=value")
            continue
        section, key = target.split(".", 1)
        if section not in SECTIONS:
            bad.append(f"override names unknown section [{section}]")
            continue
        raw.setdefault(section, {})[key] = value
    if bad:
        raise ConfigurationError(bad)
    return raw


def build_config(raw, name="config"):
    """Validate the raw map and build an ExperimentConfig; collects every
    violation into one ConfigurationError."""
    c = _Collector(raw)

    known = {"problem": _PROBLEM_KEYS, "sampling": _SAMPLING_KEYS,
             "weights": _WEIGHT_KEYS, "optimizer": _OPTIMIZER_KEYS,
             "reference": _REFERENCE_KEYS, "outputs": _OUTPUT_KEYS}
    for section, keys in raw.items():
        if section not in SECTIONS:
            c.bad.append(f"unknown section [{section}]")
            continue
        if section == "networks":
            for key in keys:
                base = key[:-len("_activation")] if key.endswith("_activation") else key
                if base not in NET_NAMES:
                    c.bad.append(f"[networks] unknown network {base!r}")
            continue
        for key in keys:
            if key not in known[section]:
                c.bad.append(f"[{section}] unknown key '{key}'")

    kind = c.get("problem", "kind", str)
    stationary = kind == "grte_stationary"
    eps = c.get("problem", "eps", float)
    if kind is not None and kind not in PROBLEM_KINDS:
        c.bad.append(f"[problem] kind {kind!r} not in {PROBLEM_KINDS}")
    variant = c.get("problem", "variant", str)
    if variant is not None and variant not in MODEL_VARIANTS:
        c.bad.append(f"[problem] variant {variant!r} not in {MODEL_VARIANTS}")
    x_min = c.get("problem", "x_min", float)
    x_max = c.get("problem", "x_max", float)
    t_min = c.get("problem", "t_min", float, required=not stationary, default=0.0)
    t_max = c.get("problem", "t_max", float, required=not stationary, default=1.0)
    sigma_desc = c.get("problem", "sigma", _parse_sigma)
    bc_left = c.get("problem", "bc_left", _parse_bc)
    bc_right = c.get("problem", "bc_right", _parse_bc)
    if stationary:
        ic = InitialCondition("none")
    else:
        ic = c.get("problem", "initial", _parse_initial)

    spec = None
    if not c.bad:
        spec = ProblemSpec(
            kind=kind, eps=eps,
            c=c.get("problem", "c", float, required=False, default=1.0),
            a=c.get("problem", "a", float, required=False, default=1.0),
            cv=c.get("problem", "cv", float, required=False, default=1.0),
            sigma0=c.get("problem", "sigma0", float, required=False, default=1.0),
            x_range=(x_min, x_max), t_range=(t_min, t_max),
            sigma_desc=sigma_desc, bc_left=bc_left, bc_right=bc_right,
            ic=ic, model_variant=variant)
        try:
            validate_problem(spec)
        except Exception as exc:
            c.bad.append(f"[problem] {exc}")

    networks = {}
    net_sec = raw.get("networks", {})
    if not raw.get("networks"):
        c.bad.append("[networks] missing section or empty")
    for key, text in net_sec.items():
        if key.endswith("_activation"):
            continue
        if key not in NET_NAMES:
            continue
        try:
            sizes = [int(v) for v in text.split()]
            if len(sizes) < 2 or any(s <= 0 for s in sizes):
                raise ValueError(f"bad layer sizes {sizes}")
        except ValueError as exc:
            c.bad.append(f"[networks] {key}: {exc}")
            continue
        act = net_sec.get(key + "_activation", "identity")
        if act not in OUTPUT_ACTIVATIONS:
            c.bad.append(f"[networks] {key}_activation {act!r} "
                         f"not in {OUTPUT_ACTIVATIONS}")
            continue
        networks[key] = (tuple(sizes), act)

    if spec is not None and networks:
        _check_network_set(c, spec, networks)

    sampling = SamplingPlan(
        n_interior=c.get("sampling", "n_interior", int),
        n_boundary=c.get("sampling", "n_boundary", int),
        n_initial=c.get("sampling", "n_initial", int,
                        required=not stationary, default=0),
        n_data=c.get("sampling", "n_data", int, required=False, default=0),
        seed=c.get("sampling", "seed", int, required=False, default=0),
        sobol_skip=c.get("sampling", "sobol_skip", int, required=False, default=1),
        quadrature=c.get("sampling", "quadrature", int, required=False, default=10))
    for fname in ("n_interior", "n_boundary"):
        v = getattr(sampling, fname)
        if v is not None and v <= 0:
            c.bad.append(f"[sampling] {fname} must be positive, got {v}")
    if sampling.quadrature is not None and not (1 <= sampling.quadrature <= 64):
        c.bad.append("[sampling] quadrature must be in [1, 64]")

    weights = None
    lam = {k: c.get("weights", k, _parse_lambda) for k in
           ("lambda0", "lambda1", "lambda2", "lambda3")}
    if all(v is not None for v in lam.values()):
        try:
            weights = LossWeights(**lam)
        except Exception as exc:
            c.bad.append(f"[weights] {exc}")

    optimizer = None
    opt_kwargs = dict(
        lr=c.get("optimizer", "lr", float, required=False, default=1e-3),
        beta1=c.get("optimizer", "beta1", float, required=False, default=0.9),
        beta2=c.get("optimizer", "beta2", float, required=False, default=0.999),
        eps_hat=c.get("optimizer", "eps_hat", float, required=False, default=1e-8),
        max_steps=c.get("optimizer", "max_steps", int),
        lr_schedule=c.get("optimizer", "lr_schedule", str,
                          required=False, default="step_decay"),
        decay_factor=c.get("optimizer", "decay_factor", float,
                           required=False, default=0.5),
        decay_every=c.get("optimizer", "decay_every", int,
                          required=False, default=20_000))
    if opt_kwargs["max_steps"] is not None:
        try:
            optimizer = AdamHyper(**opt_kwargs)
        except Exception as exc:
            c.bad.append(f"[optimizer] {exc}")

    scheme = c.get("reference", "scheme", str)
    if scheme is not None and scheme not in ("sn", "diffusion", "stationary"):
        c.bad.append(f"[reference] scheme {scheme!r} not in (sn, diffusion, stationary)")
    reference = ReferencePlan(
        scheme=scheme,
        n_cells=c.get("reference", "n_cells", int, required=False, default=100),
        n_snapshots=c.get("reference", "n_snapshots", int, required=False, default=201),
        cfl=c.get("reference", "cfl", float, required=False, default=0.45),
        label_grid=c.get("reference", "label_grid",
                         lambda s: tuple(int(v) for v in s.split()),
                         required=False, default=(50, 50)),
        dt=c.get("reference", "dt", float, required=False, default=0.0))

    outputs = OutputPlan(
        slice_times=c.get("outputs", "slice_times",
                          lambda s: tuple(float(v) for v in s.split()),
                          required=not stationary, default=()),
        probe_x=c.get("outputs", "probe_x",
                      lambda s: tuple(float(v) for v in s.split()),
                      required=False, default=()),
        eval_points=c.get("outputs", "eval_points", int,
                          required=False, default=256))

    # cross-section invariants
    if variant in ("mdapnn", "data_driven"):
        if sampling.n_data is not None and sampling.n_data <= 0:
            c.bad.append(f"[sampling] variant {variant} needs n_data > 0")
        if weights is not None and _scalar_max(weights.lambda0) <= 0:
            c.bad.append(f"[weights] variant {variant} needs lambda0 > 0")
    elif variant in ("pinn", "apnn"):
        if weights is not None and _scalar_max(weights.lambda0) != 0:
            c.bad.append(f"[weights] variant {variant} takes lambda0 = 0")

    if c.bad:
        raise ConfigurationError(sorted(c.bad))
    return ExperimentConfig(name=name, spec=spec, networks=networks,
                            sampling=sampling, weights=weights,
                            optimizer=optimizer, reference=reference,
                            outputs=outputs, raw=raw)


def _scalar_max(v):
    try:
        return max(v)
    except TypeError:
        return v


def _check_network_set(c, spec, networks):
    kin_labels, flu_labels = _coordinate_labels(spec)
    need = []
    if spec.model_variant == "pinn":
        need.append("I")
        if spec.has_material:
            need.append("T")
    else:
        need.append("g")
        if "rho_T" in networks:
            pass
        else:
            need.append("rho")
            if spec.has_material:
                need.append("T")
    for name in need:
        if name not in networks:
            c.bad.append(f"[networks] variant {spec.model_variant} on this problem "
                         f"needs a '{name}' network")
    expected_in = {"I": len(kin_labels), "g": len(kin_labels),
                   "rho": len(flu_labels), "rho_T": len(flu_labels),
                   "T": len(flu_labels)}
    expected_out = {"I": 1, "g": 1, "rho": 1, "rho_T": 2, "T": 1}
    for name, (sizes, _act) in networks.items():
        if sizes[0] != expected_in[name]:
            c.bad.append(f"[networks] {name} input width {sizes[0]} != "
                         f"{expected_in[name]} coordinates")
        if sizes[-1] != expected_out[name]:
            c.bad.append(f"[networks] {name} output width {sizes[-1]} != "
                         f"{expected_out[name]}")


def parse_config(path, overrides=()):
    raw = load_raw(path)
    apply_overrides(raw, overrides)
    name = os.path.splitext(os.path.basename(path))[0]
    return build_config(raw, name=name)


def config_hash(config):
    """12-hex digest of the effective configuration (sections sorted)."""
    lines = []
    for section in sorted(config.raw):
        for key in sorted(config.raw[section]):
            value = " ".join(str(config.raw[section][key]).split())
            lines.append(f"{section}.{key}={value}")
    digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()
    return digest[:12]
