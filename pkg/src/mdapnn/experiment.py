"""Experiment orchestration: reference runs, training runs, evaluation.

Artifacts live under one output directory per experiment:

    cache/ref-<hash>.npz     binary reference cache (hash of problem+reference)
    reference.csv            delimited dump of the reference fields
    samples.csv              collocation points (and labels, if any)
    loss_history.csv         training history, one row per logged step
    state.npz                final parameters + optimizer state
    results.csv / .json      the evaluation table
    plots/*.csv              (x, value) series per curve per slice time
    figures/*.png            rendered comparison figures

Everything downstream of a seed is deterministic, so rerunning any step
with the same config and seed reproduces identical bytes.
"""

import csv
import json
import os
import time

import numpy as np

from .config import build_networks, config_hash
from .errors import ConfigurationError, ContractViolation
from .net import ParamVector, forward_values
from .sampling import attach_labels, build_sample_sets, gauss_legendre
from .solvers import (Grid1D, extract_labels, load_reference, reference_to_csv,
                      save_reference, solve_diffusion_limit, solve_stationary,
                      solve_transport_sn)
from .train import (history_to_csv, l2_relative_error, load_training_state,
                    radiation_temperature, save_training_state, train)

_FMT = "%.17g"


# -- result table ---------------------------------------------------------

class ResultTable:
    """Rows of (quantity, time, error); errors must be nonnegative."""

    def __init__(self, rows=()):
        self.rows = [(str(q), float(t), float(e)) for q, t, e in rows]
        for q, t, e in self.rows:
            if e < 0:
                raise ContractViolation(f"negative error {e} for {q} at t={t}")

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def lookup(self, quantity, t=None, atol=1e-12):
        out = [e for q, tt, e in self.rows
               if q == quantity and (t is None or abs(tt - t) <= atol)]
        if not out:
            raise KeyError(f"no row for {quantity!r} at t={t}")
        return out[0] if t is not None else out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["quantity", "time", "error"])
            for q, t, e in self.rows:
                w.writerow([q, _FMT % t, _FMT % e])

    def to_json(self, path):
        payload = {"columns": ["quantity", "time", "error"],
                   "rows": [[q, t, e] for q, t, e in self.rows]}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            if header != ["quantity", "time", "error"]:
                raise ContractViolation(f"unexpected results header {header}")
            return cls([(q, float(t), float(e)) for q, t, e in r])

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        return cls(payload["rows"])


# -- cache ----------------------------------------------------------------

def reference_hash(config):
    """Digest over the sections the reference solution depends on."""
    lines = []
    for section in ("problem", "reference"):
        for key in sorted(config.raw.get(section, {})):
            if section == "problem" and key == "variant":
                continue  # the reference does not depend on the model choice
            value = " ".join(str(config.raw[section][key]).split())
            lines.append(f"{section}.{key}={value}")
    import hashlib
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


def reference_cache_path(config, out_dir):
    return os.path.join(out_dir, "cache", f"ref-{reference_hash(config)}.npz")


class _CacheLock:
    """Exclusive lock file guarding one cache entry across processes."""

    def __init__(self, path, timeout=120.0):
        self.path = path + ".lock"
        self.timeout = timeout
        self.fd = None

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                return self
            except FileExistsError:
                if time.monotonic() >= deadline:
                    raise TimeoutError(
                        f"cache lock {self.path} held for over {self.timeout}s; "
                        f"remove it if no other run is active") from None
                time.sleep(0.05)

    def __exit__(self, *exc):
        os.close(self.fd)
        os.unlink(self.path)
        return False


# -- reference mode -------------------------------------------------------

def run_reference(config, out_dir, force=False):
    """Produce (or reuse) the cached reference solution; dump reference.csv."""
    os.makedirs(os.path.join(out_dir, "cache"), exist_ok=True)
    cache = reference_cache_path(config, out_dir)
    if os.path.exists(cache) and not force:
        ref = load_reference(cache)
    else:
        with _CacheLock(cache):
            if os.path.exists(cache) and not force:
                ref = load_reference(cache)
            else:
                ref = _solve_reference(config)
                save_reference(ref, cache)
    reference_to_csv(ref, os.path.join(out_dir, "reference.csv"))
    return ref


def _solve_reference(config):
    spec, plan = config.spec, config.reference
    grid = Grid1D(plan.n_cells, spec.x_range)
    dt = plan.dt if plan.dt > 0 else None
    if plan.scheme == "diffusion":
        return solve_diffusion_limit(spec, grid, dt=dt,
                                     n_snapshots=plan.n_snapshots)
    rule = gauss_legendre(max(8, config.sampling.quadrature))
    if plan.scheme == "sn":
        return solve_transport_sn(spec, grid, rule, dt=dt, cfl=plan.cfl,
                                  n_snapshots=plan.n_snapshots)
    return solve_stationary(spec, grid, rule)


def _require_reference(config, out_dir):
    cache = reference_cache_path(config, out_dir)
    if not os.path.exists(cache):
        raise FileNotFoundError(
            f"no reference cache at {cache}; run the 'reference' mode with "
            f"the same config and output directory first")
    return load_reference(cache)


# -- train mode -----------------------------------------------------------

def build_samples(config, ref=None):
    """Collocation points for the config, with labels when the variant
    consumes data (which requires a reference solution)."""
    s = config.sampling
    samples = build_sample_sets(config.spec, s.n_interior, s.n_boundary,
                                s.n_initial, seed=s.seed)
    if config.variant in ("mdapnn", "data_driven"):
        if ref is None:
            raise ContractViolation(
                f"variant {config.variant} needs labels from a reference run")
        pts, vals = extract_labels(ref, config.spec, s.n_data, seed=s.seed,
                                   grid_shape=config.reference.label_grid)
        samples = attach_labels(samples, pts, vals)
    return samples


def run_train(config, out_dir, seed=None):
    """Train the configured variant; persist history, samples and state."""
    os.makedirs(out_dir, exist_ok=True)
    if seed is None:
        seed = config.sampling.seed
    ref = None
    if config.variant in ("mdapnn", "data_driven"):
        ref = run_reference(config, out_dir)  # cached after the first call
    nets = build_networks(config, seed=seed)
    samples = build_samples(config, ref)
    rule = gauss_legendre(config.sampling.quadrature)
    loss_kind = config.variant
    nets, state = train(nets, config.spec, samples, config.weights,
                        hyper=config.optimizer, loss_kind=loss_kind,
                        rule=rule, seed=seed)
    from .sampling import samples_to_csv
    samples_to_csv(samples, os.path.join(out_dir, "samples.csv"))
    history_to_csv(state, os.path.join(out_dir, "loss_history.csv"))
    save_training_state(os.path.join(out_dir, "state.npz"), state,
                        meta={"config": config_hash(config),
                              "variant": config.variant, "train_seed": seed})
    with open(os.path.join(out_dir, "train_meta.json"), "w") as fh:
        json.dump({"config": config_hash(config), "variant": config.variant,
                   "seed": seed, "steps": state.step,
                   "final_loss": state.history[-1][1].total if state.history else None,
                   "checkpoints": len(state.checkpoints)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return nets, state


def load_trained(config, out_dir, seed=None):
    """Rebuild the configured networks and load trained parameters."""
    path = os.path.join(out_dir, "state.npz")
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"no trained state at {path}; run the 'train' mode first")
    if seed is None:
        seed = config.sampling.seed
    nets = build_networks(config, seed=seed)
    params = ParamVector(nets)
    load_training_state(path, params)
    return nets


# -- predictions ----------------------------------------------------------

def predict_rho(nets, pts, spec, rule):
    """Angular mean of the intensity at (t,x) rows (or (x,) stationary)."""
    pts = np.asarray(pts, dtype=np.float64)
    if "I" in nets:
        I = _intensity_nodes(nets, pts, spec, rule)
        return 0.5 * (I @ rule.weights)
    if "rho_T" in nets:
        return forward_values(nets["rho_T"], pts)[:, 0]
    return forward_values(nets["rho"], pts)[:, 0]


def predict_T(nets, pts):
    if "rho_T" in nets:
        return forward_values(nets["rho_T"], pts)[:, 1]
    return forward_values(nets["T"], pts)[:, 0]


def _intensity_nodes(nets, pts, spec, rule):
    """I at every quadrature node: shape (n_pts, n_mu)."""
    pts = np.asarray(pts, dtype=np.float64)
    cols = []
    for mu in rule.nodes:
        full = np.column_stack([pts, np.full(pts.shape[0], mu)])
        if "I" in nets:
            cols.append(forward_values(nets["I"], full)[:, 0])
        else:
            g = forward_values(nets["g"], full)[:, 0]
            cols.append(g)
    field = np.stack(cols, axis=-1)
    if "I" in nets:
        return field
    rho = predict_rho({k: v for k, v in nets.items() if k != "g"},
                      pts, spec, rule)
    return rho[:, None] + (spec.eps / np.sqrt(spec.sigma0)) * field


def predict_Tr(nets, pts, spec, rule):
    I = _intensity_nodes(nets, pts, spec, rule)
    return radiation_temperature(I, rule, spec)


def reference_Tr(ref, spec, t, x):
    rho = ref.interpolate(t, x, "rho")
    return (spec.s_d * np.asarray(rho) / (spec.a * spec.c)) ** 0.25


# -- evaluate mode --------------------------------------------------------

def run_evaluate(config, out_dir, self_check=False):
    """Compare the trained model (or the reference itself) to the reference.

    Returns (ResultTable, plot_series) where plot_series maps
    (quantity, time_tag) -> {curve_name: (abscissa, values)}.
    """
    ref = _require_reference(config, out_dir)
    spec = config.spec
    rule = gauss_legendre(config.sampling.quadrature)
    nets = None if self_check else load_trained(config, out_dir)
    x = np.linspace(spec.x_range[0], spec.x_range[1], config.outputs.eval_points)

    rows, series = [], {}

    def record(quantity, t, pred, exact, abscissa, tag):
        rows.append((quantity, t, l2_relative_error(pred, exact)))
        series[(quantity, tag)] = {"pred": (abscissa, np.asarray(pred)),
                                   "ref": (abscissa, np.asarray(exact))}

    if spec.stationary:
        pts = x.reshape(-1, 1)
        exact_rho = ref.interpolate(None, x, "rho")
        exact_T = ref.interpolate(None, x, "T")
        pred_rho = exact_rho if self_check else predict_rho(nets, pts, spec, rule)
        pred_T = exact_T if self_check else predict_T(nets, pts)
        record("rho", 0.0, pred_rho, exact_rho, x, "profile")
        record("T", 0.0, pred_T, exact_T, x, "profile")
    elif spec.has_material:
        for t in config.outputs.slice_times:
            pts = np.column_stack([np.full(x.size, t), x])
            exact_Tr = reference_Tr(ref, spec, t, x)
            exact_T = ref.interpolate(t, x, "T")
            pred_Tr = exact_Tr if self_check else predict_Tr(nets, pts, spec, rule)
            pred_T = exact_T if self_check else predict_T(nets, pts)
            tag = "t%g" % t
            record("T_r", t, pred_Tr, exact_Tr, x, tag)
            record("T_e", t, pred_T, exact_T, x, tag)
        t0, t1 = spec.t_range
        ts = np.linspace(t0, t1, 101)
        for xp in config.outputs.probe_x:
            pts = np.column_stack([ts, np.full(ts.size, xp)])
            exact = ref.interpolate(ts, np.full(ts.size, xp), "T")
            pred = exact if self_check else predict_T(nets, pts)
            q = "T_e_probe_x%g" % xp
            rows.append((q, t1, l2_relative_error(pred, exact)))
            series[(q, "series")] = {"pred": (ts, np.asarray(pred)),
                                     "ref": (ts, np.asarray(exact))}
    else:
        for t in config.outputs.slice_times:
            pts = np.column_stack([np.full(x.size, t), x])
            exact = ref.interpolate(t, x, "rho")
            pred = exact if self_check else predict_rho(nets, pts, spec, rule)
            record("rho", t, pred, exact, x, "t%g" % t)

    table = ResultTable(rows)
    table.to_csv(os.path.join(out_dir, "results.csv"))
    table.to_json(os.path.join(out_dir, "results.json"))
    write_plot_data(series, os.path.join(out_dir, "plots"))
    render_figures(series, os.path.join(out_dir, "figures"),
                   history_csv=os.path.join(out_dir, "loss_history.csv"))
    return table, series


# -- export ---------------------------------------------------------------

def write_plot_data(series, plot_dir):
    """One (x, value) CSV per curve per slice time."""
    os.makedirs(plot_dir, exist_ok=True)
    paths = []
    for (quantity, tag), curves in sorted(series.items()):
        for name, (xs, ys) in sorted(curves.items()):
            path = os.path.join(plot_dir, f"{quantity}_{tag}_{name}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x", "value"])
                for xv, yv in zip(np.asarray(xs).ravel(),
                                  np.asarray(ys).ravel()):
                    w.writerow([_FMT % xv, _FMT % yv])
            paths.append(path)
    return paths


def render_figures(series, fig_dir, history_csv=None):
    """Comparison figures (prediction solid, reference dashed) per quantity,
    plus the loss history when available."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(fig_dir, exist_ok=True)
    paths = []
    by_quantity = {}
    for (quantity, tag), curves in sorted(series.items()):
        by_quantity.setdefault(quantity, []).append((tag, curves))
    for quantity, groups in by_quantity.items():
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i, (tag, curves) in enumerate(groups):
            color = f"C{i % 10}"
            label = tag if tag not in ("profile", "series") else None
            xs, ys = curves["pred"]
            ax.plot(xs, ys, color=color, lw=1.5,
                    label=(f"pred {label}" if label else "pred"))
            xs, ys = curves["ref"]
            ax.plot(xs, ys, color=color, lw=1.2, ls="--",
                    label=(f"ref {label}" if label else "ref"))
        ax.set_xlabel("t" if groups[0][0] == "series" else "x")
        ax.set_ylabel(quantity)
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        path = os.path.join(fig_dir, f"{quantity}.png")
        fig.savefig(path, dpi=140, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    if history_csv and os.path.exists(history_csv):
        steps, totals = [], []
        with open(history_csv, newline="") as fh:
            r = csv.DictReader(fh)
            for row in r:
                steps.append(int(row["step"]))
                totals.append(float(row["total"]))
        if steps:
            fig, ax = plt.subplots(figsize=(6.0, 4.0))
            ax.semilogy(steps, totals, lw=1.2)
            ax.set_xlabel("step")
            ax.set_ylabel("total loss")
            ax.grid(alpha=0.3, which="both")
            path = os.path.join(fig_dir, "loss_history.png")
            fig.savefig(path, dpi=140, bbox_inches="tight")
            plt.close(fig)
            paths.append(path)
    return paths


def export_results(out_dir, fmt):
    """Convert the saved result table to `fmt` (csv or json); returns path."""
    if fmt not in ("csv", "json"):
        raise ConfigurationError([f"unknown export format {fmt!r}"])
    src_json = os.path.join(out_dir, "results.json")
    src_csv = os.path.join(out_dir, "results.csv")
    if os.path.exists(src_json):
        table = ResultTable.from_json(src_json)
    elif os.path.exists(src_csv):
        table = ResultTable.from_csv(src_csv)
    else:
        raise FileNotFoundError(
            f"no results.json or results.csv under {out_dir}; "
            f"run the 'evaluate' mode first")
    dst = os.path.join(out_dir, f"results.{fmt}")
    (table.to_csv if fmt == "csv" else table.to_json)(dst)
    return dst


# -- one front door -------------------------------------------------------

def run_experiment(config, mode, out_dir, seed=None, self_check=False):
    """Dispatch one of the pipeline stages: reference, train, evaluate."""
    if mode == "reference":
        return run_reference(config, out_dir)
    if mode == "train":
        return run_train(config, out_dir, seed=seed)
    if mode == "evaluate":
        return run_evaluate(config, out_dir, self_check=self_check)
    raise ConfigurationError([f"unknown mode {mode!r}"])
