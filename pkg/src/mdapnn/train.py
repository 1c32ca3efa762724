"""Full-batch Adam training, metrics, and loss/error traces.

The loop is deterministic for a fixed (seed, sample set): there is no
stochastic batching, and the tape accumulates in a fixed order, so the
history reproduces to the last bit on rerun.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalError
from .model import loss_mdapnn, loss_pinn, residual_data, rho_values_of, T_values_of, _msq, _assemble
from .net import ParamVector, loss_gradient, save_checkpoint, load_checkpoint


@dataclass
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    max_steps: int = 50_000
    lr_schedule: str = "step_decay"   # constant | step_decay
    decay_factor: float = 0.5
    decay_every: int = 20_000

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ContractViolation("Adam betas must lie in (0, 1)")
        if self.lr <= 0.0:
            raise ContractViolation("learning rate must be positive")
        if self.lr_schedule not in ("constant", "step_decay"):
            raise ContractViolation(f"unknown lr schedule {self.lr_schedule!r}")

    def rate_at(self, step):
        """Learning rate applied at 0-based step index `step`."""
        if self.lr_schedule == "constant":
            return self.lr
        return self.lr * self.decay_factor ** (step // self.decay_every)


@dataclass
class TrainingState:
    params: ParamVector
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    seed: int = 0
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    # early-stop / decade trackers persist so a reloaded run continues
    # on exactly the uninterrupted trajectory
    best_loss: float = np.inf
    best_step: int = 0
    decade_mark: float = np.inf


def init_training_state(params, seed=0):
    n = params.size
    return TrainingState(params=params, m=np.zeros(n), v=np.zeros(n), seed=seed)


def adam_step(state, grad, hyper):
    """One bias-corrected Adam update in place; returns the state.

    Non-finite gradients leave the state untouched.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.params.data.shape:
        raise ContractViolation("gradient length does not match parameter vector")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient passed to adam_step")
    lr = hyper.rate_at(state.step)
    t = state.step + 1
    state.m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
    state.v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad * grad
    mhat = state.m / (1.0 - hyper.beta1 ** t)
    vhat = state.v / (1.0 - hyper.beta2 ** t)
    state.params.data -= lr * mhat / (np.sqrt(vhat) + hyper.eps_hat)
    state.step = t
    return state


# -- loss variants -------------------------------------------------------

def loss_data_driven(nets, samples, weights, spec, rule):
    """Supervised fit of the labeled field only; no physics terms.

    Networks that do not feed the data term receive zero gradient and
    are left at initialization by the optimizer.
    """
    if samples.data_points is None or samples.data_values is None:
        raise ContractViolation("data-driven training needs labeled samples")
    pts = np.asarray(samples.data_points, dtype=np.float64)
    pred = T_values_of(nets, pts) if spec.has_material else rho_values_of(nets, pts)
    r = residual_data(pred, samples.data_values)
    return _assemble([("data", "data", float(weights.lambda0), _msq(r))])


LOSS_FUNCTIONS = {
    "pinn": loss_pinn,
    "apnn": loss_mdapnn,       # same assembly, run with lambda0 = 0
    "mdapnn": loss_mdapnn,
    "data_driven": loss_data_driven,
}


# -- training loop -------------------------------------------------------

def train(nets, spec, samples, weights, hyper=None, loss_kind="mdapnn",
          log_every=100, rule=None, state=None, seed=0,
          stop_tol=1e-8, patience=10_000, min_rel_drop=0.01):
    """Full-batch Adam on the requested loss; returns (nets, TrainingState).

    Fixed sample set throughout. History rows are (step, breakdown) every
    `log_every` steps plus the final step. Checkpoints (step, loss, theta)
    are recorded at start and at every 10x drop of the total loss. A
    non-finite loss aborts after restoring the last logged parameters.
    """
    if loss_kind not in LOSS_FUNCTIONS:
        raise ContractViolation(f"unknown loss kind {loss_kind!r}")
    loss_fn = LOSS_FUNCTIONS[loss_kind]
    if hyper is None:
        hyper = AdamHyper()
    if state is None:
        state = init_training_state(ParamVector(nets), seed=seed)
    params = state.params

    box = {}

    def evaluate():
        total, breakdown = loss_fn(nets, samples, weights, spec, rule)
        box["breakdown"] = breakdown
        return total

    last_good = params.copy_theta()
    for step in range(state.step, hyper.max_steps):
        try:
            val, grad = loss_gradient(params, evaluate)
        except NumericalError:
            params.set_theta(last_good)
            raise NumericalError(
                f"loss non-finite at step {step}; parameters restored to the "
                f"last logged step") from None
        bd = box["breakdown"]
        if step % log_every == 0:
            state.history.append((step, bd))
            last_good = params.copy_theta()
        if not np.isfinite(state.decade_mark):
            state.decade_mark = val
            state.checkpoints.append(
                {"step": step, "loss": val, "theta": params.copy_theta()})
        elif val <= 0.1 * state.decade_mark:
            state.decade_mark = val
            state.checkpoints.append(
                {"step": step, "loss": val, "theta": params.copy_theta()})
        adam_step(state, grad, hyper)
        if val < stop_tol:
            break
        if val < state.best_loss * (1.0 - min_rel_drop):
            state.best_loss = val
            state.best_step = step
        elif step - state.best_step >= patience:
            break
    if state.step > 0:
        final_total, final_bd = final_breakdown(nets, samples, weights, spec, rule, loss_fn)
        if not state.history or state.history[-1][0] != state.step:
            state.history.append((state.step, final_bd))
    return nets, state


def final_breakdown(nets, samples, weights, spec, rule, loss_fn):
    total, bd = loss_fn(nets, samples, weights, spec, rule)
    return float(np.asarray(total.value).reshape(())), bd


HISTORY_COLUMNS = ("step", "governing", "boundary", "initial",
                   "conservation", "data", "total")


def history_rows(state):
    rows = []
    for step, bd in state.history:
        rows.append((step, bd.governing, bd.boundary, bd.initial,
                     bd.conservation, bd.data, bd.total))
    return rows


def history_to_csv(state, path):
    with open(path, "w") as f:
        f.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history_rows(state):
            f.write("%d," % row[0] + ",".join("%.17g" % v for v in row[1:]) + "\n")


def save_training_state(path, state, meta=None):
    save_checkpoint(path, state.params,
                    state={"m": state.m, "v": state.v, "step": state.step},
                    meta=dict(meta or {}, seed=state.seed,
                              best_loss=state.best_loss, best_step=state.best_step,
                              decade_mark=(None if not np.isfinite(state.decade_mark)
                                           else state.decade_mark)))


def load_training_state(path, params):
    read = load_checkpoint(path, params)
    meta = read.get("meta", {})
    state = TrainingState(params=params,
                          m=read["m"], v=read["v"], step=int(read["step"]),
                          seed=int(meta.get("seed", 0)))
    state.best_loss = float(meta.get("best_loss", np.inf))
    state.best_step = int(meta.get("best_step", 0))
    dm = meta.get("decade_mark")
    state.decade_mark = np.inf if dm is None else float(dm)
    return state


# -- metrics -------------------------------------------------------------

def l2_relative_error(pred, ref):
    """||pred - ref||_2 / ||ref||_2 over matched sample locations."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ContractViolation("pred and ref must be sampled at matched locations")
    nref = float(np.linalg.norm(ref))
    if nref == 0.0:
        raise ContractViolation("reference norm is zero")
    return float(np.linalg.norm(pred - ref)) / nref


def radiation_temperature(I_mu, rule, spec):
    """T_r = (s_d <I> / (a c))^(1/4) from I sampled on the rule's nodes."""
    I_mu = np.asarray(I_mu, dtype=np.float64)
    if I_mu.shape[-1] != rule.n:
        raise ContractViolation("last axis of I must match the quadrature rule")
    mean = 0.5 * (I_mu @ rule.weights)
    if np.any(mean < 0.0):
        raise NumericalError("negative angular mean; radiation temperature undefined")
    return (spec.s_d * mean / (spec.a * spec.c)) ** 0.25


def error_vs_loss_trace(checkpoints, ref, *, nets, params, samples, weights,
                        spec, rule, loss_kind="mdapnn", times, x_eval,
                        which=None):
    """(total loss, squared Linf-in-time L2-in-space error) per checkpoint.

    The loss is re-evaluated on `samples` (intended to be a fresh, larger
    set than the training one); the error compares the labeled field to
    `ref` at the given slice times. Parameters are restored afterwards.
    """
    loss_fn = LOSS_FUNCTIONS[loss_kind]
    if which is None:
        which = "T" if spec.has_material else "rho"
    x_eval = np.asarray(x_eval, dtype=np.float64).ravel()
    saved = params.copy_theta()
    pairs = []
    try:
        for ck in checkpoints:
            params.set_theta(ck["theta"])
            total, _ = loss_fn(nets, samples, weights, spec, rule)
            loss_val = float(np.asarray(total.value).reshape(()))
            worst = 0.0
            for t in times:
                if spec.stationary:
                    pts = x_eval.reshape(-1, 1)
                else:
                    pts = np.column_stack([np.full(x_eval.size, t), x_eval])
                pred = (T_values_of(nets, pts) if which == "T"
                        else rho_values_of(nets, pts)).value.ravel()
                exact = ref.interpolate(t, x_eval, which)
                worst = max(worst, float(np.mean((pred - exact) ** 2)))
            pairs.append((loss_val, worst))
    finally:
        params.set_theta(saved)
    return pairs
