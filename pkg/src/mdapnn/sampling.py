"""Quadrature and collocation sampling.

Angular integrals use Gauss-Legendre on [-1,1]; the same nodes serve as
the angular training points of the flux and conservation terms.
Collocation points come from an unscrambled Sobol sequence (direction
numbers inlined for dimensions 1..3), with the all-zeros index-0 point
skipped by default so no sample ever sits exactly on a corner or at
mu = 0 on a half range.

Sample sets are fixed: they are drawn once per run and reused for every
optimizer step, which keeps runs bitwise reproducible.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self):
        return self.nodes.size


def gauss_legendre(n):
    """Gauss-Legendre rule on [-1,1] by Newton iteration on the recurrence."""
    if not isinstance(n, int) or n < 1:
        raise ContractViolation(f"quadrature order must be a positive int, got {n!r}")
    # Chebyshev-like initial guesses, then Newton on P_n
    x = np.cos(np.pi * (np.arange(n) + 0.75) / (n + 0.5))
    dp = np.ones_like(x)
    for _ in range(100):
        p_prev = np.ones_like(x)
        p = x.copy()
        for k in range(2, n + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        dp = n * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    order = np.argsort(x)
    x = x[order]
    dp = dp[order]
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return QuadratureRule(nodes=x, weights=w)


# Joe-Kuo direction numbers (s, a, m) for dimensions 2 and 3; the first
# dimension is the van der Corput sequence.
_SOBOL_DIRS = {2: (1, 0, (1,)), 3: (2, 1, (1, 3))}
_SOBOL_BITS = 32


def _direction_vectors(dim_index):
    if dim_index == 0:
        m = [1] * _SOBOL_BITS
    else:
        s, a, m0 = _SOBOL_DIRS[dim_index + 1]
        m = list(m0)
        for k in range(s, _SOBOL_BITS):
            val = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    val ^= m[k - i] << i
            m.append(val)
    return [m[k] << (_SOBOL_BITS - 1 - k) for k in range(_SOBOL_BITS)]


def sobol_points(n, dim, skip=1):
    """First `n` points of the unscrambled Sobol sequence after `skip`.

    Supported dimensions: 1..3. Every coordinate lies in (0,1) once the
    index-0 point is skipped.
    """
    if dim not in (1, 2, 3):
        raise ContractViolation(f"sobol dimensions 1..3 supported, got {dim}")
    if n < 0 or skip < 0:
        raise ContractViolation(f"need n >= 0 and skip >= 0, got n={n} skip={skip}")
    total = n + skip
    vs = [_direction_vectors(d) for d in range(dim)]
    out = np.zeros((total, dim))
    state = [0] * dim
    for i in range(1, total):
        low = (i & -i).bit_length() - 1
        for d in range(dim):
            state[d] ^= vs[d][low]
            out[i, d] = state[d]
    return out[skip:] / float(1 << _SOBOL_BITS)


def angular_mean(values, rule):
    """<v> = (1/2) integral over mu; values has the angle on its last axis."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != rule.n:
        raise ContractViolation(f"last axis {values.shape[-1]} != rule size {rule.n}")
    return 0.5 * values @ rule.weights


def angular_flux_mean(values, rule):
    """<mu v> with the same layout as angular_mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != rule.n:
        raise ContractViolation(f"last axis {values.shape[-1]} != rule size {rule.n}")
    return 0.5 * values @ (rule.weights * rule.nodes)


@dataclass
class FaceSamples:
    face: str            # "left" | "right"
    kind: str            # bc kind this face carries
    t: np.ndarray = None   # None for stationary problems
    mu: np.ndarray = None


@dataclass
class SampleSet:
    """Fixed collocation points for one training run.

    interior columns: (t, x, mu) time dependent, (x, mu) stationary.
    initial columns: (x, mu). data_points columns: (t, x) or (x,).
    """

    interior: np.ndarray
    boundary: list
    initial: np.ndarray = None
    data_points: np.ndarray = None
    data_values: np.ndarray = None
    counts: dict = field(default_factory=dict)
    seed: int = 0


def build_sample_sets(spec, n_interior, n_boundary, n_initial, seed=0):
    """Sobol collocation points for `spec` (duck-typed ProblemSpec).

    One Sobol stream per dimension count, consumed in a fixed role order,
    so roles never share identical low-discrepancy positions. n_boundary
    splits evenly across the two faces (periodic pairs share one set).
    """
    if n_interior < 1:
        raise ContractViolation(f"n_interior must be >= 1, got {n_interior}")
    stationary = spec.kind == "grte_stationary"
    xl, xr = spec.x_range
    periodic = spec.bc_left.kind == "periodic"

    if stationary:
        u = sobol_points(n_interior, 2)
        interior = np.column_stack([xl + (xr - xl) * u[:, 0], 2.0 * u[:, 1] - 1.0])
    else:
        u = sobol_points(n_interior, 3)
        t0, t1 = spec.t_range
        interior = np.column_stack([t0 + (t1 - t0) * u[:, 0],
                                    xl + (xr - xl) * u[:, 1],
                                    2.0 * u[:, 2] - 1.0])

    boundary = []
    if n_boundary > 0:
        if periodic:
            u = sobol_points(n_boundary, 2)
            t0, t1 = spec.t_range
            t = t0 + (t1 - t0) * u[:, 0]
            mu = 2.0 * u[:, 1] - 1.0
            boundary.append(FaceSamples("left", "periodic", t, mu))
            boundary.append(FaceSamples("right", "periodic", t, mu))
        else:
            n_left = (n_boundary + 1) // 2
            n_right = n_boundary // 2
            if stationary:
                u = sobol_points(n_left + n_right, 1)[:, 0]
                # inflow halves: mu > 0 on the left face, mu < 0 on the right
                boundary.append(FaceSamples("left", spec.bc_left.kind,
                                            None, u[:n_left]))
                boundary.append(FaceSamples("right", spec.bc_right.kind,
                                            None, u[n_left:] - 1.0))
            else:
                u = sobol_points(n_left + n_right, 2)
                t0, t1 = spec.t_range
                t = t0 + (t1 - t0) * u[:, 0]
                mu_left = u[:n_left, 1]            # (0,1): inflow or mirror sign
                mu_right = u[n_left:, 1] - 1.0     # (-1,0)
                boundary.append(FaceSamples("left", spec.bc_left.kind,
                                            t[:n_left], mu_left))
                boundary.append(FaceSamples("right", spec.bc_right.kind,
                                            t[n_left:], mu_right))

    initial = None
    if not stationary and n_initial > 0:
        # continue the 2-d stream past the boundary block
        u = sobol_points(n_initial, 2, skip=1 + n_boundary)
        initial = np.column_stack([xl + (xr - xl) * u[:, 0], 2.0 * u[:, 1] - 1.0])

    counts = {"interior": int(n_interior), "boundary": int(n_boundary),
              "initial": int(0 if initial is None else n_initial)}
    return SampleSet(interior=interior, boundary=boundary, initial=initial,
                     counts=counts, seed=int(seed))


def attach_labels(samples, points, values):
    """Return a copy of `samples` carrying labeled data."""
    points = np.asarray(points, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if points.shape[0] != values.size:
        raise ContractViolation(f"{points.shape[0]} label points vs {values.size} values")
    out = SampleSet(interior=samples.interior, boundary=samples.boundary,
                    initial=samples.initial, data_points=points,
                    data_values=values, counts=dict(samples.counts), seed=samples.seed)
    out.counts["data"] = int(values.size)
    return out


_FMT = "%.17g"


def samples_to_csv(samples, path):
    """Write every sample point as rows (role, face, c0, c1, c2, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["role", "face", "c0", "c1", "c2", "value"])

        def emit(role, face, arr, values=None):
            arr = np.atleast_2d(arr)
            for i in range(arr.shape[0]):
                cols = [_FMT % v for v in arr[i]] + [""] * (3 - arr.shape[1])
                val = "" if values is None else _FMT % values[i]
                w.writerow([role, face] + cols + [val])

        emit("interior", "", samples.interior)
        for fs in samples.boundary:
            if fs.t is None:
                emit("boundary", f"{fs.face}:{fs.kind}", fs.mu.reshape(-1, 1))
            else:
                emit("boundary", f"{fs.face}:{fs.kind}",
                     np.column_stack([fs.t, fs.mu]))
        if samples.initial is not None:
            emit("initial", "", samples.initial)
        if samples.data_points is not None:
            emit("data", "", samples.data_points, samples.data_values)


def samples_from_csv(path):
    """Inverse of samples_to_csv (roles and faces reconstructed exactly)."""
    rows = {"interior": [], "initial": [], "data": []}
    faces = {}
    data_values = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[:2] != ["role", "face"]:
            raise ContractViolation(f"unrecognized sample csv header {header}")
        for role, face, c0, c1, c2, value in r:
            coords = [float(c) for c in (c0, c1, c2) if c != ""]
            if role == "boundary":
                faces.setdefault(face, []).append(coords)
            elif role == "data":
                rows["data"].append(coords)
                data_values.append(float(value))
            else:
                rows[role].append(coords)
    boundary = []
    for face, pts in faces.items():
        side, kind = face.split(":")
        arr = np.asarray(pts)
        if arr.shape[1] == 1:
            boundary.append(FaceSamples(side, kind, None, arr[:, 0]))
        else:
            boundary.append(FaceSamples(side, kind, arr[:, 0], arr[:, 1]))
    interior = np.asarray(rows["interior"])
    initial = np.asarray(rows["initial"]) if rows["initial"] else None
    out = SampleSet(interior=interior, boundary=boundary, initial=initial,
                    counts={"interior": int(interior.shape[0])})
    if rows["data"]:
        out = attach_labels(out, np.asarray(rows["data"]), np.asarray(data_values))
    return out
