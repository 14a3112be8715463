"""Problem files in, result files out.

A problem file is JSON::

    {
      "system": {"A": ..., "B": ..., "W": ..., "R": ..., "N": 10, "sigma0": ...},
      "target": {"sigma_r": ..., "dim": 2},
      "solver": {"lambda": 1.0,
                 "dca": {"max_iters": 50, "tol_abs": 1e-7, "tol_rel": 1e-6, "init": "uncontrolled_spectrum"},
                 "backend": {"tol_feas": 1e-8, "tol_gap": 1e-8, "max_iter": 200}},
      "seed": 0
    }

Matrices are row-major nested arrays. ``A``, ``B``, ``W`` and ``R`` are
either one matrix (used at every step) or a list of ``N`` matrices; a bare
number is promoted to a 1x1 matrix. ``target.dim`` zero-pads ``sigma_r``.
Optional ``system.mean0`` / ``target.mean`` must be zero.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dca import DCAConfig
from .errors import InvalidInputError
from .gaussian import TargetShape
from .subproblem import Backend
from .system import SystemParams

SCHEMA_VERSION = 1


class ProblemFileError(InvalidInputError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class Problem:
    params: SystemParams
    target: TargetShape
    lam: float
    config: DCAConfig
    seed: int
    raw: dict

    @property
    def inputs_hash(self):
        return canonical_hash(self.raw)


def canonical_hash(obj):
    """sha256 of the key-sorted compact JSON encoding."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def problem_hash(params, target):
    """sha256 over the numeric content of a system and a target covariance."""
    h = hashlib.sha256()
    for arr in (params.A, params.B, params.W, params.R, params.Sigma0, np.asarray(target, dtype=float)):
        a = np.ascontiguousarray(arr, dtype=float)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(str(params.N).encode())
    return h.hexdigest()


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _number(x, path):
    if not _is_number(x):
        raise ProblemFileError(path, f"expected a number, got {type(x).__name__}")
    if not np.isfinite(x):
        raise ProblemFileError(path, "non-finite number")
    return float(x)


def _matrix(value, path):
    if _is_number(value):
        return np.array([[_number(value, path)]])
    if not isinstance(value, list) or not value:
        raise ProblemFileError(path, "expected a number or a non-empty list of rows")
    width = None
    rows = []
    for i, row in enumerate(value):
        rpath = f"{path}[{i}]"
        if not isinstance(row, list):
            raise ProblemFileError(rpath, "expected a row (list of numbers)")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ProblemFileError(rpath, f"ragged rows: length {len(row)}, expected {width}")
        rows.append([_number(x, f"{rpath}[{j}]") for j, x in enumerate(row)])
    if width == 0:
        raise ProblemFileError(path, "empty row")
    return np.array(rows)


def _matrix_or_sequence(value, path):
    if isinstance(value, list) and value and isinstance(value[0], list) and value[0] and isinstance(value[0][0], list):
        mats = [_matrix(v, f"{path}[{k}]") for k, v in enumerate(value)]
        if len({m.shape for m in mats}) != 1:
            raise ProblemFileError(path, "sequence entries have different shapes")
        return np.array(mats)
    return _matrix(value, path)


def _get(obj, key, path, required=True, default=None):
    if not isinstance(obj, dict):
        raise ProblemFileError(path, "expected an object")
    if key not in obj:
        if required:
            raise ProblemFileError(f"{path}.{key}", "missing required key")
        return default
    return obj[key]


def _zero_mean(value, path):
    if value is None:
        return
    if not isinstance(value, list) or not all(_is_number(x) for x in value):
        raise ProblemFileError(path, "expected a list of numbers")
    if any(x != 0 for x in value):
        raise ProblemFileError(path, "nonzero means are not supported; all laws must be centered")


def parse_problem(doc):
    """Validate a decoded problem document and build the solver inputs."""
    if not isinstance(doc, dict):
        raise ProblemFileError("$", "expected a JSON object")
    system = _get(doc, "system", "$")
    sp = "$.system"
    N = _get(system, "N", sp)
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        raise ProblemFileError(f"{sp}.N", "expected a positive integer")
    mats = {key: _matrix_or_sequence(_get(system, key, sp), f"{sp}.{key}") for key in ("A", "B", "W", "R")}
    sigma0 = _matrix(_get(system, "sigma0", sp), f"{sp}.sigma0")
    _zero_mean(_get(system, "mean0", sp, required=False), f"{sp}.mean0")
    try:
        params = SystemParams(N=N, Sigma0=sigma0, **mats)
    except InvalidInputError as exc:
        raise ProblemFileError(sp, str(exc)) from None

    target = _get(doc, "target", "$")
    tp = "$.target"
    sigma_r = _matrix(_get(target, "sigma_r", tp), f"{tp}.sigma_r")
    _zero_mean(_get(target, "mean", tp, required=False), f"{tp}.mean")
    dim = _get(target, "dim", tp, required=False)
    try:
        shape = TargetShape(sigma_r)
        if dim is not None:
            if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
                raise ProblemFileError(f"{tp}.dim", "expected a positive integer")
            shape = TargetShape(shape.embedded(dim))
    except ProblemFileError:
        raise
    except InvalidInputError as exc:
        raise ProblemFileError(f"{tp}.sigma_r", str(exc)) from None

    solver = _get(doc, "solver", "$", required=False, default={})
    sv = "$.solver"
    lam = _number(_get(solver, "lambda", sv, required=False, default=1.0), f"{sv}.lambda")
    if lam <= 0:
        raise ProblemFileError(f"{sv}.lambda", "must be positive")
    dca = _get(solver, "dca", sv, required=False, default={})
    backend = _get(solver, "backend", sv, required=False, default={})
    try:
        init = _get(dca, "init", f"{sv}.dca", required=False, default="uncontrolled_spectrum")
        if isinstance(init, list):
            init = _matrix(init, f"{sv}.dca.init")
        be = Backend(
            tol_feas=_number(_get(backend, "tol_feas", f"{sv}.backend", False, 1e-8), f"{sv}.backend.tol_feas"),
            tol_gap=_number(_get(backend, "tol_gap", f"{sv}.backend", False, 1e-8), f"{sv}.backend.tol_gap"),
            max_iter=int(_number(_get(backend, "max_iter", f"{sv}.backend", False, 200), f"{sv}.backend.max_iter")),
        )
        config = DCAConfig(
            max_iters=int(_number(_get(dca, "max_iters", f"{sv}.dca", False, 50), f"{sv}.dca.max_iters")),
            tol_abs=_number(_get(dca, "tol_abs", f"{sv}.dca", False, 1e-7), f"{sv}.dca.tol_abs"),
            tol_rel=_number(_get(dca, "tol_rel", f"{sv}.dca", False, 1e-6), f"{sv}.dca.tol_rel"),
            init_strategy=init,
            backend=be,
        )
    except ProblemFileError:
        raise
    except InvalidInputError as exc:
        raise ProblemFileError(f"{sv}.dca", str(exc)) from None

    seed = _get(doc, "seed", "$", required=False, default=0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ProblemFileError("$.seed", "expected a non-negative integer")
    return Problem(params, shape, lam, config, seed, doc)


def load_problem(path):
    """Read and parse a problem file; JSON syntax errors carry line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFileError(str(path), f"cannot read: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return parse_problem(doc)


def tolist(a):
    return np.asarray(a, dtype=float).tolist()


def dump_json(obj, path):
    """Deterministic JSON: sorted keys, shortest round-trip float repr."""
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def write_trajectory_csv(Sigma, path):
    """One row per step: ``k`` then the row-major entries of ``Sigma_k``."""
    Sigma = np.asarray(Sigma, dtype=float)
    n = Sigma.shape[1]
    header = ["k"] + [f"s{i}{j}" for i in range(n) for j in range(n)]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for k, S in enumerate(Sigma):
            fh.write(",".join([str(k)] + [repr(float(x)) for x in S.ravel()]) + "\n")


def read_trajectory_csv(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(round(np.sqrt(rows.shape[1] - 1)))
    return rows[:, 1:].reshape(-1, n, n)


def policy_from_json(doc, path="$"):
    """Extract ``(K, Q)`` arrays from a solve result document."""
    policy = _get(doc, "policy", path)
    K = np.array([_matrix(k, f"{path}.policy.K[{i}]") for i, k in enumerate(_get(policy, "K", f"{path}.policy"))])
    Q = np.array([_matrix(q, f"{path}.policy.Q[{i}]") for i, q in enumerate(_get(policy, "Q", f"{path}.policy"))])
    return K, Q
