"""Reading and writing instance files.

An instance file is a JSON object::

    {
      "S": 3, "A": 2, "lambda": 0.8,
      "cost":    [S*A reals, row-major: cost[s][a]],
      "p0":      [S reals],
      "kernels": [N blocks of S*A*S reals, row-major: y[s][a][s']],   (optional)
      "metric": "l2", "order": "2", "theta": 0.5                       (optional)
    }

Arrays may be given flat (row-major) or nested.  Every kernel row must sum
to 1 within 1e-8 and be nonnegative; accepted rows are renormalized.
The full grammar is in ``docs/instance_format.md``.
"""

import json
import math

import numpy as np

from .ambiguity import AmbiguityConfig, KernelSet
from .errors import StructuralError
from .mdp import MdpInstance

ROW_TOL = 1e-8


def _array(obj, shape, name):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise StructuralError(f"{name} must be numeric") from None
    if arr.size != math.prod(shape):
        raise StructuralError(f"{name} has {arr.size} entries, expected {math.prod(shape)}")
    if arr.ndim != 1 and arr.shape != shape:
        raise StructuralError(f"{name} has shape {arr.shape}, expected {shape} or flat")
    return arr.reshape(shape)


def parse_instance(doc):
    """Build ``(MdpInstance, KernelSet or None, AmbiguityConfig or None)`` from a dict."""
    if not isinstance(doc, dict):
        raise StructuralError("instance document must be a JSON object")
    for key in ("S", "A", "lambda", "cost", "p0"):
        if key not in doc:
            raise StructuralError(f"missing field {key!r}")
    S, A = doc["S"], doc["A"]
    if not (isinstance(S, int) and isinstance(A, int) and S >= 1 and A >= 1):
        raise StructuralError("S and A must be positive integers")
    cost = _array(doc["cost"], (S, A), "cost")
    p0 = _array(doc["p0"], (S,), "p0")
    inst = MdpInstance(cost, p0, float(doc["lambda"]))
    ks = None
    if doc.get("kernels") is not None:
        blocks = doc["kernels"]
        if not isinstance(blocks, list) or not blocks:
            raise StructuralError("kernels must be a nonempty list of blocks")
        ys = np.stack([_array(b, (S, A, S), f"kernels[{i}]") for i, b in enumerate(blocks)])
        if np.any(ys < 0):
            raise StructuralError("kernel entries must be nonnegative")
        dev = np.abs(ys.sum(axis=-1) - 1.0)
        if np.any(dev > ROW_TOL):
            i, s, a = np.unravel_index(int(dev.argmax()), dev.shape)
            raise StructuralError(
                f"kernels[{i}] row (s={s}, a={a}) sums to {ys[i, s, a].sum()!r}; must be 1 within {ROW_TOL}"
            )
        ks = KernelSet(ys / ys.sum(axis=-1, keepdims=True))
    cfg = None
    if "metric" in doc or "order" in doc or "theta" in doc:
        try:
            cfg = AmbiguityConfig(doc["metric"], doc["order"], doc["theta"])
        except KeyError as exc:
            raise StructuralError(f"ambiguity fields need metric, order and theta; missing {exc}") from None
    return inst, ks, cfg


def load_instance(path):
    with open(path) as fh:
        return parse_instance(json.load(fh))


def instance_document(inst, ks=None, cfg=None):
    doc = {
        "S": inst.num_states,
        "A": inst.num_actions,
        "lambda": inst.discount,
        "cost": inst.cost.ravel().tolist(),
        "p0": inst.p0.tolist(),
    }
    if ks is not None:
        doc["kernels"] = [y.ravel().tolist() for y in ks.samples]
    if cfg is not None:
        doc["metric"] = cfg.metric
        doc["order"] = cfg.order_label()
        doc["theta"] = cfg.theta
    return doc


def save_instance(path, inst, ks=None, cfg=None):
    with open(path, "w") as fh:
        json.dump(instance_document(inst, ks, cfg), fh)
