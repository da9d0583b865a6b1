"""Parameter checkpoints: JSON mapping name -> shape + flat array.

Python's float repr is shortest-round-trip, so JSON numbers reload
bit-exactly for finite doubles.
"""

import json

import numpy as np

from ..errors import ValidationError
from .engine import Value


def params_to_dict(params):
    return {
        name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
        for name, p in params.items()
    }


def params_from_dict(doc):
    params = {}
    for name, entry in doc.items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = Value(arr, requires_grad=True)
    return params


def save_params(params, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh)
        fh.write("\n")


def load_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: checkpoint must be a JSON object")
    return params_from_dict(doc)


def clone_params(params):
    """Deep copy used for best-epoch snapshots."""
    return {name: Value(p.data.copy(), requires_grad=True) for name, p in params.items()}
