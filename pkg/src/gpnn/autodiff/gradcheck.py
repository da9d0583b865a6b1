"""Central finite-difference oracle for the reverse pass."""

import numpy as np

from ..errors import NumericError, ValidationError
from .engine import Tape

def finite_difference_check(f, leaves, eps=1e-3, kink_radius=0.0, signature_fn=None):
    """Max relative error between tape gradients and central differences.

    f          callable of no arguments; must rebuild the forward pass from
               `leaves` and return a scalar Value.
    leaves     dict name -> Value (requires_grad) perturbed in place.
    eps        central-difference step, in (0, 1e-2].
    kink_radius  coordinates with |x| < kink_radius are skipped (relu kinks).
    signature_fn optional callable returning a hashable forward signature
               (e.g. selected pointer indices); coordinates whose
               perturbation changes the signature are skipped.

    Relative error per coordinate is |analytic - numeric| / max(1, |numeric|).
    """
    if not 0.0 < eps <= 1e-2:
        raise ValidationError(f"eps must be in (0, 1e-2], got {eps}")

    with Tape() as tape:
        loss = f()
        if not np.isfinite(loss.data).all():
            raise NumericError("finite_difference_check: non-finite loss")
        tape.backward(loss, leaves=leaves.values())
    analytic = {name: leaf.grad.copy() for name, leaf in leaves.items()}

    base_signature = signature_fn() if signature_fn is not None else None

    def eval_loss():
        out = f()
        if not np.isfinite(out.data).all():
            raise NumericError("finite_difference_check: non-finite loss")
        return float(out.data)

    max_err = 0.0
    for name, leaf in leaves.items():
        flat = leaf.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            if kink_radius > 0.0 and abs(original) < kink_radius:
                continue
            flat[i] = original + eps
            if signature_fn is not None and signature_fn() != base_signature:
                flat[i] = original
                continue
            f_plus = eval_loss()
            flat[i] = original - eps
            if signature_fn is not None and signature_fn() != base_signature:
                flat[i] = original
                continue
            f_minus = eval_loss()
            flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(analytic[name].reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            max_err = max(max_err, err)
    return max_err
