"""Finite-difference verification of the autodiff engine.

``numeric_gradient`` recomputes a scalar function under elementwise
perturbations of one tensor and is the reference every analytic gradient
is compared against, both in the test suite and in the ``gradcheck`` CLI
command. The comparison uses a symmetric relative error with an absolute
floor so near-zero gradients do not blow the ratio up.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T

DEFAULT_STEP = 1e-5
PRIMITIVE_TOLERANCE = 1e-6
COMPOSED_TOLERANCE = 1e-4


def numeric_gradient(fn, t: T.Tensor, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite differences of scalar ``fn()`` w.r.t. ``t``'s entries.

    ``fn`` must recompute the loss from scratch using ``t.data``; it is
    evaluated 2 * t.size times.
    """
    grad = np.zeros_like(t.data)
    flat_data = t.data.ravel()
    flat_grad = grad.ravel()
    with T.no_grad():
        for i in range(flat_data.size):
            saved = flat_data[i]
            flat_data[i] = saved + h
            f_plus = fn()
            flat_data[i] = saved - h
            f_minus = fn()
            flat_data[i] = saved
            flat_grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|, 1e-8) over all entries."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(build_loss, params: dict[str, T.Tensor],
                    h: float = DEFAULT_STEP,
                    perturb=None) -> dict[str, float]:
    """Compare analytic and numeric gradients for every named parameter.

    ``build_loss`` takes no arguments and returns a scalar Tensor freshly
    computed from the current parameter values. ``perturb`` is a test hook:
    when given, it is called as ``perturb(name, grad)`` and may return a
    deliberately wrong gradient to prove the comparison can fail.
    Returns the max relative error per parameter name.
    """
    for p in params.values():
        p.zero_grad()
    loss = build_loss()
    T.backward(loss)
    analytic = {}
    for name, p in params.items():
        grad = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if perturb is not None:
            grad = perturb(name, grad)
        analytic[name] = grad

    def value():
        return build_loss().item()

    errors = {}
    for name, p in params.items():
        numeric = numeric_gradient(value, p, h=h)
        errors[name] = max_relative_error(analytic[name], numeric)
    for p in params.values():
        p.zero_grad()
    return errors


def run_gradient_checks(perturb=None) -> list[tuple[str, float, bool]]:
    """The built-in suite: one case per primitive plus the composed model.

    Returns (name, max_relative_error, passed) triples. Used by the CLI.
    """
    rng = np.random.default_rng(7)
    results = []

    def case(name, build_loss, params, tol):
        errors = check_gradients(build_loss, params, perturb=perturb)
        worst = max(errors.values())
        results.append((name, worst, worst < tol))

    a = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = T.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    s = T.Tensor(rng.normal(size=(1, 4)), requires_grad=True)

    case("add", lambda: T.tensor_sum(T.mul(T.add(a, s), b)), {"a": a, "b": b, "s": s},
         PRIMITIVE_TOLERANCE)
    case("sub", lambda: T.tensor_sum(T.mul(T.sub(a, s), b)), {"a": a, "s": s},
         PRIMITIVE_TOLERANCE)
    case("mul", lambda: T.tensor_sum(T.mul(T.mul(a, b), b)), {"a": a, "b": b},
         PRIMITIVE_TOLERANCE)
    case("div", lambda: T.tensor_sum(T.div(a, T.add(T.mul(b, b), 1.0))), {"a": a, "b": b},
         PRIMITIVE_TOLERANCE)
    case("exp", lambda: T.tensor_sum(T.exp(T.mul(a, 0.5))), {"a": a}, PRIMITIVE_TOLERANCE)
    case("log", lambda: T.tensor_sum(T.log(T.add(T.mul(a, a), 0.5))), {"a": a},
         PRIMITIVE_TOLERANCE)
    case("tanh", lambda: T.tensor_sum(T.tanh(a)), {"a": a}, PRIMITIVE_TOLERANCE)
    case("sigmoid", lambda: T.tensor_sum(T.sigmoid(a)), {"a": a}, PRIMITIVE_TOLERANCE)

    slope = T.Tensor(0.3, requires_grad=True)
    case("prelu", lambda: T.tensor_sum(T.prelu(a, slope)), {"a": a, "slope": slope},
         PRIMITIVE_TOLERANCE)
    case("clamp", lambda: T.tensor_sum(T.clamp(T.mul(a, a), 0.05, None)), {"a": a},
         PRIMITIVE_TOLERANCE)

    m1 = T.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    m2 = T.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    case("matmul", lambda: T.tensor_sum(T.tanh(T.matmul(m1, m2))), {"m1": m1, "m2": m2},
         PRIMITIVE_TOLERANCE)

    bm1 = T.Tensor(rng.normal(size=(2, 4, 3)), requires_grad=True)
    case("matmul_batched", lambda: T.tensor_sum(T.tanh(T.matmul(bm1, m2))),
         {"bm1": bm1, "m2": m2}, PRIMITIVE_TOLERANCE)

    cx = T.Tensor(rng.normal(size=(4, 5, 6)), requires_grad=True)
    ck = T.Tensor(rng.normal(size=(3, 4, 3, 3)) * 0.3, requires_grad=True)
    case("conv2d", lambda: T.tensor_sum(T.tanh(T.conv2d(cx, ck))), {"x": cx, "k": ck},
         PRIMITIVE_TOLERANCE)

    case("sum_axis", lambda: T.tensor_sum(T.mul(T.tensor_sum(a, axis=0, keepdims=True), s)),
         {"a": a, "s": s}, PRIMITIVE_TOLERANCE)
    case("mean_axis", lambda: T.tensor_sum(T.mul(T.tensor_mean(a, axis=1, keepdims=True),
                                                 T.tensor_mean(b, axis=1, keepdims=True))),
         {"a": a, "b": b}, PRIMITIVE_TOLERANCE)
    case("reshape_stack", lambda: T.tensor_sum(T.mul(T.stack([T.reshape(a, (4, 3)),
                                                              T.reshape(b, (4, 3))], axis=0),
                                                     T.stack([T.reshape(b, (4, 3)),
                                                              T.reshape(a, (4, 3))], axis=0))),
         {"a": a, "b": b}, PRIMITIVE_TOLERANCE)
    case("getitem", lambda: T.tensor_sum(T.mul(a[1:, :2], a[:2, 2:])), {"a": a},
         PRIMITIVE_TOLERANCE)

    from .model import ModelConfig, TrajectoryModel, toy_instance
    from .gaussian import decode_gaussian, nll_loss
    from .attention import ea_output

    # Central differences straddle the prelu kink whenever a pre-activation
    # sits within the step size of zero, which inflates the reported error
    # even though the analytic gradient is the correct one-sided derivative.
    # This seed pair keeps every stack pre-activation at least 1e-3 from
    # zero, two orders of magnitude above the step.
    config = ModelConfig(stack_layers=2)
    model = TrajectoryModel(config, seed=31)
    instance = toy_instance(agents=3, config=config, seed=5)

    def full_loss():
        layers = model.intermediate_outputs(instance)
        out, _ = ea_output(layers, model.params["ea/theta"], model.params["ea/bias"],
                           model.params["ea/alpha"])
        field = decode_gaussian(out)
        return nll_loss(field, instance.fut_rel)

    case("composed_model", full_loss, model.params, COMPOSED_TOLERANCE)
    return results
