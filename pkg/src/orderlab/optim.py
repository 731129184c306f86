"""First-order optimizers: plain SGD, heavy-ball momentum, Adam.

Update rules (eta = learning rate, g = gradient of the mean batch loss):

- sgd:       theta' = theta - eta * g
- momentum:  v' = mu * v - eta * g;  theta' = theta + v'
- adam:      standard bias-corrected moments, eps = 1e-8 added outside
             the square root

With mu = 0 the momentum rule reduces to plain SGD bit for bit: 0 * v is
exactly 0, 0 - eta*g is exactly -(eta*g), and theta + (-(eta*g)) equals
theta - eta*g in IEEE arithmetic. The tests pin that equivalence.

Steps are functional in the parameters (a new array comes back) and
stateful in the optimizer (moments and step count mutate in place). Each
state is bound to one parameter layout and refuses gradients from any
other.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError, NumericError
from .tensor import GradientVector

OPTIMIZER_KINDS = ("sgd", "momentum", "adam")


@dataclass
class OptimizerState:
    kind: str
    lr: float
    layout_id: str
    n_params: int
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    velocity: np.ndarray = None
    m: np.ndarray = None
    v: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.lr < 0:
            raise ValueError(f"negative learning rate {self.lr}")
        zeros = lambda: np.zeros(self.n_params)
        if self.kind == "momentum" and self.velocity is None:
            self.velocity = zeros()
        if self.kind == "adam":
            if self.m is None:
                self.m = zeros()
            if self.v is None:
                self.v = zeros()


def make_optimizer(spec, layout_id, n_params):
    """Build an OptimizerState from a config dict like {"kind": "adam", "lr": 0.01}."""
    kind = spec.get("kind", "sgd")
    return OptimizerState(
        kind=kind,
        lr=float(spec.get("lr", 0.01)),
        layout_id=layout_id,
        n_params=n_params,
        momentum=float(spec.get("momentum", 0.0)),
        beta1=float(spec.get("beta1", 0.9)),
        beta2=float(spec.get("beta2", 0.999)),
        eps=float(spec.get("eps", 1e-8)),
    )


def step(state, params, grad):
    """Apply one update; returns the new parameter vector."""
    if not isinstance(grad, GradientVector):
        raise TypeError("step expects a GradientVector")
    if grad.layout_id != state.layout_id:
        raise LayoutError(
            f"gradient layout {grad.layout_id!r} does not match optimizer "
            f"layout {state.layout_id!r}"
        )
    g = grad.values
    if g.shape != (state.n_params,):
        raise LayoutError(f"gradient length {g.shape} vs {state.n_params} params")

    state.step_count += 1
    if state.kind == "sgd":
        new = params - state.lr * g
    elif state.kind == "momentum":
        state.velocity = state.momentum * state.velocity - state.lr * g
        new = params + state.velocity
    else:  # adam
        t = state.step_count
        state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
        state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
        m_hat = state.m / (1.0 - state.beta1 ** t)
        v_hat = state.v / (1.0 - state.beta2 ** t)
        new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    if not np.all(np.isfinite(new)):
        raise NumericError(f"non-finite parameters after {state.kind} step {state.step_count}")
    return new
