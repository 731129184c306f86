"""The training loop shared by every experiment arm.

The loop is deliberately blind: it pulls (inputs, targets, ids) from a
batch source, takes one optimizer step per batch, and evaluates at epoch
ends. It never inspects ids or plan metadata, so its behavior is a
function of the delivered tensor sequence alone.

Optional instrumentation:

- parameter trace: a snapshot of theta after every step (used to measure
  oscillation in the scalar regression studies)
- step-bias trace: b_k = <full_grad, batch_grad - full_grad> at each
  step, the inner product that separates an honest shuffle (mean about
  zero across an epoch) from an adversarial ordering. Needs a full-data
  gradient per step, so it refuses datasets above a size cap.
"""

from dataclasses import dataclass

import numpy as np

from . import optim
from .errors import DimensionError
from .metrics import MetricsLog
from .tensor import dot, lmean


def batched_losses(model, inputs, targets, chunk_size=1024):
    """Per-example losses evaluated in fixed-size chunks (bounded memory)."""
    n = inputs.shape[0]
    out = np.zeros(n)
    for start in range(0, n, chunk_size):
        sl = slice(start, min(start + chunk_size, n))
        out[sl] = model.forward_loss(inputs[sl], targets[sl])[0]
    return out


def batched_predict(model, inputs, chunk_size=1024):
    n = inputs.shape[0]
    parts = [model.predict(inputs[start : min(start + chunk_size, n)])
             for start in range(0, n, chunk_size)]
    return np.concatenate(parts)


def evaluate(model, dataset, chunk_size=1024):
    """(mean loss, accuracy) on a dataset; accuracy is None for regression."""
    per = batched_losses(model, dataset.inputs, dataset.targets, chunk_size)
    loss = lmean(per)
    if dataset.classes is None:
        return loss, None
    preds = batched_predict(model, dataset.inputs, chunk_size)
    acc = float(np.mean(preds == dataset.targets.astype(np.int64)))
    return loss, acc


@dataclass
class Trainer:
    """A model plus its optimizer state; one step per delivered batch."""

    model: object
    opt: optim.OptimizerState

    def step(self, inputs, targets):
        grad = self.model.backward(inputs, targets)
        self.model.params = optim.step(self.opt, self.model.params, grad)


def run_training(trainer, source, epochs, *, train_eval=None, test_eval=None,
                 meta=None, log=None, bias_dataset=None, bias_max_points=50_000,
                 param_trace=False, eval_chunk=2048):
    """Run ``epochs`` epochs of ``trainer`` on ``source``; returns (log, extras).

    meta holds the constant row fields (run_id, policy, mode, seed).
    bias_dataset switches on the step-bias trace against that dataset.
    """
    meta = dict(meta or {})
    log = log if log is not None else MetricsLog()
    model = trainer.model

    if bias_dataset is not None and bias_dataset.n > bias_max_points:
        raise DimensionError(
            f"step-bias trace needs a full-data gradient per step; dataset of "
            f"{bias_dataset.n} exceeds the cap of {bias_max_points}"
        )

    traces = [model.params.copy()] if param_trace else None
    bias_steps = [] if bias_dataset is not None else None
    bias_epoch_means = [] if bias_dataset is not None else None

    for epoch in range(1, epochs + 1):
        source.reset(epoch)
        epoch_bias = []
        for inputs, targets, _ids in source:
            if bias_dataset is not None:
                full = model.backward(bias_dataset.inputs, bias_dataset.targets)
                batch = model.backward(inputs, targets)
                b_k = dot(full.values, batch.values - full.values)
                epoch_bias.append(b_k)
                model.params = optim.step(trainer.opt, model.params, batch)
            else:
                trainer.step(inputs, targets)
            if param_trace:
                traces.append(model.params.copy())
        if bias_dataset is not None:
            bias_steps.append(epoch_bias)
            bias_epoch_means.append(lmean(epoch_bias))

        bias_mean = bias_epoch_means[-1] if bias_dataset is not None else None
        if train_eval is not None:
            loss, acc = evaluate(model, train_eval, eval_chunk)
            log.add(epoch=epoch, split="train", loss=loss, accuracy=acc,
                    epoch_mean_bias_term=bias_mean, **meta)
        if test_eval is not None:
            loss, acc = evaluate(model, test_eval, eval_chunk)
            log.add(epoch=epoch, split="test", loss=loss, accuracy=acc, **meta)

    extras = {}
    if param_trace:
        extras["param_trace"] = np.asarray(traces)
    if bias_dataset is not None:
        extras["bias_steps"] = bias_steps
        extras["bias_epoch_means"] = bias_epoch_means
    return log, extras
