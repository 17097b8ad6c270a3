"""Training: sampled-softmax losses, exact gradients, Adam, early stopping.

Each training sequence (s, r, o) contributes up to two loss terms: predicting
r from the entity-step output and predicting o from the relation-step output,
each as a sampled softmax over the true label plus type-matched log-uniform
negatives. Gradients are reverse-mode through the whole graph, computed by
hand against the forward caches, so they can be checked against finite
differences in float64.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import IndexedDataset, batch_iterator
from .model import (
    ARCH_DSKG,
    ARCH_SHARED,
    ModelParams,
    active_cells,
    forward_batch,
    init_params,
    lstm_backward,
    named_tensors,
    save_checkpoint,
)
from .sampling import log_uniform_probs, log_uniform_sample, negatives_for_batch

ARCH_CHOICES = ("dskg", "shared-2", "shared-4")
PRECISION_CHOICES = ("standard", "high")
DEFAULT_NEGATIVES = 512


@dataclass
class TrainConfig:
    """Hyperparameters and variant switches."""

    learning_rate: float = 0.001
    batch_size: int = 2048
    embed_dim: int = 512
    num_layers: int = 2
    keep_prob: float = 0.5
    entity_negatives: int | None = None
    relation_negatives: int | None = None
    arch: str = "dskg"  # dskg | shared-2 | shared-4
    relation_loss: bool = True
    epochs: int = 100
    eval_interval: int = 1
    patience: int = 3
    seed: int = 0
    shared_negatives: bool = False
    sampling_correction: bool = False
    precision: str = "standard"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in (0, 1]")
        if self.arch not in ARCH_CHOICES:
            raise ValueError(f"arch must be one of {ARCH_CHOICES}")
        if self.precision not in PRECISION_CHOICES:
            raise ValueError(f"precision must be one of {PRECISION_CHOICES}")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ValueError("batch_size >= 1, epochs >= 0, patience >= 1 required")

    def model_arch(self) -> tuple[str, int]:
        """Map the variant name to (model architecture, layer count)."""
        if self.arch == "dskg":
            return ARCH_DSKG, self.num_layers
        return ARCH_SHARED, int(self.arch.split("-")[1])

    def numpy_dtype(self):
        return np.float64 if self.precision == "high" else np.float32

    def resolve_negatives(self, num_entities: int, num_relations: int) -> tuple[int, int]:
        n_e = self.entity_negatives
        n_r = self.relation_negatives
        if n_e is None:
            n_e = min(DEFAULT_NEGATIVES, num_entities - 1)
        if n_r is None:
            n_r = min(DEFAULT_NEGATIVES, num_relations - 1)
        if not 1 <= n_e < num_entities:
            raise ValueError("entity_negatives must be in [1, num_entities)")
        if not 1 <= n_r < num_relations:
            raise ValueError("relation_negatives must be in [1, num_relations)")
        return n_e, n_r


def sampled_softmax_loss(scores, true_index: int = 0):
    """Cross-entropy over the true label plus its negative set.

    loss = -score[true] + log sum_j exp(score[j]), stabilized by max
    subtraction. Accepts a single score vector or a (batch, candidates)
    matrix; returns a scalar or a per-row vector accordingly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("sampled_softmax_loss requires finite scores")
    top = scores.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(scores - top).sum(axis=-1)) + top[..., 0]
    loss = lse - scores[..., true_index]
    return float(loss) if loss.ndim == 0 else loss


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def _loss_term_per_example(weight, bias, h, cand, log_q):
    """Scores, per-row loss, and softmax grads for per-example candidates."""
    gathered = weight[cand]  # (B, C, k)
    scores = np.einsum("bck,bk->bc", gathered, h) + bias[cand]
    if log_q is not None:
        scores = scores - log_q[cand]
    losses = sampled_softmax_loss(scores)
    return losses, (gathered, scores.astype(np.float64))


def _loss_term_shared(weight, bias, h, true_ids, neg_ids, log_q):
    """Same contract with one negative set shared across the batch.

    A negative that collides with a row's true label is masked out of that
    row (score -inf), which zeroes both its probability and its gradient.
    """
    s_true = np.einsum("bk,bk->b", h, weight[true_ids]) + bias[true_ids]
    s_neg = h @ weight[neg_ids].T + bias[neg_ids]
    if log_q is not None:
        s_true = s_true - log_q[true_ids]
        s_neg = s_neg - log_q[neg_ids]
    scores = np.concatenate([s_true[:, None], s_neg], axis=1).astype(np.float64)
    collide = neg_ids[None, :] == np.asarray(true_ids)[:, None]
    scores[:, 1:][collide] = -np.inf
    top = scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(scores - top).sum(axis=1)) + top[:, 0]
    losses = lse - scores[:, 0]
    return losses, scores


def _backward_term_per_example(grads_w, grads_b, h, cand, gathered, scores, batch_size):
    dscores = _softmax_rows(scores)
    dscores[:, 0] -= 1.0
    dscores /= batch_size
    dscores = dscores.astype(h.dtype)
    dh = np.einsum("bc,bck->bk", dscores, gathered)
    np.add.at(grads_w, cand, dscores[..., None] * h[:, None, :])
    np.add.at(grads_b, cand, dscores)
    return dh


def _backward_term_shared(grads_w, grads_b, weight, h, true_ids, neg_ids, scores, batch_size):
    shifted = scores - scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    probs[:, 0] -= 1.0
    probs /= batch_size
    dscores = probs.astype(h.dtype)
    dh = dscores[:, :1] * weight[true_ids] + dscores[:, 1:] @ weight[neg_ids]
    np.add.at(grads_w, true_ids, dscores[:, :1] * h)
    np.add.at(grads_b, true_ids, dscores[:, 0])
    grads_w[neg_ids] += dscores[:, 1:].T @ h
    grads_b[neg_ids] += dscores[:, 1:].sum(axis=0)
    return dh


def _backward_network(params: ModelParams, cache, dh_s, dh_r, grads: ModelParams):
    shared = params.arch == ARCH_SHARED
    cells1 = active_cells(params, 0)
    cells2 = active_cells(params, 1)
    gstack1 = grads.shared_cells if shared else grads.entity_cells
    gstack2 = grads.shared_cells if shared else grads.relation_cells
    num_layers = params.num_layers

    # Relation step first: it feeds gradient back into the entity-step states.
    carried = [None] * num_layers
    d_out = dh_r
    for layer in reversed(range(num_layers)):
        mask = cache.masks2[layer]
        dh = d_out if mask is None else d_out * mask
        dx, dh_prev, dc_prev, g_wx, g_wh, g_b = lstm_backward(
            cells2[layer], cache.step2[layer], dh, np.zeros_like(dh)
        )
        gstack2[layer].w_x += g_wx
        gstack2[layer].w_h += g_wh
        gstack2[layer].b += g_b
        carried[layer] = (dh_prev, dc_prev)
        d_out = dx
    np.add.at(grads.relation_embed, cache.r_ids, d_out)

    d_out = dh_s
    for layer in reversed(range(num_layers)):
        mask = cache.masks1[layer]
        dh = d_out if mask is None else d_out * mask
        dh_carry, dc_carry = carried[layer]
        dx, _, _, g_wx, g_wh, g_b = lstm_backward(
            cells1[layer], cache.step1[layer], dh + dh_carry, dc_carry
        )
        gstack1[layer].w_x += g_wx
        gstack1[layer].w_h += g_wh
        gstack1[layer].b += g_b
        d_out = dx
    np.add.at(grads.entity_embed, cache.s_ids, d_out)


def batch_loss_and_grads(
    params: ModelParams,
    batch: np.ndarray,
    config: TrainConfig,
    *,
    negative_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
    entity_candidates: np.ndarray | None = None,
    relation_candidates: np.ndarray | None = None,
    want_grads: bool = True,
):
    """Mean loss over a batch and, optionally, gradients for every tensor.

    Candidate matrices (column 0 = true label) may be supplied explicitly,
    which makes the loss a deterministic function of the parameters; that is
    what the finite-difference checks rely on. Dropout is active only when a
    ``dropout_rng`` is given and ``config.keep_prob < 1``.
    """
    batch = np.asarray(batch)
    subjects, relations, objects = batch[:, 0], batch[:, 1], batch[:, 2]
    batch_size = len(batch)
    keep = config.keep_prob if (dropout_rng is not None and config.keep_prob < 1.0) else None
    h_s, h_r, cache = forward_batch(
        params, subjects, relations, keep_prob=keep, rng=dropout_rng
    )

    n_e, n_r = config.resolve_negatives(params.num_entities, params.num_relations)
    log_q_e = log_q_r = None
    if config.sampling_correction:
        log_q_e = np.log(log_uniform_probs(params.num_entities))
        log_q_r = np.log(log_uniform_probs(params.num_relations))

    shared_mode = config.shared_negatives and entity_candidates is None
    if entity_candidates is not None:
        cand_e = np.asarray(entity_candidates)
    elif shared_mode:
        neg_e = log_uniform_sample(params.num_entities, n_e, None, negative_rng)
    else:
        cand_e = np.column_stack(
            [objects, negatives_for_batch(objects, params.num_entities, n_e, negative_rng)]
        )

    total = np.zeros(batch_size, dtype=np.float64)
    rel_term = None
    if config.relation_loss:
        if relation_candidates is not None:
            cand_r = np.asarray(relation_candidates)
        elif shared_mode:
            neg_r = log_uniform_sample(params.num_relations, n_r, None, negative_rng)
        else:
            cand_r = np.column_stack(
                [relations, negatives_for_batch(relations, params.num_relations, n_r, negative_rng)]
            )
        if shared_mode and relation_candidates is None:
            losses, rel_term = _loss_term_shared(
                params.relation_out_w, params.relation_out_b, h_s, relations, neg_r, log_q_r
            )
        else:
            losses, rel_term = _loss_term_per_example(
                params.relation_out_w, params.relation_out_b, h_s, cand_r, log_q_r
            )
        total += losses

    if shared_mode:
        losses, ent_term = _loss_term_shared(
            params.entity_out_w, params.entity_out_b, h_r, objects, neg_e, log_q_e
        )
    else:
        losses, ent_term = _loss_term_per_example(
            params.entity_out_w, params.entity_out_b, h_r, cand_e, log_q_e
        )
    total += losses
    mean_loss = float(total.mean())

    if not want_grads:
        return mean_loss, None

    grads = params.zeros_like()
    if shared_mode:
        dh_r = _backward_term_shared(
            grads.entity_out_w, grads.entity_out_b, params.entity_out_w,
            h_r, objects, neg_e, ent_term, batch_size,
        )
    else:
        dh_r = _backward_term_per_example(
            grads.entity_out_w, grads.entity_out_b, h_r, cand_e, *ent_term, batch_size
        )
    if config.relation_loss:
        if shared_mode and relation_candidates is None:
            dh_s = _backward_term_shared(
                grads.relation_out_w, grads.relation_out_b, params.relation_out_w,
                h_s, relations, neg_r, rel_term, batch_size,
            )
        else:
            dh_s = _backward_term_per_example(
                grads.relation_out_w, grads.relation_out_b, h_s, cand_r, *rel_term, batch_size
            )
    else:
        dh_s = np.zeros_like(h_s)

    _backward_network(params, cache, dh_s, dh_r, grads)
    for name, tensor in named_tensors(grads):
        if not np.all(np.isfinite(tensor)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return mean_loss, grads


def backward(params: ModelParams, batch, config: TrainConfig, **kwargs) -> ModelParams:
    """Gradients of the mean batch loss for every parameter tensor."""
    if len(np.asarray(batch)) == 0:
        raise ValueError("backward requires a non-empty batch")
    _, grads = batch_loss_and_grads(params, batch, config, **kwargs)
    return grads


def triple_loss(
    params: ModelParams,
    triple,
    config: TrainConfig,
    *,
    negative_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
    entity_candidates=None,
    relation_candidates=None,
) -> float:
    """Loss of a single (s, r, o) sequence under the configured variant."""
    loss, _ = batch_loss_and_grads(
        params,
        np.asarray(triple).reshape(1, 3),
        config,
        negative_rng=negative_rng,
        dropout_rng=dropout_rng,
        entity_candidates=entity_candidates,
        relation_candidates=relation_candidates,
        want_grads=False,
    )
    return loss


@dataclass
class AdamState:
    step: int
    first: dict
    second: dict
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: ModelParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        step=0,
        first={name: np.zeros_like(t) for name, t in named_tensors(params)},
        second={name: np.zeros_like(t) for name, t in named_tensors(params)},
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, learning_rate: float):
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    correct1 = 1.0 - state.beta1 ** state.step
    correct2 = 1.0 - state.beta2 ** state.step
    for (name, tensor), (_, grad) in zip(named_tensors(params), named_tensors(grads)):
        m = state.first[name]
        v = state.second[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        tensor -= learning_rate * (m / correct1) / (np.sqrt(v / correct2) + state.eps)


@dataclass
class TrainResult:
    params: ModelParams
    final_params: ModelParams
    log: list[str] = field(default_factory=list)
    best_val_mrr: float | None = None
    epochs_run: int = 0


def train(
    dataset: IndexedDataset,
    config: TrainConfig,
    *,
    log_path=None,
    checkpoint_path=None,
    val_metric_fn: Callable[[ModelParams], tuple[float, float]] | None = None,
    progress: Callable[[str], None] | None = None,
) -> TrainResult:
    """Epoch loop with periodic validation and MRR-based early stopping.

    Every ``eval_interval`` epochs the filtered validation MRR is computed
    (``val_metric_fn`` overrides the default metric, mainly for tests); the
    best-scoring parameters are kept and training stops after ``patience``
    consecutive non-improving evaluations or at the epoch cap. Log lines are
    ``epoch, mean_loss, val_MRR, val_Hits@10, elapsed_seconds``,
    tab-separated, with ``-`` for epochs without evaluation.
    """
    from .evaluation import EnhanceConfig, evaluate_entity_prediction

    arch, layers = config.model_arch()
    params = init_params(
        dataset.vocab.num_entities,
        dataset.vocab.num_relations,
        config.embed_dim,
        layers,
        arch=arch,
        seed=config.seed,
        dtype=config.numpy_dtype(),
    )
    adam = adam_init(params)

    if val_metric_fn is None and len(dataset.valid):
        def val_metric_fn(p):
            report = evaluate_entity_prediction(
                p, dataset, EnhanceConfig(enabled=False), split="valid"
            )
            return report.mrr, report.hits10

    result = TrainResult(params=params, final_params=params)
    best_mrr = -np.inf
    bad_evals = 0
    started = time.perf_counter()
    log_handle = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            negative_rng = np.random.default_rng([config.seed, 2, epoch])
            dropout_rng = (
                np.random.default_rng([config.seed, 3, epoch])
                if config.keep_prob < 1.0
                else None
            )
            loss_sum = 0.0
            seen = 0
            for batch in batch_iterator(
                dataset.train, config.batch_size, seed=[config.seed, 1, epoch]
            ):
                loss, grads = batch_loss_and_grads(
                    params, batch, config,
                    negative_rng=negative_rng, dropout_rng=dropout_rng,
                )
                adam_step(params, grads, adam, config.learning_rate)
                loss_sum += loss * len(batch)
                seen += len(batch)
            mean_loss = loss_sum / max(seen, 1)

            val_mrr = val_hits = None
            if val_metric_fn is not None and epoch % config.eval_interval == 0:
                val_mrr, val_hits = val_metric_fn(params)
                if val_mrr > best_mrr:
                    best_mrr = val_mrr
                    result.params = params.copy()
                    result.best_val_mrr = val_mrr
                    bad_evals = 0
                    if checkpoint_path:
                        save_checkpoint(result.params, checkpoint_path)
                else:
                    bad_evals += 1

            elapsed = time.perf_counter() - started
            line = "\t".join(
                [
                    str(epoch),
                    f"{mean_loss:.6f}",
                    "-" if val_mrr is None else f"{val_mrr:.4f}",
                    "-" if val_hits is None else f"{val_hits:.4f}",
                    f"{elapsed:.3f}",
                ]
            )
            result.log.append(line)
            result.epochs_run = epoch
            if log_handle:
                log_handle.write(line + "\n")
                log_handle.flush()
            if progress:
                progress(line)
            if bad_evals >= config.patience:
                break
    finally:
        if log_handle:
            log_handle.close()

    result.final_params = params
    if result.best_val_mrr is None:
        result.params = params
        if checkpoint_path:
            save_checkpoint(params, checkpoint_path)
    return result
