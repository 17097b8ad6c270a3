"""Type-switched stacked LSTM over (entity, relation) input pairs.

A triple (s, r, o) is processed as a two-step sequence: the embedding of s
runs through one stack of LSTM layers from a zero state, then the embedding
of r runs through a second stack that starts from the first stack's per-layer
states. In the default architecture the two stacks have independent cells
("dskg"); in the shared variant both steps reuse one stack ("shared"). The
top-layer hidden state after step 1 scores relations, the one after step 2
scores entities, each through its own output projection.

Checkpoint layout: magic ``DSKGCKPT``, version byte, header
(num_entities, num_relations, embed_dim, num_layers as little-endian uint32,
architecture byte), then every tensor from :func:`named_tensors` in order as
little-endian float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

ARCH_DSKG = "dskg"
ARCH_SHARED = "shared"
_ARCH_CODES = {ARCH_DSKG: 0, ARCH_SHARED: 1}
_ARCH_NAMES = {code: name for name, code in _ARCH_CODES.items()}

CHECKPOINT_MAGIC = b"DSKGCKPT"
CHECKPOINT_VERSION = 1

MAX_LAYERS = 4

# Gate rows within the stacked weight matrices: input, forget, candidate, output.


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class CellParams:
    """One LSTM cell: stacked per-gate weights (4h rows) and biases."""

    w_x: np.ndarray  # (4h, input_dim)
    w_h: np.ndarray  # (4h, h)
    b: np.ndarray  # (4h,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    def copy(self) -> "CellParams":
        return CellParams(self.w_x.copy(), self.w_h.copy(), self.b.copy())


@dataclass
class ModelParams:
    """All trainable tensors plus the architecture switch.

    Entity, relation, and shared cell stacks all exist regardless of the
    architecture so that gradients for the inactive branch are well-defined
    zeros; the forward pass selects a stack per timestep.
    """

    entity_embed: np.ndarray
    relation_embed: np.ndarray
    entity_cells: list[CellParams]
    relation_cells: list[CellParams]
    shared_cells: list[CellParams]
    entity_out_w: np.ndarray
    entity_out_b: np.ndarray
    relation_out_w: np.ndarray
    relation_out_b: np.ndarray
    arch: str

    @property
    def num_entities(self) -> int:
        return self.entity_embed.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.entity_embed.shape[1]

    @property
    def num_layers(self) -> int:
        return len(self.entity_cells)

    @property
    def dtype(self):
        return self.entity_embed.dtype

    def copy(self) -> "ModelParams":
        return ModelParams(
            entity_embed=self.entity_embed.copy(),
            relation_embed=self.relation_embed.copy(),
            entity_cells=[c.copy() for c in self.entity_cells],
            relation_cells=[c.copy() for c in self.relation_cells],
            shared_cells=[c.copy() for c in self.shared_cells],
            entity_out_w=self.entity_out_w.copy(),
            entity_out_b=self.entity_out_b.copy(),
            relation_out_w=self.relation_out_w.copy(),
            relation_out_b=self.relation_out_b.copy(),
            arch=self.arch,
        )

    def zeros_like(self) -> "ModelParams":
        out = self.copy()
        for _, tensor in named_tensors(out):
            tensor[...] = 0
        return out

    def astype(self, dtype) -> "ModelParams":
        out = self.copy()
        return ModelParams(
            entity_embed=out.entity_embed.astype(dtype),
            relation_embed=out.relation_embed.astype(dtype),
            entity_cells=[
                CellParams(c.w_x.astype(dtype), c.w_h.astype(dtype), c.b.astype(dtype))
                for c in out.entity_cells
            ],
            relation_cells=[
                CellParams(c.w_x.astype(dtype), c.w_h.astype(dtype), c.b.astype(dtype))
                for c in out.relation_cells
            ],
            shared_cells=[
                CellParams(c.w_x.astype(dtype), c.w_h.astype(dtype), c.b.astype(dtype))
                for c in out.shared_cells
            ],
            entity_out_w=out.entity_out_w.astype(dtype),
            entity_out_b=out.entity_out_b.astype(dtype),
            relation_out_w=out.relation_out_w.astype(dtype),
            relation_out_b=out.relation_out_b.astype(dtype),
            arch=out.arch,
        )


def named_tensors(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Every trainable tensor with a stable name, in checkpoint order."""
    out = [
        ("entity_embed", params.entity_embed),
        ("relation_embed", params.relation_embed),
    ]
    for stack_name, stack in (
        ("entity_cells", params.entity_cells),
        ("relation_cells", params.relation_cells),
        ("shared_cells", params.shared_cells),
    ):
        for layer, cell in enumerate(stack):
            out.append((f"{stack_name}.{layer}.w_x", cell.w_x))
            out.append((f"{stack_name}.{layer}.w_h", cell.w_h))
            out.append((f"{stack_name}.{layer}.b", cell.b))
    out.extend(
        [
            ("entity_out_w", params.entity_out_w),
            ("entity_out_b", params.entity_out_b),
            ("relation_out_w", params.relation_out_w),
            ("relation_out_b", params.relation_out_b),
        ]
    )
    return out


def _glorot(rng, rows: int, cols: int, dtype, fan_in: int | None = None, fan_out: int | None = None):
    bound = np.sqrt(6.0 / ((fan_in or rows) + (fan_out or cols)))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)


def _init_cell(rng, input_dim: int, hidden: int, dtype) -> CellParams:
    # One Glorot block per weight kind; the per-gate fan is (input_dim, hidden).
    w_x = _glorot(rng, 4 * hidden, input_dim, dtype, fan_in=input_dim, fan_out=hidden)
    w_h = _glorot(rng, 4 * hidden, hidden, dtype, fan_in=hidden, fan_out=hidden)
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden : 2 * hidden] = 1.0  # forget gate starts open
    return CellParams(w_x, w_h, b)


def init_params(
    num_entities: int,
    num_relations: int,
    embed_dim: int,
    num_layers: int,
    arch: str = ARCH_DSKG,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Seed-deterministic Glorot initialization of every tensor."""
    if embed_dim < 1:
        raise ValueError("embed_dim must be >= 1")
    if not 1 <= num_layers <= MAX_LAYERS:
        raise ValueError(f"num_layers must be in 1..{MAX_LAYERS}")
    if num_entities < 1 or num_relations < 1:
        raise ValueError("vocabulary sizes must be >= 1")
    if arch not in _ARCH_CODES:
        raise ValueError(f"unknown architecture {arch!r}")

    rng = np.random.default_rng(seed)
    k = embed_dim
    entity_embed = _glorot(rng, num_entities, k, dtype)
    relation_embed = _glorot(rng, num_relations, k, dtype)
    entity_cells = [_init_cell(rng, k, k, dtype) for _ in range(num_layers)]
    relation_cells = [_init_cell(rng, k, k, dtype) for _ in range(num_layers)]
    shared_cells = [_init_cell(rng, k, k, dtype) for _ in range(num_layers)]
    entity_out_w = _glorot(rng, num_entities, k, dtype)
    relation_out_w = _glorot(rng, num_relations, k, dtype)
    return ModelParams(
        entity_embed=entity_embed,
        relation_embed=relation_embed,
        entity_cells=entity_cells,
        relation_cells=relation_cells,
        shared_cells=shared_cells,
        entity_out_w=entity_out_w,
        entity_out_b=np.zeros(num_entities, dtype=dtype),
        relation_out_w=relation_out_w,
        relation_out_b=np.zeros(num_relations, dtype=dtype),
        arch=arch,
    )


def active_cells(params: ModelParams, timestep: int) -> list[CellParams]:
    """Cells used at a timestep: entity stack at step 0, relation stack at 1."""
    if params.arch == ARCH_SHARED:
        return params.shared_cells
    return params.entity_cells if timestep == 0 else params.relation_cells


def lstm_forward(cell: CellParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """Batched LSTM step; returns (h, c, cache) with cache for the backward pass."""
    hidden = cell.hidden_size
    if x.shape[-1] != cell.w_x.shape[1]:
        raise ValueError(
            f"input size {x.shape[-1]} does not match cell input {cell.w_x.shape[1]}"
        )
    pre = x @ cell.w_x.T + h_prev @ cell.w_h.T + cell.b
    gate_in = _sigmoid(pre[:, :hidden])
    gate_forget = _sigmoid(pre[:, hidden : 2 * hidden])
    candidate = np.tanh(pre[:, 2 * hidden : 3 * hidden])
    gate_out = _sigmoid(pre[:, 3 * hidden :])
    c = gate_forget * c_prev + gate_in * candidate
    tanh_c = np.tanh(c)
    h = gate_out * tanh_c
    cache = (x, h_prev, c_prev, gate_in, gate_forget, candidate, gate_out, tanh_c)
    return h, c, cache


def lstm_backward(cell: CellParams, cache, dh: np.ndarray, dc: np.ndarray):
    """Gradients of one LSTM step given upstream dh and dc."""
    x, h_prev, c_prev, gate_in, gate_forget, candidate, gate_out, tanh_c = cache
    dc_total = dc + dh * gate_out * (1.0 - tanh_c * tanh_c)
    d_pre_in = (dc_total * candidate) * gate_in * (1.0 - gate_in)
    d_pre_forget = (dc_total * c_prev) * gate_forget * (1.0 - gate_forget)
    d_pre_cand = (dc_total * gate_in) * (1.0 - candidate * candidate)
    d_pre_out = (dh * tanh_c) * gate_out * (1.0 - gate_out)
    d_pre = np.concatenate([d_pre_in, d_pre_forget, d_pre_cand, d_pre_out], axis=1)
    grad_w_x = d_pre.T @ x
    grad_w_h = d_pre.T @ h_prev
    grad_b = d_pre.sum(axis=0)
    dx = d_pre @ cell.w_x
    dh_prev = d_pre @ cell.w_h
    dc_prev = dc_total * gate_forget
    return dx, dh_prev, dc_prev, grad_w_x, grad_w_h, grad_b


def lstm_step(cell: CellParams, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]):
    """Single-vector LSTM step: (h', c') from input x and state (h, c)."""
    h_prev, c_prev = state
    h, c, _ = lstm_forward(
        cell, np.asarray(x)[None, :], np.asarray(h_prev)[None, :], np.asarray(c_prev)[None, :]
    )
    return h[0], c[0]


@dataclass
class ForwardCache:
    s_ids: np.ndarray
    r_ids: np.ndarray
    step1: list
    step2: list
    masks1: list
    masks2: list
    states1: list


def forward_batch(
    params: ModelParams,
    s_ids,
    r_ids,
    keep_prob: float | None = None,
    rng: np.random.Generator | None = None,
):
    """Run a batch of (entity, relation) pairs through both timesteps.

    Returns (h_s, h_r, cache): top-layer outputs after the entity and the
    relation step. With ``keep_prob`` set, each layer's upward/output copy is
    masked and rescaled while the state carried into the relation step stays
    intact; with ``keep_prob`` None the pass is deterministic.
    """
    s_ids = np.atleast_1d(np.asarray(s_ids))
    r_ids = np.atleast_1d(np.asarray(r_ids))
    if s_ids.min() < 0 or s_ids.max() >= params.num_entities:
        raise ValueError("entity id out of range")
    if r_ids.min() < 0 or r_ids.max() >= params.num_relations:
        raise ValueError("relation id out of range")
    if keep_prob is not None and not 0.0 < keep_prob <= 1.0:
        raise ValueError("keep_prob must be in (0, 1]")
    if keep_prob is not None and rng is None:
        raise ValueError("dropout requires an rng")

    dtype = params.dtype
    batch = len(s_ids)
    k = params.embed_dim
    zeros = np.zeros((batch, k), dtype=dtype)

    def dropout_mask():
        if keep_prob is None or keep_prob >= 1.0:
            return None
        keep = rng.random((batch, k)) < keep_prob
        return (keep / keep_prob).astype(dtype)

    cells1 = active_cells(params, 0)
    cells2 = active_cells(params, 1)

    step1, masks1, states1 = [], [], []
    layer_in = params.entity_embed[s_ids]
    for cell in cells1:
        h, c, cache = lstm_forward(cell, layer_in, zeros, zeros)
        step1.append(cache)
        states1.append((h, c))
        mask = dropout_mask()
        masks1.append(mask)
        layer_in = h if mask is None else h * mask
    h_s = layer_in

    step2, masks2 = [], []
    layer_in = params.relation_embed[r_ids]
    for layer, cell in enumerate(cells2):
        h_prev, c_prev = states1[layer]
        h, c, cache = lstm_forward(cell, layer_in, h_prev, c_prev)
        step2.append(cache)
        mask = dropout_mask()
        masks2.append(mask)
        layer_in = h if mask is None else h * mask
    h_r = layer_in

    cache = ForwardCache(
        s_ids=s_ids, r_ids=r_ids, step1=step1, step2=step2,
        masks1=masks1, masks2=masks2, states1=states1,
    )
    return h_s, h_r, cache


def forward_triple(
    params: ModelParams,
    subject: int,
    relation: int,
    keep_prob: float | None = None,
    seed: int | None = None,
):
    """Single-pair convenience wrapper; returns (h_s, h_r) vectors."""
    rng = np.random.default_rng(seed) if keep_prob is not None else None
    h_s, h_r, _ = forward_batch(params, [subject], [relation], keep_prob=keep_prob, rng=rng)
    return h_s[0], h_r[0]


def output_block(params: ModelParams, kind: str):
    if kind == "entity":
        return params.entity_out_w, params.entity_out_b
    if kind == "relation":
        return params.relation_out_w, params.relation_out_b
    raise ValueError(f"unknown label kind {kind!r}")


def logits(params: ModelParams, h: np.ndarray, kind: str, candidates=None) -> np.ndarray:
    """Unscaled label scores: row(label) . h + bias(label) over one type block.

    ``candidates`` may be None (score the whole lexicon), a 1-d id list, or a
    per-row (batch, n) id matrix matching a batched ``h``.
    """
    weight, bias = output_block(params, kind)
    h = np.asarray(h)
    if h.shape[-1] != params.embed_dim:
        raise ValueError("hidden vector has wrong width")
    if candidates is None:
        return h @ weight.T + bias
    cand = np.asarray(candidates)
    if cand.size and (cand.min() < 0 or cand.max() >= weight.shape[0]):
        raise ValueError(f"candidate id out of range for {kind} block")
    if h.ndim == 1:
        return weight[cand] @ h + bias[cand]
    if cand.ndim == 1:
        return h @ weight[cand].T + bias[cand]
    return np.einsum("bck,bk->bc", weight[cand], h) + bias[cand]


def save_checkpoint(params: ModelParams, path):
    with open(path, "wb") as buf:
        buf.write(CHECKPOINT_MAGIC)
        buf.write(struct.pack("<B", CHECKPOINT_VERSION))
        buf.write(
            struct.pack(
                "<4IB",
                params.num_entities,
                params.num_relations,
                params.embed_dim,
                params.num_layers,
                _ARCH_CODES[params.arch],
            )
        )
        for _, tensor in named_tensors(params):
            buf.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32) -> ModelParams:
    with open(path, "rb") as buf:
        magic = buf.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (bad magic {magic!r})")
        (version,) = struct.unpack("<B", buf.read(1))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        num_entities, num_relations, embed_dim, num_layers, arch_code = struct.unpack(
            "<4IB", buf.read(17)
        )
        params = init_params(
            num_entities, num_relations, embed_dim, num_layers,
            arch=_ARCH_NAMES[arch_code], seed=0, dtype=dtype,
        )
        for name, tensor in named_tensors(params):
            raw = buf.read(tensor.size * 4)
            if len(raw) != tensor.size * 4:
                raise ValueError(f"{path}: truncated checkpoint at tensor {name}")
            tensor[...] = np.frombuffer(raw, dtype="<f4").reshape(tensor.shape)
        if buf.read(1):
            raise ValueError(f"{path}: trailing bytes after last tensor")
    return params
