import math

import numpy as np
import pytest
from hypothesis import settings

from dskg import data
from dskg.model import init_params, named_tensors

settings.register_profile("default", deadline=None)
settings.load_profile("default")


def scalar_lstm_oracle(cell, x, h_prev, c_prev):
    """Unit-by-unit gate equations, independent of the vectorized path."""
    hidden = cell.hidden_size

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    def gate(row):
        pre = cell.b[row]
        for j in range(len(x)):
            pre += cell.w_x[row][j] * x[j]
        for j in range(hidden):
            pre += cell.w_h[row][j] * h_prev[j]
        return pre

    h_new, c_new = [], []
    for unit in range(hidden):
        gate_in = sig(gate(unit))
        gate_forget = sig(gate(hidden + unit))
        candidate = math.tanh(gate(2 * hidden + unit))
        gate_out = sig(gate(3 * hidden + unit))
        c = gate_forget * c_prev[unit] + gate_in * candidate
        c_new.append(c)
        h_new.append(gate_out * math.tanh(c))
    return np.array(h_new), np.array(c_new)


def make_params(num_entities=6, num_relations=4, embed_dim=4, num_layers=1,
                arch="dskg", seed=0, dtype=np.float64, jitter=0.3):
    """Initialized params plus a seeded perturbation so no tensor is special."""
    params = init_params(num_entities, num_relations, embed_dim, num_layers,
                         arch=arch, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1000)
    for _, tensor in named_tensors(params):
        tensor += rng.normal(0.0, jitter, tensor.shape).astype(dtype)
    return params


@pytest.fixture
def tiny_dataset():
    train = data.parse_triples(
        [
            "a\tp\tb",
            "c\tp\tb",
            "a\tq\tc",
            "b\tq\td",
            "d\tp\ta",
        ]
    )
    valid = [data.RawTriple("a", "p", "c")]
    test = [data.RawTriple("c", "q", "b")]
    return data.index_dataset(train, valid, test)


@pytest.fixture
def inverse_pair_files(tmp_path):
    """Train/test splits holding one contains/containedby inverse pair."""
    (tmp_path / "train.txt").write_text(
        "USA\tcontains\tNewYorkCity\n"
        "France\tcontains\tParis\n"
        "Paris\tcontainedby\tFrance\n",
        encoding="utf-8",
    )
    (tmp_path / "valid.txt").write_text("France\tcontains\tParis\n", encoding="utf-8")
    (tmp_path / "test.txt").write_text("NewYorkCity\tcontainedby\tUSA\n", encoding="utf-8")
    return tmp_path
