"""Shared fixtures: small prediction matrices and the desk-scale board data."""
from __future__ import annotations

import csv

import numpy as np
import pytest

from votecert.votes import PredictionMatrix


def random_matrix(seed: int, m: int, d: int, c: int = 2,
                  accuracy: float = 0.7) -> PredictionMatrix:
    """Random voters that agree with the label with the given probability."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, c + 1, size=m)
    preds = rng.integers(1, c + 1, size=(m, d))
    agree = rng.random((m, d)) < accuracy
    preds[agree] = np.broadcast_to(labels[:, None], (m, d))[agree]
    return PredictionMatrix(preds, labels, c)


def make_board_arrays(n: int = 958, seed: int = 7):
    """Board-game style task: 9 ternary cells, positive iff player x holds
    at least 5 of them.  The concept is exactly expressible by a weighted
    vote over per-cell threshold stumps, so margins are learnable."""
    rng = np.random.default_rng(seed)
    cells = rng.choice(["b", "o", "x"], size=(n, 9))
    wins = (cells == "x").sum(axis=1) >= 5
    return cells, wins


def write_board_csv(path, n: int = 958, seed: int = 7) -> None:
    cells, wins = make_board_arrays(n, seed)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"c{i}" for i in range(9)] + ["label"])
        for row, win in zip(cells, wins):
            writer.writerow(list(row) + ["positive" if win else "negative"])


@pytest.fixture(scope="session")
def board_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "boards.csv"
    write_board_csv(path)
    return str(path)


@pytest.fixture
def toy_matrix() -> PredictionMatrix:
    return random_matrix(seed=42, m=200, d=20)
