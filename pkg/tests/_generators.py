"""Seeded random instance builders shared by property and acceptance tests."""

from __future__ import annotations

import random

from pauc_eval.types import GroundTruthTurn

# Bounded coordinates keep float error well under the 1e-12 tolerances.
T_START_MAX = 100.0
SPAN_MIN = 1.0
SPAN_MAX = 10.0


def random_turn_instance(
    rng: random.Random,
    max_points: int = 6,
    max_score: int = 2,
    min_points: int = 0,
) -> tuple[GroundTruthTurn, list[tuple[float, int]]]:
    """A random reply turn plus strictly-increasing scored points inside it."""
    while True:
        t_start = round(rng.uniform(0.0, T_START_MAX), 3)
        span = rng.uniform(SPAN_MIN, SPAN_MAX)
        t_end = t_start + span
        n = rng.randint(min_points, max_points)
        taus = sorted(
            {round(rng.uniform(t_start, t_end - span * 1e-6), 6) for _ in range(n)}
        )
        taus = [tau for tau in taus if t_start <= tau < t_end]
        if len(taus) < min_points:
            continue
        scored = [(tau, rng.randint(0, max_score)) for tau in taus]
        turn = GroundTruthTurn(
            gold="a placeholder gold answer", t_start=t_start, t_end=t_end
        )
        return turn, scored


def random_contingency_table(
    rng: random.Random, k: int = 3, max_cell: int = 20
) -> list[list[int]]:
    """A random k x k table with n >= 2 and expected agreement below 1."""
    table = [[rng.randint(0, max_cell) for _ in range(k)] for _ in range(k)]
    n = sum(sum(row) for row in table)
    nonzero = [(i, j) for i in range(k) for j in range(k) if table[i][j] > 0]
    # Too little mass, or all of it on one diagonal cell (which pins
    # expected agreement at exactly 1): seed some disagreement instead of
    # rerolling, so a minimal-entropy rng still terminates.
    if n < 2 or (len(nonzero) == 1 and nonzero[0][0] == nonzero[0][1]):
        table[0][1] += 1
        table[1][0] += 1
    return table
