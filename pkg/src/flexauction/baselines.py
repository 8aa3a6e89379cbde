"""Mechanisms that are *not* incentive compatible, kept as negative controls for the verifiers."""

from __future__ import annotations

import numpy as np

from . import dist
from .flex import FlexibilityStructure
from .mechanism import BatchOutcome, OptimalAuction, virtual_matrix


class ReserveAlwaysAuction(OptimalAuction):
    """Optimal allocation, but every winner pays its reserve price."""

    name = "reserve-always"

    def batch(self, theta, levels, rng=None) -> BatchOutcome:
        out = super().batch(theta, levels, rng)
        levels = np.asarray(levels)
        pay = np.zeros_like(out.payments)
        for l, model in enumerate(self.models):
            for c in range(1, model.k + 1):
                mask = out.wins[:, l] & (levels[:, l] == c)
                pay[mask, l] = dist.reserve_price(model, c)
        return BatchOutcome(out.wins, pay, out.virtual, out.w_thr)


class NaiveSecondPrice:
    """Highest report wins and pays the runner-up's valuation; everyone else served pays a flat reserve.

    Consumers are served in decreasing order of reported valuation, each
    taking the highest-indexed free good inside its reported set.  With
    ``same_level_only`` the top bidder pays the runner-up's valuation only
    when both reported the same level, and the reserve otherwise.
    """

    def __init__(self, models, structure: FlexibilityStructure, reserve: float = 0.5, same_level_only: bool = False):
        self.models = tuple(models)
        self.structure = structure
        self.reserve = reserve
        self.same_level_only = same_level_only
        self.name = "naive-same-level" if same_level_only else "naive-second-price"

    def batch(self, theta, levels, rng=None) -> BatchOutcome:
        theta = np.asarray(theta, dtype=float)
        levels = np.asarray(levels, dtype=np.int64)
        S, N = theta.shape
        M = self.structure.M
        sizes = np.asarray(self.structure.set_sizes)
        rows = np.arange(S)
        order = np.lexsort((np.broadcast_to(np.arange(N), (S, N)), -theta), axis=-1)
        taken = np.zeros((S, M), dtype=bool)
        wins = np.zeros((S, N), dtype=bool)
        pay = np.zeros((S, N))
        cols = np.arange(M)
        for rank in range(N):
            who = order[:, rank]
            free = ~taken & (cols[None, :] < sizes[levels[rows, who] - 1][:, None])
            got = free.any(axis=1)
            good = M - 1 - np.argmax(free[:, ::-1], axis=1)
            taken[rows[got], good[got]] = True
            wins[rows, who] = got
            if rank == 0:
                if N > 1:
                    runner = order[:, 1]
                    price = theta[rows, runner]
                    if self.same_level_only:
                        same = levels[rows, runner] == levels[rows, who]
                        price = np.where(same, price, self.reserve)
                else:
                    price = np.full(S, self.reserve)
            else:
                price = np.full(S, self.reserve)
            pay[rows, who] = np.where(got, price, 0.0)
        return BatchOutcome(wins, pay, virtual_matrix(self.models, theta, levels), np.zeros((S, self.structure.k)))
