"""Factorized action distribution: masked categorical move x independent Bernoulli claims.

An actor emits ``n_moves + n_bits`` logits. The joint log-probability is the
categorical term plus the sum of per-device Bernoulli terms.
"""
from __future__ import annotations

import numpy as np

MASK_PENALTY = -1e9


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-_softplus(-z))


class FactorizedHead:
    def __init__(self, n_moves: int, n_bits: int):
        self.n_moves = n_moves
        self.n_bits = n_bits

    @property
    def width(self) -> int:
        return self.n_moves + self.n_bits

    def split(self, logits, mask=None):
        logits = np.asarray(logits, dtype=float)
        move = logits[..., : self.n_moves]
        if mask is not None:
            move = np.where(mask, move, move + MASK_PENALTY)
        return move, logits[..., self.n_moves :]

    def probabilities(self, logits, mask=None):
        move, bits = self.split(logits, mask)
        return np.exp(_log_softmax(move)), _sigmoid(bits)

    def sample(self, logits, mask, rng: np.random.Generator):
        """Draw ``(move, bits, log_prob)`` for one observation."""
        if mask is not None and not np.asarray(mask).any():
            raise AssertionError("every move is masked; stay must stay feasible")
        move_logits, bit_logits = self.split(logits, mask)
        logp_moves = _log_softmax(move_logits)
        move = int(rng.choice(self.n_moves, p=np.exp(logp_moves) / np.exp(logp_moves).sum()))
        bits = rng.random(self.n_bits) < _sigmoid(bit_logits)
        return move, bits, float(self.log_prob(logits, mask, move, bits))

    def greedy(self, logits, mask=None):
        move_logits, bit_logits = self.split(logits, mask)
        return int(np.argmax(move_logits)), bit_logits > 0

    def log_prob(self, logits, mask, moves, bits):
        move_logits, bit_logits = self.split(logits, mask)
        logp_moves = _log_softmax(move_logits)
        moves = np.asarray(moves)
        b = np.asarray(bits, dtype=float)
        cat = np.take_along_axis(logp_moves, moves[..., None], axis=-1)[..., 0]
        bern = (b * bit_logits - _softplus(bit_logits)).sum(axis=-1)
        return cat + bern

    def entropy(self, logits, mask=None):
        move_logits, bit_logits = self.split(logits, mask)
        logp = _log_softmax(move_logits)
        p = np.exp(logp)
        cat = -(p * logp).sum(axis=-1)
        bern = (_softplus(bit_logits) - bit_logits * _sigmoid(bit_logits)).sum(axis=-1)
        return cat + bern

    def logits_grad(self, logits, mask, moves, bits, dlogp, dentropy):
        """d(loss)/d(logits) for a batch, given d(loss)/d(log_prob) and d(loss)/d(entropy).

        Masked move logits receive zero gradient.
        """
        move_logits, bit_logits = self.split(logits, mask)
        logp = _log_softmax(move_logits)
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, np.asarray(moves)[:, None], 1.0, axis=-1)
        cat_h = -(p * logp).sum(axis=-1, keepdims=True)
        g_move = dlogp[:, None] * (onehot - p) + dentropy[:, None] * (-p * (logp + cat_h))
        s = _sigmoid(bit_logits)
        b = np.asarray(bits, dtype=float)
        g_bits = dlogp[:, None] * (b - s) + dentropy[:, None] * (-bit_logits * s * (1.0 - s))
        return np.concatenate([g_move, g_bits], axis=-1)
