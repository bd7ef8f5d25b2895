"""
Constrained span-to-slot alignment.

Every slot is aligned to one contiguous question span, and aligned spans do
not overlap. The distribution over alignments is
``p(A) = exp(sum_k M[k, span_k]) / Z``. Its marginals are computed exactly
by forward-backward over the lattice whose vertices are
``(position, covered slot subset)``::

    (i, U) -> (i + 1, U)                 weight 0, token i is skipped
    (i, U) -> (j + 1, U | {k})           weight M[k, i, j], k not in U

The start vertex is ``(0, {})`` and the final vertex ``(n, all slots)``.
Scores, forward and backward values live in log space. Unreachable vertices
hold the finite floor `NEG` so that gradients stay finite.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import torch
from scipy.special import logsumexp

NEG = -1e30


class InfeasibleSlotError(RuntimeError):

    def __init__(self, k):
        super(InfeasibleSlotError, self).__init__(
            "slot %d has no feasible span" % k)
        self.k = k


class NoAlignmentError(RuntimeError):
    pass


class CombinatorialBlowupError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlignmentConfig(object):
    """
    Attributes:
        max_row_span: longest span a row slot may align to.
        max_slots: largest number of slots the lattice accepts.
    """
    max_row_span: int = 6
    max_slots: int = 8

    def __post_init__(self):
        if self.max_row_span < 1:
            raise RuntimeError("max_row_span must be at least 1")
        if not 1 <= self.max_slots <= 16:
            raise RuntimeError("max_slots must be between 1 and 16")


@dataclass(frozen=True)
class FeasibleSpans(object):
    """
    Per slot, the spans ``(i, j)`` (inclusive) it may align to, over a
    question of `n` tokens whose last token is the sentinel.
    """
    spans: Tuple[Tuple[Tuple[int, int], ...], ...]
    n: int

    def __len__(self):
        return len(self.spans)

    def __getitem__(self, k):
        return self.spans[k]

    def mask(self):
        """Boolean array of shape ``(m, n, n)``."""
        mask = np.zeros((len(self.spans), self.n, self.n), dtype=bool)
        for k, spans in enumerate(self.spans):
            for i, j in spans:
                mask[k, i, j] = True
        return mask

    def count(self):
        return sum(len(spans) for spans in self.spans)


@dataclass
class AlignmentMarginals(object):
    """
    Attributes:
        E: expected alignments, shape ``(m, n, n)``, zero off the feasible
            set.
        logZ: log partition value from the forward pass.
        logZ_backward: log partition value from the backward pass.
        n_vertices: lattice vertex count.
        n_operations: edge relaxations performed by the forward pass.
    """
    E: object
    logZ: object
    logZ_backward: object = None
    n_vertices: Optional[int] = None
    n_operations: Optional[int] = None


def feasible_spans(slots, question, config=None):
    """
    Spans each slot may align to.

    A row slot takes every span of at most ``max_row_span`` tokens that
    contains an entity token, plus the sentinel singleton. A column slot
    takes every non-sentinel singleton.

    Args:
        slots (list): the abstract program's slots.
        question (Question): the annotated question.
        config (AlignmentConfig, optional): span limits.

    Returns:
        `FeasibleSpans`

    Raises:
        InfeasibleSlotError: when a slot has no span.

    >>> from pytqa.grammar import Slot
    >>> from pytqa.tables import Question, Token, ALL_ROW
    >>> question = Question((Token('a'), Token('b'), Token(ALL_ROW)))
    >>> feasible_spans([Slot('column', 0)], question).spans
    (((0, 0), (1, 1)),)
    """
    config = config or AlignmentConfig()
    n = question.n
    sentinel = n - 1
    entity = question.entity_positions()
    spans = []
    for k, slot in enumerate(slots):
        if slot.kind == 'row':
            slot_spans = [(i, j) for i in range(sentinel)
                          for j in range(i, min(sentinel,
                                                i + config.max_row_span))
                          if any(p in entity for p in range(i, j + 1))]
            slot_spans.append((sentinel, sentinel))
        else:
            slot_spans = [(i, i) for i in range(sentinel)]
        if not slot_spans:
            raise InfeasibleSlotError(k)
        spans.append(tuple(slot_spans))
    return FeasibleSpans(tuple(spans), n)


def _subset_tables(m):
    size = 1 << m
    subsets = torch.arange(size)
    bits = torch.tensor([1 << k for k in range(m)], dtype=torch.long)
    flip = subsets[None, :] ^ bits[:, None]
    has = (subsets[None, :] & bits[:, None]) != 0
    return flip, has


def forward_backward(M, F, max_slots=8):
    """
    Exact alignment marginals and log partition value.

    Args:
        M: score tensor of shape ``(m, n, n)``; only feasible entries are
            read. A torch tensor keeps the autograd graph.
        F (FeasibleSpans): the feasible spans.
        max_slots (int, optional): largest accepted slot count.

    Returns:
        `AlignmentMarginals` holding torch tensors

    Raises:
        NoAlignmentError: when no complete alignment exists.

    >>> F = FeasibleSpans((((0, 0), (1, 1), (2, 2)),) * 2, 4)
    >>> marginals = forward_backward(np.zeros((2, 4, 4)), F)
    >>> assert np.allclose(marginals.E[0].diagonal()[:3].numpy(), 1. / 3)
    """
    M = torch.as_tensor(M)
    if not M.is_floating_point():
        M = M.to(torch.float64)
    m, n = len(F), F.n
    if m > max_slots:
        raise CombinatorialBlowupError(
            "%d slots exceed the lattice limit of %d" % (m, max_slots))
    if tuple(M.shape) != (m, n, n):
        raise RuntimeError("score shape %s does not match (%d, %d, %d)" %
                           (tuple(M.shape), m, n, n))
    size = 1 << m
    full = size - 1
    feasible = torch.as_tensor(F.mask())
    floor = torch.full_like(M, NEG)
    W = torch.where(feasible, M, floor)
    flip, has = _subset_tables(m)
    neg = M.new_full((size,), NEG)
    low = M.new_full((), NEG)

    alpha = [torch.cat([M.new_zeros(1), neg[1:]])]
    for p in range(1, n + 1):
        j = p - 1
        previous = torch.stack(alpha)
        terms = (previous[:, flip].permute(1, 0, 2) +
                 W[:, :p, j][:, :, None])
        terms = torch.where(has[:, None, :], terms, low)
        terms = torch.cat([terms.reshape(-1, size), alpha[-1][None]], 0)
        alpha.append(torch.logsumexp(terms, 0))
    alpha = torch.stack(alpha)

    beta = [None] * (n + 1)
    beta[n] = torch.cat([neg[:full], M.new_zeros(1)])
    for p in range(n - 1, -1, -1):
        later = torch.stack(beta[p + 1:])
        terms = later[:, flip].permute(1, 0, 2) + W[:, p, p:][:, :, None]
        terms = torch.where(has[:, None, :], low, terms)
        terms = torch.cat([terms.reshape(-1, size), beta[p + 1][None]], 0)
        beta[p] = torch.logsumexp(terms, 0)
    beta = torch.stack(beta)

    logZ = alpha[n, full]
    logZ_backward = beta[0, 0]
    if logZ.item() < NEG / 2:
        raise NoAlignmentError("no complete alignment of %d slots over %d "
                               "tokens" % (m, n))
    paths = (alpha[:n, None, :][None] + W[..., None] +
             beta[1:][:, flip].permute(1, 0, 2)[:, None])
    paths = torch.where(has[:, None, None, :], low, paths)
    E = torch.exp(torch.logsumexp(paths, -1) - logZ) * feasible
    n_operations = n * size + F.count() * (size // 2)
    return AlignmentMarginals(E, logZ, logZ_backward, (n + 1) * size,
                              n_operations)


def brute_force_marginals(M, F, limit=10 ** 6):
    """
    Marginals by enumerating every total non-overlapping alignment.

    Args:
        M: score array of shape ``(m, n, n)``.
        F (FeasibleSpans): the feasible spans.
        limit (int, optional): largest number of candidate alignments.

    Returns:
        `AlignmentMarginals` holding numpy arrays

    Raises:
        CombinatorialBlowupError: above `limit` candidate alignments.
        NoAlignmentError: when no complete alignment exists.
    """
    M = np.asarray(M, dtype=np.float64)
    total = int(np.prod([len(spans) for spans in F.spans], dtype=object))
    if total > limit:
        raise CombinatorialBlowupError(
            "%d candidate alignments exceed the limit of %d" %
            (total, limit))
    alignments, scores = [], []
    for alignment in itertools.product(*F.spans):
        if _overlaps(alignment):
            continue
        alignments.append(alignment)
        scores.append(sum(M[k, i, j] for k, (i, j) in enumerate(alignment)))
    if not alignments:
        raise NoAlignmentError("no complete alignment of %d slots over %d "
                               "tokens" % (len(F), F.n))
    scores = np.array(scores)
    logZ = logsumexp(scores)
    E = np.zeros(M.shape)
    for alignment, p in zip(alignments, np.exp(scores - logZ)):
        for k, (i, j) in enumerate(alignment):
            E[k, i, j] += p
    return AlignmentMarginals(E, logZ, logZ)


def _overlaps(alignment):
    ordered = sorted(alignment)
    return any(a[1] >= b[0] for a, b in zip(ordered, ordered[1:]))


def marginal_span_pool(E, span_reps):
    """
    Per-slot expectation of span representations.

    Args:
        E: marginals of shape ``(m, n, n)``.
        span_reps: span representations of shape ``(n, n, d)``.

    Returns:
        pooled representations of shape ``(m, d)``

    >>> E = np.zeros((1, 2, 2))
    >>> E[0, 0, 0] = E[0, 1, 1] = 0.5
    >>> reps = np.arange(8.).reshape((2, 2, 2))
    >>> marginal_span_pool(E, reps)
    array([[3., 4.]])
    """
    if isinstance(E, torch.Tensor):
        return torch.einsum('kij,ijd->kd', E, span_reps)
    return np.einsum('kij,ijd->kd', E, span_reps)


def alignment_rows(marginals, F):
    """
    ``(slot, i, j, probability)`` tuples over the feasible spans.
    """
    E = marginals.E
    if isinstance(E, torch.Tensor):
        E = E.detach().cpu().numpy()
    return [(k, i, j, float(E[k, i, j]))
            for k, spans in enumerate(F.spans) for i, j in spans]
