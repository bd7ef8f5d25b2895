"""
The training objective, the optimization loop and gradient checking.

The loss of an example is the negative log of the modeled probability of
its consistent programs::

    -log sum_h p(h | x, t) sum_a prod_k p(slot k -> a_k | x, t, h, E[A])

where ``h`` ranges over the abstract parents of the consistent programs
and ``a`` over their slot assignments.
"""

import copy
import io
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from .grammar import GrammarConfig, abstract_grammar_for_table
from .lattice import InfeasibleSlotError, NoAlignmentError
from .model import UnrealizableProgramError, save_checkpoint

logger = logging.getLogger(__name__)


class SkipExample(RuntimeError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig(object):
    """
    Attributes:
        epochs: passes over the training examples.
        learning_rate: Adam step size.
        betas: Adam moment coefficients.
        eps: Adam epsilon.
        clip_norm: global gradient norm bound.
        seed: shuffling and dropout seed.
        attention_mode: overrides the model's attention mode when set.
        skip_infeasible: skip examples without a feasible alignment
            instead of failing.
        max_programs: consistent programs kept per example, shortest
            first.
        patience: epochs without dev improvement before stopping.
        max_nonfinite: largest fraction of non-finite losses tolerated in
            an epoch.
        checkpoint_path: where the best model is saved.
        metrics_path: where per-epoch metrics are written.
    """
    epochs: int = 30
    learning_rate: float = 1e-3
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    clip_norm: float = 5.0
    seed: int = 0
    attention_mode: Optional[str] = None
    skip_infeasible: bool = True
    max_programs: int = 200
    patience: int = 10
    max_nonfinite: float = 0.1
    checkpoint_path: Optional[str] = None
    metrics_path: Optional[str] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise RuntimeError("learning_rate must be positive")
        if self.clip_norm <= 0:
            raise RuntimeError("clip_norm must be positive")
        if self.epochs < 0:
            raise RuntimeError("epochs must not be negative")
        if self.max_programs < 1:
            raise RuntimeError("max_programs must be at least 1")


def log_joints(network, encoded, consistent, grammar, grammar_config=None,
               mode=None):
    """
    ``log p(h) + sum_k log p(slot k -> a_k)`` of every consistent program.

    Parents whose slots cannot be aligned are left out.

    Returns:
        list of ``(AbstractProgram, assignment, log-probability tensor)``

    Raises:
        SkipExample: when no parent can be scored.
    """
    joints = []
    for h, assignments in consistent.entries:
        try:
            scores = network.instantiation_log_probs(encoded, h,
                                                     grammar_config, mode)
            logp_h = network.program_log_prob(encoded, grammar, h)
        except (InfeasibleSlotError, NoAlignmentError,
                UnrealizableProgramError) as error:
            logger.debug("%s: parent %s skipped: %s",
                         consistent.example_id, h, error)
            continue
        positions = [dict((c, i) for i, c in enumerate(candidates))
                     for candidates in scores.candidates]
        for assignment in assignments:
            try:
                logp = logp_h + sum(scores.log_probs[k][positions[k][c]]
                                    for k, c in enumerate(assignment))
            except KeyError:
                raise SkipExample("%s: cached candidate is not generated "
                                  "by the grammar" % consistent.example_id)
            joints.append((h, assignment, logp))
    if not joints:
        raise SkipExample("%s: no consistent program can be scored" %
                          consistent.example_id)
    return joints


def example_loss(network, example, table, consistent, grammar=None,
                 grammar_config=None, mode=None):
    """
    Negative log marginal probability of the consistent programs.

    Args:
        network (ParserNetwork): the parser.
        example (Example): the example.
        table (Table): its table.
        consistent (ConsistentSet): its consistent programs.
        grammar (AbstractGrammar, optional): the table's grammar.
        grammar_config (GrammarConfig, optional): candidate settings.
        mode (str, optional): attention mode.

    Returns:
        scalar loss tensor

    Raises:
        SkipExample: for empty consistent sets or unalignable examples.
    """
    if not consistent:
        raise SkipExample("%s has no consistent program" % example.id)
    grammar_config = grammar_config or GrammarConfig()
    if grammar is None:
        grammar = abstract_grammar_for_table(table, grammar_config)
    encoded = network.encode(example.question, table)
    joints = log_joints(network, encoded, consistent, grammar,
                        grammar_config, mode)
    return -torch.logsumexp(torch.stack([j for _, _, j in joints]), 0)


@dataclass(frozen=True)
class EpochMetrics(object):
    epoch: int
    loss: float
    dev_accuracy: float
    skipped: int = 0
    nonfinite: int = 0

    def __str__(self):
        return '%d\t%.6f\t%.4f' % (self.epoch, self.loss, self.dev_accuracy)


@dataclass
class TrainingResult(object):
    network: object
    metrics: list = field(default_factory=list)
    best_epoch: int = 0


def train(network, corpus, consistent_sets, config=None, search_config=None,
          eval_config=None):
    """
    Per-example Adam updates with gradient clipping and early stopping on
    dev denotation accuracy.

    Args:
        network (ParserNetwork): the parser, updated in place.
        corpus (Corpus): training and dev examples.
        consistent_sets (dict): example id to `ConsistentSet`; incomplete
            sets are not trained on.
        config (TrainConfig, optional): optimization settings.
        search_config (SearchConfig, optional): grammar and size cap the
            consistent sets were searched with.
        eval_config (EvalConfig, optional): dev evaluation settings.

    Returns:
        `TrainingResult` holding the best-dev network, or the final
        network when the corpus has no dev split

    Raises:
        TrainingError: when too many losses of an epoch are not finite.
    """
    from .evalkit import EvalConfig, accuracy
    from .search import SearchConfig

    config = config or TrainConfig()
    search_config = search_config or SearchConfig()
    eval_config = eval_config or EvalConfig(
        max_rules=search_config.max_rules, grammar=search_config.grammar)
    torch.manual_seed(config.seed)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    grammar_config = search_config.grammar
    optimizer = torch.optim.Adam(network.parameters(),
                                 lr=config.learning_rate,
                                 betas=tuple(config.betas), eps=config.eps)
    examples = []
    for example in corpus.examples:
        consistent = consistent_sets.get(example.id)
        if example.split != 'train' or consistent is None:
            continue
        if not consistent.complete:
            logger.warning("%s: search incomplete, not trained on",
                           example.id)
            continue
        if consistent:
            examples.append((example, consistent.truncate(
                config.max_programs)))
    grammars = dict((table_id, abstract_grammar_for_table(table,
                                                          grammar_config))
                    for table_id, table in corpus.tables.items())
    dev = corpus.select('dev')
    result = TrainingResult(network)
    best_accuracy, best_state, stale = -1., None, 0
    for epoch in range(1, config.epochs + 1):
        network.train()
        losses, skipped, nonfinite = [], 0, 0
        for index in rng.permutation(len(examples)):
            example, consistent = examples[index]
            table = corpus.table_for(example)
            optimizer.zero_grad()
            try:
                loss = example_loss(network, example, table, consistent,
                                    grammars[example.table_id],
                                    grammar_config, config.attention_mode)
            except SkipExample as error:
                if not config.skip_infeasible:
                    raise TrainingError(str(error))
                logger.warning("skipped: %s", error)
                skipped += 1
                continue
            if not torch.isfinite(loss):
                logger.warning("%s: non-finite loss", example.id)
                nonfinite += 1
                continue
            loss.backward()
            nn.utils.clip_grad_norm_(network.parameters(), config.clip_norm)
            optimizer.step()
            losses.append(loss.item())
        if nonfinite > config.max_nonfinite * max(len(examples), 1):
            raise TrainingError(
                "epoch %d: %d of %d losses are not finite" %
                (epoch, nonfinite, len(examples)))
        dev_accuracy = accuracy(dev, network, eval_config,
                                config.attention_mode) if len(dev) else 0.
        metrics = EpochMetrics(epoch, float(np.mean(losses)) if losses
                               else 0., dev_accuracy, skipped, nonfinite)
        result.metrics.append(metrics)
        logger.info("epoch %d: loss %.4f, dev accuracy %.4f, %d skipped",
                    epoch, metrics.loss, dev_accuracy, skipped)
        if not len(dev):
            result.best_epoch = epoch
        elif dev_accuracy > best_accuracy:
            best_accuracy, stale = dev_accuracy, 0
            best_state = copy.deepcopy(network.state_dict())
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("no dev improvement for %d epochs, stopping",
                            stale)
                break
    if best_state is not None:
        network.load_state_dict(best_state)
    network.eval()
    if config.checkpoint_path:
        save_checkpoint(network, config.checkpoint_path,
                        best_epoch=result.best_epoch)
    if config.metrics_path:
        write_metrics(result.metrics, config.metrics_path)
    return result


def write_metrics(metrics, path):
    """``epoch<tab>loss<tab>dev_acc`` lines."""
    with io.open(path, 'w', encoding='utf-8') as stream:
        for line in metrics:
            stream.write(str(line) + '\n')


@dataclass
class GradCheckReport(object):
    """
    Attributes:
        max_error: largest relative error, 0 without coordinates.
        errors: relative error per sampled coordinate.
        coordinates: ``(parameter name, flat index)`` per coordinate.
    """
    max_error: float
    errors: np.ndarray
    coordinates: list


def grad_check(network, example, table, consistent, grammar_config=None,
               n_coordinates=64, step=1e-5, floor=1e-4, seed=0,
               mode=None):
    """
    Compare reverse-mode gradients of `example_loss` with central finite
    differences on a random sample of parameter coordinates, in float64
    with dropout disabled. The network itself is not modified.

    Returns:
        `GradCheckReport`; the relative error of a coordinate is
        ``|g - fd| / max(|g|, |fd|, floor)``
    """
    network = copy.deepcopy(network).double().eval()
    grammar_config = grammar_config or GrammarConfig()
    grammar = abstract_grammar_for_table(table, grammar_config)

    def loss():
        return example_loss(network, example, table, consistent, grammar,
                            grammar_config, mode)

    named = [(n, p) for n, p in network.named_parameters() if p.numel()]
    pool = [(name, index) for name, p in named for index in range(p.numel())]
    if not pool:
        return GradCheckReport(0., np.zeros(0), [])
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(len(pool), size=min(n_coordinates, len(pool)),
                       replace=False)
    coordinates = [pool[i] for i in sorted(picks)]
    gradients, _ = network.gradient(loss())
    parameters = dict(named)
    errors = []
    with torch.no_grad():
        for name, index in coordinates:
            flat = parameters[name].data.view(-1)
            original = flat[index].item()
            flat[index] = original + step
            plus = loss().item()
            flat[index] = original - step
            minus = loss().item()
            flat[index] = original
            numeric = (plus - minus) / (2 * step)
            analytic = gradients[name].view(-1)[index].item()
            errors.append(abs(analytic - numeric) /
                          max(abs(analytic), abs(numeric), floor))
    errors = np.array(errors)
    return GradCheckReport(float(errors.max()), errors, coordinates)
