"""
Inference, denotation accuracy, gold program posteriors and error
categories.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from joblib import Parallel, delayed
from scipy.special import logsumexp

from .executor import execute, typecheck
from .grammar import (GrammarConfig, abstract_grammar_for_table,
                      slot_candidates, instantiate)
from .lattice import InfeasibleSlotError, NoAlignmentError
from .program import print_program
from .tables import Denotation, denotation_equal
from .trainer import SkipExample, log_joints

logger = logging.getLogger(__name__)

NO_CANDIDATES = 'no-candidates'
NO_ALIGNMENT = 'no-alignment'
EMPTY_BEAM = 'empty-beam'

COVERAGE = 'coverage'
ABSTRACTION = 'abstraction'
INSTANTIATION = 'instantiation'


class GoldNotConsistentError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalConfig(object):
    """
    Attributes:
        beam_size: abstract programs decoded, defaults to the model's.
        max_rules: size cap of decoded abstract programs.
        grammar: instantiation grammar settings.
    """
    beam_size: Optional[int] = None
    max_rules: int = 6
    grammar: GrammarConfig = field(default_factory=GrammarConfig)

    def __post_init__(self):
        if self.beam_size is not None and self.beam_size < 1:
            raise RuntimeError("beam_size must be at least 1")
        if self.max_rules < 3:
            raise RuntimeError("max_rules must be at least 3")


@dataclass
class Prediction(object):
    """
    Attributes:
        example_id: the example.
        program: the chosen program, None on failure.
        denotation: its denotation, None on failure.
        parent: its abstract program.
        score: ``log p(h) + log p(z | h)`` of the chosen program.
        failure: why nothing executed, if so.
        beam: the decoded ``(AbstractProgram, log-probability)`` pairs.
    """
    example_id: str
    program: object = None
    denotation: Optional[Denotation] = None
    parent: object = None
    score: float = float('-inf')
    failure: Optional[str] = None
    beam: list = field(default_factory=list)

    def is_correct(self, example):
        return self.denotation is not None and \
            denotation_equal(self.denotation, example.denotation)


def predict(example, table, network, config=None, mode=None):
    """
    Decode the top abstract programs, fill every slot with its most
    probable candidate and execute the best-scoring well-typed program,
    falling back to the next one when execution fails.

    Args:
        example (Example): the example.
        table (Table): its table.
        network (ParserNetwork): the trained parser.
        config (EvalConfig, optional): decoding settings.
        mode (str, optional): attention mode.

    Returns:
        `Prediction`
    """
    config = config or EvalConfig()
    k = config.beam_size or network.config.beam_size
    network.eval()
    prediction = Prediction(example.id)
    with torch.no_grad():
        grammar = abstract_grammar_for_table(table, config.grammar)
        encoded = network.encode(example.question, table)
        prediction.beam = network.beam_search(encoded, grammar,
                                              config.max_rules, k)
        if not prediction.beam:
            prediction.failure = EMPTY_BEAM
            return prediction
        ranked = []
        failure = None
        for h, logp_h in prediction.beam:
            candidates = [slot_candidates(slot, table, example.question,
                                          config.grammar)
                          for slot in h.slots]
            if not all(candidates):
                failure = NO_CANDIDATES
                continue
            try:
                scores = network.instantiation_log_probs(
                    encoded, h, config.grammar, mode, candidates)
            except (InfeasibleSlotError, NoAlignmentError):
                failure = NO_ALIGNMENT
                continue
            best = [int(torch.argmax(p)) for p in scores.log_probs]
            score = logp_h + sum(float(p[i])
                                 for p, i in zip(scores.log_probs, best))
            assignment = [c[i] for c, i in zip(candidates, best)]
            ranked.append((score, h, assignment))
    ranked.sort(key=lambda r: -r[0])
    for score, h, assignment in ranked[:k]:
        program = instantiate(h, assignment, table)
        if not typecheck(program, table):
            continue
        result = execute(program, table)
        if isinstance(result, Denotation):
            prediction.program = program
            prediction.denotation = result
            prediction.parent = h
            prediction.score = score
            prediction.failure = None
            return prediction
        failure = result.kind
    prediction.failure = failure or NO_CANDIDATES
    return prediction


def predict_corpus(corpus, network, config=None, mode=None, n_jobs=1):
    """Predictions for every example, in corpus order."""
    return Parallel(n_jobs=n_jobs, prefer='threads')(
        delayed(predict)(example, corpus.table_for(example), network,
                         config, mode)
        for example in corpus.examples)


def accuracy(corpus, network, config=None, mode=None, n_jobs=1,
             predictions=None):
    """
    Fraction of examples whose predicted denotation equals the gold one;
    failures count as wrong and an empty corpus scores 0.
    """
    if not len(corpus):
        logger.warning("accuracy of an empty split is defined as 0")
        return 0.
    if predictions is None:
        predictions = predict_corpus(corpus, network, config, mode, n_jobs)
    correct = [p.is_correct(e) for p, e in zip(predictions,
                                                corpus.examples)]
    return float(np.mean(correct))


def gold_posterior(network, example, table, consistent, gold_programs=None,
                   grammar_config=None, mode=None):
    """
    ``log sum_{z*} p(z* | x, t, d)`` where the posterior renormalizes the
    modeled joint probability over the consistent programs and ``z*``
    ranges over the gold programs.

    Raises:
        GoldNotConsistentError: when no gold program is among the scored
            consistent programs.
    """
    grammar_config = grammar_config or GrammarConfig()
    gold_programs = gold_programs or example.gold_programs or ()
    gold = set(print_program(z, table) for z in gold_programs)
    network.eval()
    with torch.no_grad():
        grammar = abstract_grammar_for_table(table, grammar_config)
        encoded = network.encode(example.question, table)
        try:
            joints = log_joints(network, encoded, consistent, grammar,
                                grammar_config, mode)
        except SkipExample as error:
            raise GoldNotConsistentError(str(error))
    scores = np.array([float(j) for _, _, j in joints])
    is_gold = np.array([print_program(instantiate(h, a), table) in gold
                        for h, a, _ in joints])
    if not is_gold.any():
        raise GoldNotConsistentError(
            "%s: no gold program is consistent" % example.id)
    return float(min(logsumexp(scores[is_gold]) - logsumexp(scores), 0.))


def gold_posteriors(corpus, network, consistent_sets, grammar_config=None,
                    mode=None):
    """
    Gold posteriors of the examples with gold programs and consistent
    programs; examples whose gold programs are not consistent are left out.

    Returns:
        array of log posteriors
    """
    posteriors = []
    for example in corpus.examples:
        consistent = consistent_sets.get(example.id)
        if not example.gold_programs or not consistent:
            continue
        try:
            posteriors.append(gold_posterior(
                network, example, corpus.table_for(example), consistent,
                grammar_config=grammar_config, mode=mode))
        except GoldNotConsistentError as error:
            logger.warning("gold posterior excluded: %s", error)
    return np.array(posteriors)


def error_breakdown(corpus, predictions, consistent_sets):
    """
    Categorize every wrong prediction: coverage when the example has no
    consistent program, abstraction when no decoded abstract program is a
    consistent parent, instantiation otherwise.

    Returns:
        dict from category to count
    """
    counts = {ABSTRACTION: 0, INSTANTIATION: 0, COVERAGE: 0}
    for example, prediction in zip(corpus.examples, predictions):
        if prediction.is_correct(example):
            continue
        consistent = consistent_sets.get(example.id)
        if not consistent:
            counts[COVERAGE] += 1
        elif not set(h for h, _ in prediction.beam) & \
                set(consistent.parents):
            counts[ABSTRACTION] += 1
        else:
            counts[INSTANTIATION] += 1
    return counts


@dataclass(frozen=True)
class EvaluationReport(object):
    """
    Accuracy, the proportion of errors per category and the mean gold
    posterior (NaN without gold programs).
    """
    accuracy: float
    abstraction: float
    instantiation: float
    coverage: float
    mean_gold_posterior: float

    def __str__(self):
        return '\t'.join('%.4f' % x for x in (
            self.accuracy, self.abstraction, self.instantiation,
            self.coverage, self.mean_gold_posterior))


def evaluate(corpus, network, consistent_sets, config=None, mode=None,
             n_jobs=1):
    """
    Evaluate a split.

    Args:
        corpus (Corpus): the split.
        network (ParserNetwork): the parser.
        consistent_sets (dict): example id to `ConsistentSet`.
        config (EvalConfig, optional): decoding settings.
        mode (str, optional): attention mode.
        n_jobs (int, optional): number of parallel jobs.

    Returns:
        `EvaluationReport`
    """
    config = config or EvalConfig()
    predictions = predict_corpus(corpus, network, config, mode, n_jobs)
    acc = accuracy(corpus, network, config, mode, predictions=predictions)
    counts = error_breakdown(corpus, predictions, consistent_sets)
    wrong = float(max(sum(counts.values()), 1))
    posteriors = gold_posteriors(corpus, network, consistent_sets,
                                 config.grammar, mode)
    mean = float(np.mean(posteriors)) if len(posteriors) else float('nan')
    return EvaluationReport(acc, counts[ABSTRACTION] / wrong,
                            counts[INSTANTIATION] / wrong,
                            counts[COVERAGE] / wrong, mean)
