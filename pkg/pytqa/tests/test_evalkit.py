import numpy as np
import pytest


def get_setup():
    from pytqa.search import find_consistent, SearchConfig
    from pytqa.tests.test import get_medal_example, get_medal_network
    example, table = get_medal_example()
    consistent = find_consistent(example, table, SearchConfig(max_rules=4))
    return example, table, consistent, get_medal_network()


def test_eval_config():
    from pytqa.evalkit import EvalConfig
    with pytest.raises(RuntimeError):
        EvalConfig(beam_size=0)
    with pytest.raises(RuntimeError):
        EvalConfig(max_rules=2)


def test_predict():
    from pytqa.evalkit import predict, EvalConfig
    from pytqa.executor import execute
    from pytqa.tables import denotation_equal
    example, table, _, network = get_setup()
    prediction = predict(example, table, network, EvalConfig(max_rules=4))
    assert prediction.example_id == example.id
    assert 0 < len(prediction.beam) <= network.config.beam_size
    if prediction.program is None:
        assert prediction.failure is not None
        assert not prediction.is_correct(example)
    else:
        assert prediction.failure is None
        assert prediction.score <= 0
        assert denotation_equal(execute(prediction.program, table),
                                prediction.denotation)
        assert prediction.parent in [h for h, _ in prediction.beam]


def test_predict_is_deterministic():
    from pytqa.evalkit import predict, EvalConfig
    example, table, _, network = get_setup()
    config = EvalConfig(max_rules=4, beam_size=2)
    a = predict(example, table, network, config)
    b = predict(example, table, network, config)
    assert a.program == b.program
    assert [h for h, _ in a.beam] == [h for h, _ in b.beam]


def test_accuracy_of_empty_split():
    from pytqa.evalkit import accuracy
    from pytqa.tests.test import get_corpus, get_medal_network
    from pytqa.tests.test import get_medal_table
    corpus = get_corpus([], [get_medal_table()])
    assert accuracy(corpus, get_medal_network()) == 0.


def test_accuracy_counts_correct_predictions():
    from pytqa.evalkit import accuracy, Prediction
    from pytqa.tables import Denotation, CellValue
    from pytqa.tests.test import get_corpus
    example, table, _, network = get_setup()
    corpus = get_corpus([example], [table])
    right = Prediction(example.id, denotation=Denotation(
        (CellValue.number(0),)))
    wrong = Prediction(example.id, failure='empty-beam')
    assert accuracy(corpus, network, predictions=[right]) == 1.
    assert accuracy(corpus, network, predictions=[wrong]) == 0.


def test_gold_posterior():
    from pytqa.evalkit import gold_posterior, gold_posteriors
    from pytqa.tests.test import get_corpus
    example, table, consistent, network = get_setup()
    posterior = gold_posterior(network, example, table, consistent)
    assert posterior <= 0
    assert posterior > -np.inf
    everything = gold_posterior(network, example, table, consistent,
                                gold_programs=consistent.programs())
    assert np.allclose(everything, 0.)
    corpus = get_corpus([example], [table])
    posteriors = gold_posteriors(corpus, network, {example.id: consistent})
    assert np.allclose(posteriors, [posterior])


def test_gold_not_consistent():
    from dataclasses import replace
    from pytqa.evalkit import (gold_posterior, gold_posteriors,
                               GoldNotConsistentError)
    from pytqa.program import parse_program
    from pytqa.tests.test import get_corpus
    example, table, consistent, network = get_setup()
    other = parse_program('count(all_rows)', table)
    with pytest.raises(GoldNotConsistentError):
        gold_posterior(network, example, table, consistent,
                       gold_programs=[other])
    example = replace(example, gold_programs=(other,))
    corpus = get_corpus([example], [table])
    assert len(gold_posteriors(corpus, network,
                               {example.id: consistent})) == 0


def test_error_breakdown():
    from pytqa.evalkit import (error_breakdown, Prediction, ABSTRACTION,
                               INSTANTIATION, COVERAGE)
    from pytqa.search import ConsistentSet
    from pytqa.grammar import strip
    from pytqa.program import parse_program
    from pytqa.tests.test import get_corpus
    example, table, consistent, _ = get_setup()
    corpus = get_corpus([example], [table])
    other, _ = strip(parse_program('count(all_rows)', table))
    near = Prediction(example.id, beam=[(consistent.parents[0], -1.)])
    far = Prediction(example.id, beam=[(other, -1.)])
    assert error_breakdown(corpus, [near], {example.id: consistent}) == \
        {ABSTRACTION: 0, INSTANTIATION: 1, COVERAGE: 0}
    assert error_breakdown(corpus, [far], {example.id: consistent}) == \
        {ABSTRACTION: 1, INSTANTIATION: 0, COVERAGE: 0}
    empty = {example.id: ConsistentSet(example.id)}
    assert error_breakdown(corpus, [near], empty)[COVERAGE] == 1


def test_evaluate():
    from pytqa.evalkit import evaluate, EvalConfig
    from pytqa.tests.test import get_corpus
    example, table, consistent, network = get_setup()
    corpus = get_corpus([example], [table])
    report = evaluate(corpus, network, {example.id: consistent},
                      EvalConfig(max_rules=4))
    assert report.accuracy in (0., 1.)
    if report.accuracy == 0.:
        assert np.allclose(report.abstraction + report.instantiation +
                           report.coverage, 1.)
    assert report.mean_gold_posterior <= 0
    assert len(str(report).split('\t')) == 5


def test_beam_of_one_is_greedy():
    from pytqa.evalkit import predict, EvalConfig
    import torch
    from pytqa.grammar import abstract_grammar_for_table
    from pytqa.tests.test_grammar import rollout
    example, table, _, network = get_setup()
    prediction = predict(example, table, network,
                         EvalConfig(max_rules=4, beam_size=1))
    grammar = abstract_grammar_for_table(table)
    with torch.no_grad():
        encoded = network.encode(example.question, table)
        greedy = rollout(grammar, 4, lambda rules, valid, within: max(
            within, key=lambda r: network.decode_steps(
                encoded, grammar, rules + (r,))[-1].item()))
    assert [h for h, _ in prediction.beam] == [greedy]


@pytest.mark.slow
def test_saturation_on_one_example():
    from pytqa.evalkit import predict, EvalConfig
    from pytqa.search import SearchConfig
    from pytqa.trainer import train, TrainConfig
    from pytqa.tests.test import get_corpus
    example, table, consistent, network = get_setup()
    corpus = get_corpus([example], [table])
    train(network, corpus, {example.id: consistent},
          TrainConfig(epochs=60, learning_rate=1e-2, patience=100),
          SearchConfig(max_rules=4))
    prediction = predict(example, table, network, EvalConfig(max_rules=4))
    assert prediction.is_correct(example)


@pytest.mark.slow
def test_structured_attention_separates_spurious_programs():
    from pytqa import StructuredParser, TrainConfig, SearchConfig
    from pytqa.datasets import make_spurious_table_qa
    from pytqa.evalkit import gold_posteriors
    from pytqa.model import STANDARD, STRUCTURED, ModelConfig
    corpus = make_spurious_table_qa(n_examples=300, n_tables=20, seed=0)
    search = SearchConfig(max_rules=6)
    means = {}
    sets = None
    for mode in (STRUCTURED, STANDARD):
        parser = StructuredParser(
            model_config=ModelConfig(embedding_size=32, projection_size=32,
                                     encoder_hidden=32, decoder_hidden=32,
                                     ap_hidden=32, mlp_hidden=64,
                                     rule_embedding_size=32, seed=0),
            train_config=TrainConfig(epochs=10, seed=0, patience=100),
            search_config=search, attention_mode=mode)
        parser.fit(corpus, sets)
        sets = parser.consistent_sets_
        train = corpus.select('train')
        means[mode] = np.mean(gold_posteriors(train, parser.network_, sets,
                                              search.grammar, mode))
    assert means[STRUCTURED] > means[STANDARD] + 0.1
