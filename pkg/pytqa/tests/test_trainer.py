import io

import numpy as np
import pytest
import torch


def get_consistent(max_rules=4):
    from pytqa.search import find_consistent, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    return example, table, find_consistent(example, table,
                                           SearchConfig(max_rules=max_rules))


def get_foreign_set(example, table):
    from pytqa.grammar import strip
    from pytqa.program import parse_program
    from pytqa.search import ConsistentSet
    text = 'select(filter(all_rows, eq(col:nation, s:spain)), col:silver)'
    h, assignment = strip(parse_program(text, table))
    return ConsistentSet(example.id, [(h, [assignment])])


def test_example_loss():
    from pytqa.grammar import abstract_grammar_for_table
    from pytqa.trainer import example_loss, log_joints
    from pytqa.tests.test import get_medal_network
    example, table, consistent = get_consistent()
    network = get_medal_network()
    loss = example_loss(network, example, table, consistent)
    assert torch.isfinite(loss)
    assert loss.item() > 0
    grammar = abstract_grammar_for_table(table)
    joints = log_joints(network, network.encode(example.question, table),
                        consistent, grammar)
    assert len(joints) == consistent.total_count
    expected = -np.logaddexp.reduce([j.item() for _, _, j in joints])
    assert np.allclose(loss.item(), expected)


def test_loss_skips():
    from pytqa.search import ConsistentSet
    from pytqa.trainer import example_loss, SkipExample
    from pytqa.tests.test import get_medal_network
    example, table, _ = get_consistent()
    network = get_medal_network()
    with pytest.raises(SkipExample):
        example_loss(network, example, table, ConsistentSet(example.id))
    with pytest.raises(SkipExample):
        example_loss(network, example, table,
                     get_foreign_set(example, table))


def test_grad_check():
    from pytqa.model import STANDARD, STRUCTURED
    from pytqa.trainer import grad_check
    from pytqa.tests.test import get_medal_network
    example, table, consistent = get_consistent(max_rules=6)
    consistent = consistent.truncate(2)
    assert consistent.total_count == 2
    network = get_medal_network()
    for mode in (STRUCTURED, STANDARD):
        report = grad_check(network, example, table, consistent, mode=mode)
        assert len(report.errors) == 64
        assert report.max_error < 1e-4
    assert next(network.parameters()).dtype == torch.float32


def test_train_config():
    from pytqa.trainer import TrainConfig
    with pytest.raises(RuntimeError):
        TrainConfig(learning_rate=0.)
    with pytest.raises(RuntimeError):
        TrainConfig(max_programs=0)
    with pytest.raises(RuntimeError):
        TrainConfig(epochs=-1)


def test_train_writes_outputs(tmpdir):
    from pytqa.search import search_corpus, SearchConfig
    from pytqa.trainer import train, TrainConfig
    from pytqa.model import ParserNetwork, Vocabulary, load_checkpoint
    from pytqa.tests.test import get_micro_corpus, get_micro_model_config
    corpus = get_micro_corpus(n_examples=8, ratio=(3, 1, 0))
    search = SearchConfig(max_rules=4)
    sets = search_corpus(corpus.select('train'), search)
    network = ParserNetwork(Vocabulary.build(corpus),
                            Vocabulary.build_tags(corpus),
                            get_micro_model_config())
    checkpoint = str(tmpdir.join('model.npz'))
    metrics = str(tmpdir.join('metrics.tsv'))
    config = TrainConfig(epochs=2, checkpoint_path=checkpoint,
                         metrics_path=metrics)
    result = train(network, corpus, sets, config, search)
    assert [m.epoch for m in result.metrics] == [1, 2]
    assert all(np.isfinite(m.loss) for m in result.metrics)
    assert 1 <= result.best_epoch <= 2
    assert not network.training
    with io.open(metrics) as stream:
        lines = stream.read().splitlines()
    assert len(lines) == 2 and lines[0].split('\t')[0] == '1'
    _, meta = load_checkpoint(checkpoint)
    assert meta['best_epoch'] == result.best_epoch


def test_train_without_dev_keeps_final_weights():
    from pytqa.trainer import train, TrainConfig
    from pytqa.tests.test import get_corpus, get_medal_network
    example, table, consistent = get_consistent()
    corpus = get_corpus([example], [table])
    sets = {example.id: consistent}
    states = []
    for epochs in (1, 5):
        network = get_medal_network()
        result = train(network, corpus, sets,
                       TrainConfig(epochs=epochs, learning_rate=1e-2,
                                   patience=1))
        assert len(result.metrics) == epochs
        assert result.best_epoch == epochs
        states.append(network.state_dict())
    assert not all(torch.equal(states[0][name], states[1][name])
                   for name in states[0])


def test_train_strict_skip():
    from pytqa.trainer import train, TrainConfig, TrainingError
    from pytqa.tests.test import get_corpus, get_medal_network
    example, table, _ = get_consistent()
    corpus = get_corpus([example], [table])
    sets = {example.id: get_foreign_set(example, table)}
    network = get_medal_network()
    result = train(network, corpus, sets, TrainConfig(epochs=1))
    assert result.metrics[0].skipped == 1
    with pytest.raises(TrainingError):
        train(network, corpus, sets,
              TrainConfig(epochs=1, skip_infeasible=False))


def test_incomplete_sets_are_ignored():
    from dataclasses import replace
    from pytqa.trainer import train, TrainConfig
    from pytqa.tests.test import get_corpus, get_medal_network
    example, table, consistent = get_consistent()
    corpus = get_corpus([example], [table])
    sets = {example.id: replace(consistent, complete=False)}
    result = train(get_medal_network(), corpus, sets, TrainConfig(epochs=1))
    assert result.metrics[0].loss == 0.
    assert result.metrics[0].skipped == 0


@pytest.mark.slow
def test_loss_decreases():
    from pytqa.search import SearchConfig
    from pytqa.trainer import example_loss, train, TrainConfig
    from pytqa.tests.test import get_corpus, get_medal_network
    example, table, consistent = get_consistent()
    corpus = get_corpus([example], [table])
    network = get_medal_network()
    with torch.no_grad():
        before = example_loss(network, example, table, consistent).item()
    config = TrainConfig(epochs=20, learning_rate=1e-2, patience=100)
    result = train(network, corpus, {example.id: consistent}, config,
                   SearchConfig(max_rules=4))
    assert result.metrics[-1].loss < result.metrics[0].loss
    with torch.no_grad():
        after = example_loss(network, example, table, consistent).item()
    assert after < before
