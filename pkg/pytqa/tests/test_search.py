import io
import os

import numpy as np
import pytest


def get_unanswerable_example():
    from pytqa.tests.test import get_example, get_medal_table
    table = get_medal_table()
    tokens = 'how many medals did spain win'.split()
    return get_example(tokens, table, ['n:99'],
                       example_id='train-00001'), table


def test_medal_consistent_set():
    from pytqa.search import find_consistent
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    consistent = find_consistent(example, table)
    texts = consistent.texts(table)
    assert consistent.complete
    assert len(texts) == len(set(texts)) == consistent.total_count
    assert 'select(filter(all_rows, eq(col:nation, s:turkey)), ' \
        'col:silver)' in texts
    assert 'select(previous(argmax(all_rows, col:silver)), col:silver)' \
        in texts
    assert len(consistent.parents) == len(set(consistent.parents))


def test_two_stage_matches_naive():
    from pytqa.search import (find_consistent, find_consistent_naive,
                              SearchConfig)
    from pytqa.tests.test import get_example, get_league_table
    from pytqa.tests.test import get_medal_example
    config = SearchConfig(max_rules=5)
    league = get_league_table()
    examples = [get_medal_example(),
                (get_example('which team won 5 games'.split(), league,
                             ['s:ajax', 's:psv']), league),
                (get_example('how many draws for ajax'.split(), league,
                             ['n:2']), league)]
    for example, table in examples:
        fast = find_consistent(example, table, config)
        slow = find_consistent_naive(example, table, config)
        assert fast.texts(table) == slow.texts(table)
        assert fast.parents == slow.parents


def test_programs_execute_to_denotation():
    from pytqa.executor import execute
    from pytqa.search import find_consistent
    from pytqa.tables import denotation_equal
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    for program in find_consistent(example, table).programs():
        assert denotation_equal(execute(program, table), example.denotation)


def test_monotone_in_cap():
    from pytqa.search import find_consistent, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    small = find_consistent(example, table, SearchConfig(max_rules=4))
    large = find_consistent(example, table, SearchConfig(max_rules=6))
    assert set(small.texts(table)) <= set(large.texts(table))
    assert small.total_count < large.total_count


def test_unanswerable():
    from pytqa.search import find_consistent
    example, table = get_unanswerable_example()
    consistent = find_consistent(example, table)
    assert consistent.complete
    assert not consistent
    assert consistent.total_count == 0


def test_timeout_marks_incomplete():
    from pytqa.search import find_consistent, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    ticks = iter(range(10 ** 6))
    config = SearchConfig(timeout_ms=3000)
    consistent = find_consistent(example, table, config,
                                 clock=lambda: next(ticks))
    assert not consistent.complete


def test_truncate():
    from pytqa.program import size
    from pytqa.search import find_consistent
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    consistent = find_consistent(example, table)
    short = consistent.truncate(3)
    assert short.total_count == 3
    sizes = sorted(size(z) for z in consistent.programs())
    assert sorted(size(z) for z in short.programs()) == sizes[:3]
    assert consistent.truncate(10 ** 6) is consistent


def test_search_config():
    from pytqa.search import SearchConfig
    with pytest.raises(RuntimeError):
        SearchConfig(max_rules=2)
    with pytest.raises(RuntimeError):
        SearchConfig(timeout_ms=0)
    assert SearchConfig().digest() == SearchConfig(timeout_ms=5).digest()
    assert SearchConfig().digest() != SearchConfig(max_rules=7).digest()


def test_cache_round_trip(tmpdir):
    from pytqa.search import find_consistent, SearchCache, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig(max_rules=5)
    path = str(tmpdir.join('cache', 'search.cache'))
    consistent = find_consistent(example, table, config)
    cache = SearchCache(path, config)
    assert example.id not in cache
    cache.put(consistent, table)
    reader = SearchCache(path, config)
    assert example.id in reader
    cached = reader.get(example.id, table)
    assert cached.texts(table) == consistent.texts(table)
    assert cached.complete
    other = SearchCache(path, SearchConfig(max_rules=6))
    assert other.get(example.id, table) is None


def test_cache_last_record_wins(tmpdir):
    from pytqa.search import (find_consistent, ConsistentSet, SearchCache,
                              SearchConfig)
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig(max_rules=4)
    path = str(tmpdir.join('search.cache'))
    cache = SearchCache(path, config)
    cache.put(ConsistentSet(example.id, [], False), table)
    assert cache.get(example.id, table).total_count == 0
    cache.put(find_consistent(example, table, config), table)
    assert cache.get(example.id, table).total_count > 0


def test_cache_corruption(tmpdir):
    from pytqa.search import find_consistent, SearchCache, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig(max_rules=4)
    path = str(tmpdir.join('search.cache'))
    SearchCache(path, config).put(find_consistent(example, table, config),
                                  table)
    with io.open(path, 'rb') as stream:
        data = bytearray(stream.read())
    data[-1] ^= 0xff
    with io.open(path, 'wb') as stream:
        stream.write(bytes(data))
    assert SearchCache(path, config).get(example.id, table) is None
    with io.open(path, 'wb') as stream:
        stream.write(bytes(data[:len(data) // 2]))
    assert os.path.getsize(path) > 0
    cache = SearchCache(path, config)
    assert example.id not in cache
    assert cache.get(example.id, table) is None


def test_cache_put_after_garbage_tail(tmpdir):
    from pytqa.search import find_consistent, SearchCache, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig(max_rules=5)
    path = str(tmpdir.join('search.cache'))
    full = find_consistent(example, table, config)
    assert full.total_count > 1
    cache = SearchCache(path, config)
    cache.put(full.truncate(1), table)
    with io.open(path, 'ab') as stream:
        stream.write(b'\x00garbage'[:7])
    cache.put(full, table)
    assert cache.get(example.id, table).total_count == full.total_count
    reader = SearchCache(path, config)
    assert reader.get(example.id, table).texts(table) == full.texts(table)


def test_search_corpus_uses_cache(tmpdir):
    from pytqa.search import search_corpus, SearchCache, SearchConfig
    from pytqa.tests.test import get_corpus, get_medal_example
    example, table = get_medal_example()
    corpus = get_corpus([example], [table])
    config = SearchConfig(max_rules=4)
    cache = SearchCache(str(tmpdir.join('search.cache')), config)
    first = search_corpus(corpus, config, cache)
    size = os.path.getsize(cache.path)
    second = search_corpus(corpus, config, cache)
    assert os.path.getsize(cache.path) == size
    assert first[example.id].texts(table) == second[example.id].texts(table)


def test_coverage_stats():
    from pytqa.search import coverage_stats, SearchConfig
    from pytqa.tests.test import get_corpus, get_medal_example
    example, table = get_medal_example()
    missing, _ = get_unanswerable_example()
    corpus = get_corpus([example, missing], [table])
    config = SearchConfig(max_rules=4)
    stats = coverage_stats(corpus, config)
    assert np.allclose(stats.coverage, 0.5)
    assert stats.distinct_parents > 0
    assert str(stats).split('\t')[0] == '0.5000'


def test_coverage_stats_empty():
    from pytqa.search import coverage_stats
    from pytqa.tests.test import get_corpus, get_medal_table
    stats = coverage_stats(get_corpus([], [get_medal_table()]), results={})
    assert (stats.coverage, stats.mean_count, stats.distinct_parents) == \
        (0., 0., 0)


def test_two_stage_matches_naive_randomized():
    from pytqa.grammar import GrammarConfig
    from pytqa.search import (find_consistent, find_consistent_naive,
                              SearchConfig)
    from pytqa.tests.test import get_example, make_table
    rng = np.random.default_rng(0)
    names = ['ajax', 'psv', 'rio', 'oslo']
    config = SearchConfig(max_rules=4,
                          grammar=GrammarConfig(max_conditions=1))
    for trial in range(200):
        n_rows = int(rng.integers(2, 4))
        rows = [['s:%s' % names[i], 'n:%d' % rng.integers(0, 3),
                 'n:%d' % rng.integers(0, 3)]
                for i in rng.choice(len(names), size=n_rows, replace=False)]
        table = make_table('t%d' % trial,
                           ['club:string', 'wins:number', 'goals:number'],
                           rows)
        cells = [c for row in rows for c in row]
        answer = cells[rng.integers(len(cells))]
        tokens = ['what', 'about', rows[0][0][2:], str(rng.integers(0, 3))]
        example = get_example(tokens, table, [answer])
        fast = find_consistent(example, table, config)
        slow = find_consistent_naive(example, table, config)
        assert fast.texts(table) == slow.texts(table)


def test_cached_programs_execute_to_denotation(tmpdir):
    from pytqa.executor import execute
    from pytqa.search import find_consistent, SearchCache, SearchConfig
    from pytqa.tables import denotation_equal
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig()
    cache = SearchCache(str(tmpdir.join('search.cache')), config)
    found = find_consistent(example, table, config)
    assert found.total_count >= 3
    cache.put(found, table)
    for program in cache.get(example.id, table).programs():
        assert denotation_equal(execute(program, table), example.denotation)


def test_row_filters_run_once_per_search(monkeypatch):
    import pytqa.search
    from pytqa.search import find_consistent, SearchConfig
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    config = SearchConfig(max_rules=5)
    expected = find_consistent(example, table, config).texts(table)
    calls = []
    filter_rows = pytqa.search.filter_rows

    def counting(table, candidate):
        calls.append(candidate)
        return filter_rows(table, candidate)

    monkeypatch.setattr(pytqa.search, 'filter_rows', counting)
    assert find_consistent(example, table, config).texts(table) == expected
    assert calls
    assert len(calls) == len(set(calls))
