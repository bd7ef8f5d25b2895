import io

import numpy as np
import pytest


def test_cell_parse():
    from pytqa.tables import CellValue
    assert CellValue.parse('n:2,000').value == 2000.
    assert CellValue.parse('d:2008').value == (2008, 0, 0)
    assert CellValue.parse('s:turkey').to_text() == 's:turkey'
    assert CellValue.parse('n:1.5').to_text() == 'n:1.5'


def test_cell_failures():
    from pytqa.tables import CellValue, CellTypeError
    with pytest.raises(CellTypeError):
        CellValue.parse('turkey')
    with pytest.raises(CellTypeError):
        CellValue.parse('n:abc')
    with pytest.raises(CellTypeError):
        CellValue.date(0)
    with pytest.raises(CellTypeError):
        CellValue.number(float('inf'))


def test_table_invariants():
    from pytqa.tables import CorpusFormatError, CellTypeError
    from pytqa.tests.test import make_table
    with pytest.raises(CorpusFormatError):
        make_table('t', ['a:string', 'a:number'], [['s:x', 'n:1']])
    with pytest.raises(CellTypeError):
        make_table('t', ['a:number'], [['s:x']])
    with pytest.raises(CorpusFormatError):
        make_table('t', ['a:number'], [])


def test_extract_entities():
    from pytqa.tables import extract_entities
    from pytqa.tests.test import get_results_table
    mentions = extract_entities('who won in beijing in 2008'.split(),
                                get_results_table())
    kinds = sorted((m.span, m.value.kind) for m in mentions)
    assert kinds == [((3, 3), 'string'), ((5, 5), 'date'),
                     ((5, 5), 'number')]
    date, = [m for m in mentions if m.value.kind == 'date']
    assert date.source_column == 0


def test_nested_string_mentions():
    from pytqa.tables import extract_entities
    from pytqa.tests.test import make_table
    table = make_table('t', ['city:string'], [['s:new york'], ['s:york']])
    mentions = extract_entities('to new york'.split(), table)
    assert [m.span for m in mentions] == [(1, 2)]


def test_question_sentinel():
    from pytqa.tables import ALL_ROW
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    question = example.question
    assert question.tokens[-1].text == ALL_ROW
    assert question.n == 8
    in_table = [t.in_table for t in question.tokens]
    assert in_table == [False, False, True, False, False, True, False,
                        False]
    assert question.entity_positions() == set([5])


def test_annotate():
    from pytqa.tables import annotate, ALL_ROW
    from pytqa.tests.test import get_medal_table
    table = get_medal_table()
    question = annotate(['silver', 'medals'], [], table)
    assert [t.in_table for t in question.tokens] == [True, False, False]
    assert question.n == 3
    empty = annotate([], [], table)
    assert empty.n == 1
    assert empty.tokens[0].text == ALL_ROW
    assert not empty.tokens[0].in_table


def test_column_indicator():
    from pytqa.tables import column_indicator
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    assert column_indicator(table, example.question) == [True, False, False]


def test_denotation_equal():
    from pytqa.tables import CellValue, Denotation, denotation_equal
    a = Denotation((CellValue.string('Turkey'), CellValue.number(2)))
    b = Denotation((CellValue.number(2.0000001), CellValue.string('turkey')))
    c = Denotation((CellValue.number(2.1), CellValue.string('turkey')))
    assert denotation_equal(a, b)
    assert not denotation_equal(a, c)
    assert not denotation_equal(a, Denotation(a.values[:1]))


CORPUS = """T\tmedals\tnation:string\tgold:number\t#\ts:turkey\tn:1
R\tmedals\ts:norway\tn:0
Q\tmedals\ttrain\thow/WRB\tmany\tgold\tfor\tturkey\t#\tn:1\t#\tselect(filter(all_rows, eq(col:nation, s:turkey)), col:gold)
Q\tmedals\tdev\twho\twon\tmost\t#\ts:turkey
Q\tmedals\ttrain\thow\tmany\tnations\t#\tn:2
"""


def test_read_corpus():
    from pytqa.tables import read_corpus
    corpus = read_corpus(io.StringIO(CORPUS))
    assert [e.id for e in corpus.examples] == ['train-00000', 'dev-00000',
                                               'train-00001']
    table = corpus.tables['medals']
    assert table.n_rows == 2
    first = corpus.examples[0]
    assert first.question.tokens[0].pos == 'WRB'
    assert len(first.gold_programs) == 1
    assert corpus.examples[1].gold_programs is None
    assert len(corpus.select('train')) == 2


def test_corpus_round_trip():
    from pytqa.tables import read_corpus, write_corpus
    corpus = read_corpus(io.StringIO(CORPUS))
    stream = io.StringIO()
    write_corpus(corpus, stream)
    again = read_corpus(io.StringIO(stream.getvalue()))
    assert again == corpus
    text = stream.getvalue()
    stream = io.StringIO()
    write_corpus(again, stream)
    assert stream.getvalue() == text


def test_corpus_errors():
    from pytqa.tables import read_corpus, CorpusFormatError, CellTypeError
    with pytest.raises(CorpusFormatError):
        read_corpus(io.StringIO('Q\tnone\ttrain\thi\t#\tn:1\n'))
    with pytest.raises(CorpusFormatError):
        read_corpus(io.StringIO('X\tmedals\n'))
    with pytest.raises(CellTypeError):
        read_corpus(io.StringIO('T\tt\ta:number\nR\tt\ts:x\n'))
    with pytest.raises(CorpusFormatError):
        read_corpus(io.StringIO('T\tt\ta:number\nR\tt\tn:1\n'
                                'Q\tt\ttrain\thi\t#\n'))


def test_cell_error_locator():
    from pytqa.tables import read_corpus, CellTypeError
    text = ('T\tm\tnation:string\tgold:number\n'
            'R\tm\ts:turkey\tn:1\n'
            'R\tm\ts:norway\tn:abc\n')
    with pytest.raises(CellTypeError) as info:
        read_corpus(io.StringIO(text))
    message = str(info.value)
    assert 'line 3' in message
    assert 'column gold' in message
    assert 'row 1' in message
    assert 'abc' in message


def test_spurious_count_round_trip():
    from dataclasses import replace
    from pytqa.tables import read_corpus, write_corpus, CorpusFormatError
    corpus = read_corpus(io.StringIO(CORPUS))
    corpus.examples[0] = replace(corpus.examples[0], spurious_count=4)
    corpus.examples[1] = replace(corpus.examples[1], spurious_count=0)
    stream = io.StringIO()
    write_corpus(corpus, stream)
    again = read_corpus(io.StringIO(stream.getvalue()))
    assert [e.spurious_count for e in again.examples] == [4, 0, None]
    assert len(again.examples[0].gold_programs) == 1
    assert again.examples[1].gold_programs is None
    with pytest.raises(CorpusFormatError):
        read_corpus(io.StringIO(stream.getvalue().replace('spurious:4',
                                                          'noise:4')))


def test_save_and_load(tmpdir):
    from pytqa.tables import load_corpus, save_corpus
    from pytqa.tests.test import get_micro_corpus
    corpus = get_micro_corpus(n_examples=6, ratio=(1, 1, 1))
    path = str(tmpdir.join('corpus.tsv'))
    save_corpus(corpus, path)
    loaded = load_corpus(path)
    assert [e.id for e in loaded.examples] == [e.id for e in corpus.examples]
    assert loaded.examples == corpus.examples
    assert np.all([t == corpus.tables[t.id] for t in loaded.tables.values()])


def test_with_table():
    from dataclasses import replace
    from pytqa.tables import with_table
    from pytqa.tests.test import get_medal_example, get_corpus
    example, table = get_medal_example()
    corpus = get_corpus([example], [table])
    other = replace(table, id='medals-2')
    changed = with_table(corpus, example, other)
    assert changed.examples[0].table_id == 'medals-2'
    assert corpus.examples[0].table_id == 'medals'
    assert set(changed.tables) == set(['medals', 'medals-2'])
