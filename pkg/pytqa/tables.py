"""
Tables, questions, denotations and corpora.

The corpus file is UTF-8 with one tab separated record per line::

    T  <table id>  <column>:<type>  ...  [#  <cell>  ...]
    R  <table id>  <cell>  ...
    Q  <table id>  <split>  <token>[/<POS>]  ...  #  <cell>  ...
       [#  <program>  ...  [#  spurious:<count>]]

Cells are written ``s:<text>``, ``n:<decimal>`` or ``d:<YYYY[-MM[-DD]]>``.
Column names are their name tokens joined with ``_``.
"""

import io
import math
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

STRING = 'string'
NUMBER = 'number'
DATE = 'date'
COLUMN_TYPES = (STRING, NUMBER, DATE)

ALL_ROW = 'ALL_ROW'
SPLITS = ('train', 'dev', 'test')
NUMBER_TOLERANCE = 1e-6

_CURRENCY = '$€£¥'
_DECIMAL = re.compile(r'^[+-]?(\d+(\.\d*)?|\.\d+)$')
_DATE = re.compile(r'^(\d{4})(?:-(\d{2})(?:-(\d{2}))?)?$')
_POS = re.compile(r'^[A-Z][A-Z$]*$')


class CorpusFormatError(RuntimeError):
    pass


class CellTypeError(CorpusFormatError):
    pass


def _format_number(x):
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


@dataclass(frozen=True)
class CellValue(object):
    """
    A typed table cell: a string, a finite 64-bit float or a date.

    Dates are ``(year, month, day)`` tuples where 0 marks an unknown month
    or day.

    >>> CellValue.parse('n:2,000')
    CellValue(kind='number', value=2000.0)
    >>> CellValue.parse('d:1999-05').to_text()
    'd:1999-05'
    >>> CellValue.number(float('nan'))
    Traceback (most recent call last):
    ...
    pytqa.tables.CellTypeError: a number cell must be finite
    """
    kind: str
    value: object

    def __post_init__(self):
        if self.kind == NUMBER:
            if not math.isfinite(self.value):
                raise CellTypeError("a number cell must be finite")
        elif self.kind == DATE:
            year, month, day = self.value
            if year == 0:
                raise CellTypeError("a date cell must have a year")
            if not (0 <= month <= 12 and 0 <= day <= 31):
                raise CellTypeError("date month or day out of range")
        elif self.kind != STRING:
            raise CellTypeError("unknown cell kind %r" % (self.kind,))

    @classmethod
    def string(cls, text):
        return cls(STRING, text)

    @classmethod
    def number(cls, x):
        return cls(NUMBER, float(x))

    @classmethod
    def date(cls, year, month=0, day=0):
        return cls(DATE, (int(year), int(month), int(day)))

    @classmethod
    def parse(cls, text):
        """
        Parse the ``s:``/``n:``/``d:`` cell syntax.

        Args:
            text (str): the cell text.

        Returns:
            the parsed `CellValue`
        """
        prefix, sep, body = text.partition(':')
        if not sep:
            raise CellTypeError("cell %r lacks a type prefix" % (text,))
        if prefix == 's':
            return cls.string(body)
        if prefix == 'n':
            x = normalize_number(body)
            if x is None:
                raise CellTypeError("%r is not a number" % (body,))
            return cls.number(x)
        if prefix == 'd':
            date = parse_date(body)
            if date is None:
                raise CellTypeError("%r is not a date" % (body,))
            return cls.date(*date)
        raise CellTypeError("unknown cell prefix %r" % (prefix,))

    def to_text(self):
        if self.kind == STRING:
            return 's:' + self.value
        if self.kind == NUMBER:
            return 'n:' + _format_number(self.value)
        return 'd:' + _format_date(self.value)

    def display(self):
        """Cell text without its type prefix."""
        return self.to_text()[2:]

    def sort_key(self):
        if self.kind == STRING:
            return self.value.lower()
        return self.value


def _format_date(date):
    year, month, day = date
    text = '%04d' % year
    if month or day:
        text += '-%02d' % month
    if day:
        text += '-%02d' % day
    return text


def normalize_number(token):
    """
    Strip commas and a leading currency symbol, then parse a decimal.

    >>> normalize_number('$1,250.5')
    1250.5
    >>> normalize_number('abc') is None
    True
    """
    text = token.replace(',', '')
    if text and text[0] in _CURRENCY:
        text = text[1:]
    if not _DECIMAL.match(text):
        return None
    return float(text)


def parse_date(token):
    match = _DATE.match(token)
    if match is None:
        return None
    year, month, day = (int(g) if g else 0 for g in match.groups())
    if year == 0 or month > 12 or day > 31:
        return None
    return year, month, day


@dataclass(frozen=True)
class Column(object):
    name_tokens: Tuple[str, ...]
    ctype: str
    cells: Tuple[CellValue, ...]

    def __post_init__(self):
        if not self.name_tokens:
            raise CellTypeError("a column needs a name")
        if self.ctype not in COLUMN_TYPES:
            raise CellTypeError("unknown column type %r" % (self.ctype,))
        for row, cell in enumerate(self.cells):
            if cell.kind != self.ctype:
                raise CellTypeError(
                    "column %s row %d holds a %s cell in a %s column" %
                    (self.name, row, cell.kind, self.ctype))

    @property
    def name(self):
        return '_'.join(self.name_tokens)


@dataclass(frozen=True)
class Table(object):
    """
    A relational table of typed columns.

    >>> table = Table('t0', (Column(('nation',), STRING,
    ...                             (CellValue.string('turkey'),)),), 1)
    >>> table.column_index('nation')
    0
    """
    id: str
    columns: Tuple[Column, ...]
    n_rows: int

    def __post_init__(self):
        if self.n_rows < 1:
            raise CorpusFormatError("table %s has no rows" % self.id)
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise CorpusFormatError(
                "table %s has duplicate column names" % self.id)
        for column in self.columns:
            if len(column.cells) != self.n_rows:
                raise CorpusFormatError(
                    "column %s of table %s has %d cells, expected %d" %
                    (column.name, self.id, len(column.cells), self.n_rows))

    @property
    def width(self):
        return len(self.columns)

    def column_index(self, name):
        for index, column in enumerate(self.columns):
            if column.name == name:
                return index
        raise KeyError(name)

    def cell(self, row, column):
        return self.columns[column].cells[row]

    def row(self, index):
        return tuple(c.cells[index] for c in self.columns)


@dataclass(frozen=True)
class Token(object):
    text: str
    pos: Optional[str] = None
    in_table: bool = False

    def __post_init__(self):
        if not self.text:
            raise CorpusFormatError("empty token")


@dataclass(frozen=True)
class EntityMention(object):
    start: int
    end: int
    value: CellValue
    source_column: Optional[int] = None

    @property
    def span(self):
        return self.start, self.end


@dataclass(frozen=True)
class Question(object):
    """
    An annotated question whose final token is the ``ALL_ROW`` sentinel.
    """
    tokens: Tuple[Token, ...]
    entities: Tuple[EntityMention, ...] = ()

    def __post_init__(self):
        if not self.tokens or self.tokens[-1].text != ALL_ROW:
            raise CorpusFormatError("question must end with " + ALL_ROW)
        if self.tokens[-1].in_table:
            raise CorpusFormatError("the sentinel cannot be in the table")
        for mention in self.entities:
            if not 0 <= mention.start <= mention.end < self.n - 1:
                raise CorpusFormatError(
                    "mention span %r is outside the question" %
                    (mention.span,))

    @property
    def n(self):
        return len(self.tokens)

    @property
    def texts(self):
        return tuple(t.text for t in self.tokens)

    def entity_positions(self):
        positions = set()
        for mention in self.entities:
            positions.update(range(mention.start, mention.end + 1))
        return positions


@dataclass(frozen=True)
class Denotation(object):
    values: Tuple[CellValue, ...]

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Example(object):
    id: str
    question: Question
    table_id: str
    denotation: Denotation
    split: str = 'train'
    gold_programs: Optional[tuple] = None
    spurious_count: Optional[int] = None


@dataclass
class Corpus(object):
    """
    Tables indexed by id and the examples that query them.
    """
    tables: 'OrderedDict[str, Table]' = field(default_factory=OrderedDict)
    examples: list = field(default_factory=list)
    split: Optional[str] = None

    def __post_init__(self):
        for example in self.examples:
            if example.table_id not in self.tables:
                raise CorpusFormatError(
                    "example %s references unknown table %s" %
                    (example.id, example.table_id))

    def __len__(self):
        return len(self.examples)

    def table_for(self, example):
        return self.tables[example.table_id]

    def example(self, example_id):
        for example in self.examples:
            if example.id == example_id:
                return example
        raise KeyError(example_id)

    def select(self, split):
        return Corpus(self.tables,
                      [e for e in self.examples if e.split == split], split)


def extract_entities(raw_tokens, table):
    """
    Find entity mentions by matching spans against string cells and by
    normalizing numbers and dates.

    Args:
        raw_tokens (list): lowercase question tokens.
        table (Table): the table the question is asked about.

    Returns:
        list of `EntityMention`, possibly overlapping

    >>> from pytqa.tests.test import get_medal_table
    >>> mentions = extract_entities(['nation', 'of', 'turkey'],
    ...                             get_medal_table())
    >>> [(m.span, m.value.value) for m in mentions]
    [((2, 2), 'turkey')]
    """
    cells = {}
    for index, column in enumerate(table.columns):
        if column.ctype != STRING:
            continue
        for cell in column.cells:
            columns = cells.setdefault(cell.value.lower(), [])
            if index not in columns:
                columns.append(index)
    n = len(raw_tokens)
    matches = [(i, j) for i in range(n) for j in range(i, n)
               if ' '.join(raw_tokens[i:j + 1]) in cells]
    mentions = []
    for i, j in matches:
        if any(a <= i and j <= b and (a, b) != (i, j) for a, b in matches):
            continue
        text = ' '.join(raw_tokens[i:j + 1])
        for index in cells[text]:
            mentions.append(EntityMention(i, j, CellValue.string(text),
                                          index))
    for i, token in enumerate(raw_tokens):
        x = normalize_number(token)
        if x is not None:
            value = CellValue.number(x)
            mentions.append(EntityMention(i, i, value,
                                          _source(table, value)))
        date = parse_date(token)
        if date is not None:
            value = CellValue.date(*date)
            mentions.append(EntityMention(i, i, value,
                                          _source(table, value)))
    return mentions


def _source(table, value):
    for index, column in enumerate(table.columns):
        if column.ctype == value.kind and value in column.cells:
            return index
    return None


def annotate(tokens, entities, table, pos_tags=None):
    """
    Set the in-table indicator of every token and append the sentinel.

    Args:
        tokens (list): lowercase question tokens.
        entities (list): mentions from `extract_entities`.
        table (Table): the question's table.
        pos_tags (list, optional): one POS tag (or None) per token.

    Returns:
        annotated `Question`
    """
    words = set()
    for column in table.columns:
        words.update(column.name_tokens)
        if column.ctype == STRING:
            for cell in column.cells:
                words.update(cell.value.lower().split())
    if pos_tags is None:
        pos_tags = [None] * len(tokens)
    annotated = [Token(text, pos, text in words)
                 for text, pos in zip(tokens, pos_tags)]
    annotated.append(Token(ALL_ROW))
    return Question(tuple(annotated), tuple(entities))


def make_question(tokens, table, pos_tags=None):
    """Extract entities and annotate in one step."""
    tokens = [t.lower() for t in tokens]
    return annotate(tokens, extract_entities(tokens, table), table, pos_tags)


def column_indicator(table, question):
    flags = [False] * table.width
    for mention in question.entities:
        if mention.source_column is not None:
            flags[mention.source_column] = True
    return flags


def denotation_equal(a, b):
    """
    Multiset equality of denotations; numbers within an absolute tolerance,
    strings case-insensitively, dates fieldwise.

    >>> denotation_equal(Denotation((CellValue.number(2.0),)),
    ...                  Denotation((CellValue.number(2.0000000001),)))
    True
    """
    if len(a.values) != len(b.values):
        return False
    groups_a, groups_b = _group(a.values), _group(b.values)
    if Counter(groups_a[STRING]) != Counter(groups_b[STRING]):
        return False
    if Counter(groups_a[DATE]) != Counter(groups_b[DATE]):
        return False
    xs, ys = sorted(groups_a[NUMBER]), sorted(groups_b[NUMBER])
    if len(xs) != len(ys):
        return False
    return all(abs(x - y) <= NUMBER_TOLERANCE for x, y in zip(xs, ys))


def _group(values):
    groups = {STRING: [], NUMBER: [], DATE: []}
    for value in values:
        groups[value.kind].append(value.value.lower()
                                  if value.kind == STRING else value.value)
    return groups


def load_corpus(path):
    """
    Read and validate a corpus file.

    Args:
        path (str): corpus file path.

    Returns:
        `Corpus` with annotated questions
    """
    with io.open(path, encoding='utf-8') as stream:
        return read_corpus(stream)


def read_corpus(stream):
    from .program import parse_program, ProgramSyntaxError

    headers, rows, questions = OrderedDict(), {}, []
    for number, line in enumerate(stream, 1):
        line = line.rstrip('\n')
        if not line.strip():
            continue
        fields = line.split('\t')
        kind = fields[0]
        try:
            if kind == 'T':
                columns, first_row = _split_hash(fields[2:], 1)
                headers[fields[1]] = [_parse_header(c) for c in columns]
                rows[fields[1]] = [(number, first_row)] \
                    if first_row else []
            elif kind == 'R':
                if fields[1] not in headers:
                    raise CorpusFormatError(
                        "row for undeclared table %s" % fields[1])
                rows[fields[1]].append((number, fields[2:]))
            elif kind == 'Q':
                questions.append((number, fields))
            else:
                raise CorpusFormatError("unknown record kind %r" % kind)
        except (IndexError, ValueError) as error:
            raise CorpusFormatError("line %d: %s" % (number, error))
        except CellTypeError as error:
            raise CellTypeError("line %d: %s" % (number, error))
        except CorpusFormatError as error:
            raise CorpusFormatError("line %d: %s" % (number, error))
    tables = OrderedDict((table_id, _build_table(table_id, header,
                                                 rows[table_id]))
                         for table_id, header in headers.items())
    counters = Counter()
    examples = []
    for number, fields in questions:
        try:
            table_id, split = fields[1], fields[2]
            if table_id not in tables:
                raise CorpusFormatError("unknown table %s" % table_id)
            if split not in SPLITS:
                raise CorpusFormatError("unknown split %r" % split)
            table = tables[table_id]
            tokens, cells, programs, extra = _split_hash(fields[3:], 3)
            spurious_count = _parse_extra(extra)
            texts, tags = zip(*[_split_pos(t) for t in tokens]) \
                if tokens else ((), ())
            question = make_question(list(texts), table, list(tags))
            denotation = Denotation(tuple(CellValue.parse(c)
                                          for c in cells))
            if not denotation.values:
                raise CorpusFormatError("empty denotation")
            gold = tuple(parse_program(p, table) for p in programs) \
                if programs else None
        except (IndexError, ValueError, ProgramSyntaxError) as error:
            raise CorpusFormatError("line %d: %s" % (number, error))
        except CorpusFormatError as error:
            raise type(error)("line %d: %s" % (number, error))
        examples.append(Example('%s-%05d' % (split, counters[split]),
                                question, table_id, denotation, split, gold,
                                spurious_count))
        counters[split] += 1
    return Corpus(tables, examples)


def _split_hash(fields, n_hashes):
    parts, current = [], []
    for f in fields:
        if f == '#' and len(parts) < n_hashes:
            parts.append(current)
            current = []
        else:
            current.append(f)
    parts.append(current)
    while len(parts) < n_hashes + 1:
        parts.append([])
    return parts


def _parse_extra(fields):
    count = None
    for text in fields:
        key, _, value = text.partition(':')
        if key != 'spurious':
            raise CorpusFormatError("unknown example field %r" % text)
        count = int(value)
    return count


def _parse_header(text):
    name, _, ctype = text.rpartition(':')
    if not name or ctype not in COLUMN_TYPES:
        raise CorpusFormatError("bad column declaration %r" % text)
    return name, ctype


def _split_pos(token):
    text, sep, tag = token.rpartition('/')
    if sep and text and _POS.match(tag):
        return text, tag
    return token, None


def _build_table(table_id, header, rows):
    """`rows` holds ``(line number, cells)`` pairs."""
    columns = []
    for index, (name, ctype) in enumerate(header):
        cells = []
        for row_index, (number, row) in enumerate(rows):
            if len(row) != len(header):
                raise CorpusFormatError(
                    "line %d: table %s row %d has %d cells, expected %d" %
                    (number, table_id, row_index, len(row), len(header)))
            locator = "line %d: table %s column %s row %d" % (
                number, table_id, name, row_index)
            try:
                cell = CellValue.parse(row[index])
            except CellTypeError as error:
                raise CellTypeError("%s: %s" % (locator, error))
            if cell.kind != ctype:
                raise CellTypeError("%s: %r is not a %s cell" %
                                    (locator, row[index], ctype))
            cells.append(cell)
        columns.append(Column(tuple(name.lower().split('_')), ctype,
                              tuple(cells)))
    return Table(table_id, tuple(columns), len(rows))


def save_corpus(corpus, path):
    """
    Write a corpus in canonical form.

    Args:
        corpus (Corpus): the corpus.
        path (str): destination path.
    """
    with io.open(path, 'w', encoding='utf-8') as stream:
        write_corpus(corpus, stream)


def write_corpus(corpus, stream):
    from .program import print_program

    for table in corpus.tables.values():
        header = ['%s:%s' % (c.name, c.ctype) for c in table.columns]
        stream.write('\t'.join(['T', table.id] + header) + '\n')
        for row in range(table.n_rows):
            cells = [cell.to_text() for cell in table.row(row)]
            stream.write('\t'.join(['R', table.id] + cells) + '\n')
    for example in corpus.examples:
        tokens = [t.text if t.pos is None else '%s/%s' % (t.text, t.pos)
                  for t in example.question.tokens[:-1]]
        fields = ['Q', example.table_id, example.split] + tokens + ['#']
        fields += [v.to_text() for v in example.denotation.values]
        if example.gold_programs:
            table = corpus.tables[example.table_id]
            fields += ['#'] + [print_program(z, table)
                               for z in example.gold_programs]
        if example.spurious_count is not None:
            if not example.gold_programs:
                fields.append('#')
            fields += ['#', 'spurious:%d' % example.spurious_count]
        stream.write('\t'.join(fields) + '\n')


def with_table(corpus, example, table):
    """Return a copy of `corpus` where `example` queries `table`."""
    tables = OrderedDict(corpus.tables)
    tables[table.id] = table
    examples = [replace(e, table_id=table.id) if e.id == example.id else e
                for e in corpus.examples]
    return Corpus(tables, examples, corpus.split)
