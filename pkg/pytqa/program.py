"""
The typed program language: basic types, the function inventory, filter
conditions, slot candidates and the program tree, with an exact
printer/parser pair for program text such as::

    select(filter(all_rows, ge(col:points, n:2000)), col:nation)
"""

import json
import re
from dataclasses import dataclass
from typing import Tuple

from .tables import CellValue, STRING as S, NUMBER as N, DATE as D


class ProgramSyntaxError(RuntimeError):
    pass


@dataclass(frozen=True)
class BasicType(object):
    """
    A type of the program language. Function types carry argument and
    return types.

    >>> str(func_type((LIST_ROW,), ROW))
    '<ROW:LIST_ROW>'
    """
    name: str
    args: Tuple['BasicType', ...] = ()
    ret: 'BasicType' = None

    def __str__(self):
        if self.name != 'FUNC':
            return self.name
        return '<%s:%s>' % (self.ret, ','.join(str(a) for a in self.args))

    @property
    def is_function(self):
        return self.name == 'FUNC'


ROOT = BasicType('ROOT')
ROW = BasicType('ROW')
LIST_ROW = BasicType('LIST_ROW')
STRING = BasicType('STRING')
NUMBER = BasicType('NUMBER')
DATE = BasicType('DATE')
COL_STRING = BasicType('COL_STRING')
COL_NUMBER = BasicType('COL_NUMBER')
COL_DATE = BasicType('COL_DATE')

RETURN_TYPES = (STRING, NUMBER, DATE)
COLUMN_TYPE = {S: COL_STRING, N: COL_NUMBER, D: COL_DATE}
CELL_KIND = {COL_STRING: S, COL_NUMBER: N, COL_DATE: D}


def func_type(args, ret):
    if len(args) < 1:
        raise ValueError("a function type needs at least one argument")
    return BasicType('FUNC', tuple(args), ret)


def is_subtype(actual, expected):
    """A single row lifts to a list of one row."""
    return actual == expected or (actual == ROW and expected == LIST_ROW)


@dataclass(frozen=True)
class Function(object):
    name: str
    args: Tuple[BasicType, ...]
    rtype: BasicType


FUNCTIONS = (
    Function('select', (LIST_ROW, COL_STRING), STRING),
    Function('select', (LIST_ROW, COL_NUMBER), NUMBER),
    Function('select', (LIST_ROW, COL_DATE), DATE),
    Function('argmax', (LIST_ROW, COL_NUMBER), LIST_ROW),
    Function('argmax', (LIST_ROW, COL_DATE), LIST_ROW),
    Function('argmin', (LIST_ROW, COL_NUMBER), LIST_ROW),
    Function('argmin', (LIST_ROW, COL_DATE), LIST_ROW),
    Function('first', (LIST_ROW,), ROW),
    Function('last', (LIST_ROW,), ROW),
    Function('previous', (LIST_ROW,), LIST_ROW),
    Function('next', (LIST_ROW,), LIST_ROW),
    Function('count', (LIST_ROW,), NUMBER),
    Function('max', (LIST_ROW, COL_NUMBER), NUMBER),
    Function('min', (LIST_ROW, COL_NUMBER), NUMBER),
    Function('sum', (LIST_ROW, COL_NUMBER), NUMBER),
    Function('average', (LIST_ROW, COL_NUMBER), NUMBER),
    Function('diff', (NUMBER, NUMBER), NUMBER),
)

OPERATORS = ('=', '>', '<', '>=', '<=')
OPERATOR_NAMES = {'=': 'eq', '>': 'gt', '<': 'lt', '>=': 'ge', '<=': 'le'}
_OPERATOR_BY_NAME = dict((v, k) for k, v in OPERATOR_NAMES.items())

AND = 'and'
OR = 'or'
NONE = 'none'
CONNECTIVES = (NONE, AND, OR)


@dataclass(frozen=True)
class Condition(object):
    column: int
    op: str
    value: CellValue

    def __post_init__(self):
        if self.op not in OPERATORS:
            raise ProgramSyntaxError("unknown operator %r" % (self.op,))

    def sort_key(self):
        return (self.column, OPERATORS.index(self.op), self.value.kind,
                self.value.sort_key())


@dataclass(frozen=True)
class AllRows(object):
    pass


@dataclass(frozen=True)
class RowFilter(object):
    """
    One or more conditions joined by a connective; conditions are kept in
    canonical order so that equal filters compare equal.
    """
    conditions: Tuple[Condition, ...]
    connective: str = NONE

    def __post_init__(self):
        if not self.conditions:
            raise ProgramSyntaxError("a filter needs a condition")
        if self.connective not in CONNECTIVES:
            raise ProgramSyntaxError(
                "unknown connective %r" % (self.connective,))
        if (self.connective == NONE) != (len(self.conditions) == 1):
            raise ProgramSyntaxError(
                "connective none is used iff there is one condition")
        object.__setattr__(self, 'conditions', tuple(
            sorted(self.conditions, key=Condition.sort_key)))


@dataclass(frozen=True)
class ColumnChoice(object):
    column: int


@dataclass(frozen=True)
class Call(object):
    function: Function
    args: tuple

    @property
    def name(self):
        return self.function.name


ROW_CANDIDATES = (AllRows, RowFilter)


def node_type(node, table=None):
    """
    The type of a program node; column choices need the table.
    """
    if isinstance(node, Call):
        return node.function.rtype
    if isinstance(node, ROW_CANDIDATES):
        return LIST_ROW
    if isinstance(node, ColumnChoice):
        if table is None or not 0 <= node.column < table.width:
            return None
        return COLUMN_TYPE[table.columns[node.column].ctype]
    return None


def size(node):
    """Number of rule applications and conditions, used to rank programs."""
    if isinstance(node, Call):
        return 1 + sum(size(a) for a in node.args)
    if isinstance(node, RowFilter):
        return 1 + len(node.conditions)
    return 1


def _cell_text(value):
    text = value.to_text()
    if value.kind == S and (set(value.value) & set('(),"') or
                            value.value != value.value.strip()):
        return 's:' + json.dumps(value.value)
    return text


def print_condition(condition, table):
    return '%s(col:%s, %s)' % (OPERATOR_NAMES[condition.op],
                               table.columns[condition.column].name,
                               _cell_text(condition.value))


def print_program(node, table):
    """
    Print a program in canonical prefix notation.

    Args:
        node: a program tree.
        table (Table): resolves column names.

    Returns:
        program text
    """
    if isinstance(node, Call):
        return '%s(%s)' % (node.name, ', '.join(print_program(a, table)
                                                for a in node.args))
    if isinstance(node, AllRows):
        return 'all_rows'
    if isinstance(node, RowFilter):
        conditions = [print_condition(c, table) for c in node.conditions]
        if node.connective == NONE:
            text = conditions[0]
        else:
            text = '%s(%s)' % (node.connective, ', '.join(conditions))
        return 'filter(all_rows, %s)' % text
    if isinstance(node, ColumnChoice):
        return 'col:' + table.columns[node.column].name
    raise ProgramSyntaxError("not a program node: %r" % (node,))


_TOKEN = re.compile(r'\s*(s:"(?:[^"\\]|\\.)*"|[(),]|[^(),]+)')


def _tokenize(text):
    tokens, position = [], 0
    text = text.strip()
    while position < len(text):
        match = _TOKEN.match(text, position)
        if match is None:
            raise ProgramSyntaxError("cannot read %r" % text[position:])
        tokens.append(match.group(1).strip())
        position = match.end()
    return tokens


class _Parser(object):

    def __init__(self, text, table):
        self.tokens = _tokenize(text)
        self.position = 0
        self.table = table

    def peek(self):
        if self.position < len(self.tokens):
            return self.tokens[self.position]
        return None

    def take(self, expected=None):
        token = self.peek()
        if token is None or (expected is not None and token != expected):
            raise ProgramSyntaxError(
                "expected %s at token %d" % (expected or 'more input',
                                             self.position))
        self.position += 1
        return token

    def expression(self):
        head = self.take()
        if self.peek() != '(':
            return self.leaf(head)
        self.take('(')
        args = [self.expression()]
        while self.peek() == ',':
            self.take(',')
            args.append(self.expression())
        self.take(')')
        return self.node(head, args)

    def leaf(self, atom):
        if atom == 'all_rows':
            return AllRows()
        if atom.startswith('col:'):
            try:
                return ColumnChoice(self.table.column_index(atom[4:]))
            except KeyError:
                raise ProgramSyntaxError("unknown column %r" % atom[4:])
        if atom.startswith('s:"'):
            return CellValue.string(json.loads(atom[2:]))
        try:
            return CellValue.parse(atom)
        except RuntimeError as error:
            raise ProgramSyntaxError(str(error))

    def node(self, head, args):
        if head in _OPERATOR_BY_NAME:
            columns = [a for a in args if isinstance(a, ColumnChoice)]
            values = [a for a in args if isinstance(a, CellValue)]
            if len(args) != 2 or len(columns) != 1 or len(values) != 1:
                raise ProgramSyntaxError(
                    "condition %s needs a column and a value" % head)
            return Condition(columns[0].column, _OPERATOR_BY_NAME[head],
                             values[0])
        if head in (AND, OR):
            if not all(isinstance(a, Condition) for a in args):
                raise ProgramSyntaxError("%s joins conditions only" % head)
            return (head if len(args) > 1 else NONE, tuple(args))
        if head == 'filter':
            if len(args) != 2 or not isinstance(args[0], AllRows):
                raise ProgramSyntaxError("filter takes all_rows and a "
                                         "condition")
            if isinstance(args[1], Condition):
                return RowFilter((args[1],), NONE)
            if isinstance(args[1], tuple):
                return RowFilter(args[1][1], args[1][0])
            raise ProgramSyntaxError("filter needs a condition")
        types = [node_type(a, self.table) for a in args]
        for function in FUNCTIONS:
            if function.name == head and len(function.args) == len(types) \
                    and all(t is not None and is_subtype(t, e)
                            for t, e in zip(types, function.args)):
                return Call(function, tuple(args))
        raise ProgramSyntaxError("no signature of %s accepts (%s)" % (
            head, ', '.join(str(t) for t in types)))


def parse_program(text, table):
    """
    Parse program text against a table.

    Args:
        text (str): program text.
        table (Table): resolves column names and column types.

    Returns:
        the program tree

    >>> from pytqa.tests.test import get_medal_table
    >>> table = get_medal_table()
    >>> text = 'select(filter(all_rows, eq(col:nation, s:turkey)), col:silver)'
    >>> print_program(parse_program(text, table), table) == text
    True
    """
    parser = _Parser(text, table)
    node = parser.expression()
    if parser.peek() is not None:
        raise ProgramSyntaxError(
            "trailing input at token %d" % parser.position)
    if not isinstance(node, Call):
        raise ProgramSyntaxError("a program must be a function call")
    return node
