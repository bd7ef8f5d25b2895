"""
Evaluation of instantiated programs against tables.

Row lists are kept as ascending lists of row indices; a single ``ROW`` is a
list of length one. Execution failures are returned as `ExecError` values.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .program import (Call, AllRows, RowFilter, ColumnChoice, ROW_CANDIDATES,
                      FUNCTIONS, RETURN_TYPES, LIST_ROW, COLUMN_TYPE, AND,
                      NONE, is_subtype, print_program)
from .tables import CellValue, Denotation, STRING, NUMBER

EMPTY_ROWS = 'empty-rows'
INDEX_OUT_OF_RANGE = 'index-out-of-range'
TYPE_ERROR = 'type-error'
EMPTY_DENOTATION = 'empty-denotation'
ERROR_KINDS = (EMPTY_ROWS, INDEX_OUT_OF_RANGE, TYPE_ERROR,
               EMPTY_DENOTATION)


@dataclass(frozen=True)
class ExecError(object):
    kind: str
    locus: str = ''

    def __bool__(self):
        return False


@dataclass(frozen=True)
class TypeCheck(object):
    """
    Result of `typecheck`; truthy iff the program is well typed.
    """
    ok: bool
    diagnostics: Tuple[str, ...] = ()

    def __bool__(self):
        return self.ok


class _Failure(Exception):

    def __init__(self, kind, node, table):
        super(_Failure, self).__init__(kind)
        self.error = ExecError(kind, _locus(node, table))


def _locus(node, table):
    try:
        return print_program(node, table)
    except (IndexError, RuntimeError):
        return repr(node)


def filter_rows(table, candidate):
    """
    Rows selected by a row candidate, in table order.

    Args:
        table (Table): the table.
        candidate: `AllRows` or `RowFilter`.

    Returns:
        list of row indices

    >>> from pytqa.tests.test import get_medal_table
    >>> from pytqa.program import Condition
    >>> table = get_medal_table()
    >>> gt = Condition(2, '>', CellValue.number(0))
    >>> filter_rows(table, RowFilter((gt,)))
    [1]
    """
    if isinstance(candidate, AllRows):
        return list(range(table.n_rows))
    if not isinstance(candidate, RowFilter):
        raise TypeError("not a row candidate: %r" % (candidate,))
    combine = all if candidate.connective in (AND, NONE) else any
    return [row for row in range(table.n_rows)
            if combine(_holds(table, row, c) for c in candidate.conditions)]


def _holds(table, row, condition):
    if not 0 <= condition.column < table.width:
        return False
    cell, value = table.cell(row, condition.column), condition.value
    if cell.kind != value.kind:
        return False
    if cell.kind == STRING:
        return condition.op == '=' and \
            cell.value.lower() == value.value.lower()
    a, b = cell.sort_key(), value.sort_key()
    return {'=': a == b, '>': a > b, '<': a < b,
            '>=': a >= b, '<=': a <= b}[condition.op]


def typecheck(program, table):
    """
    Check argument types and column indices of every node.

    Args:
        program: a program tree.
        table (Table): the table the program runs against.

    Returns:
        `TypeCheck` naming every offending node

    >>> from pytqa.tests.test import get_medal_table
    >>> from pytqa.program import Function, NUMBER as N, COL_NUMBER
    >>> bad_sum = Function('sum', (LIST_ROW, COL_NUMBER), N)
    >>> result = typecheck(Call(bad_sum, (AllRows(), ColumnChoice(0))),
    ...                    get_medal_table())
    >>> bool(result), result.diagnostics
    (False, ('sum: argument 2 is COL_STRING, expected COL_NUMBER',))
    """
    diagnostics = []
    if not isinstance(program, Call):
        diagnostics.append('program is not a function call')
    _check(program, table, diagnostics)
    return TypeCheck(not diagnostics, tuple(diagnostics))


def _check(node, table, diagnostics):
    if isinstance(node, Call):
        function = node.function
        if function not in FUNCTIONS:
            diagnostics.append('%s: unknown signature' % function.name)
            return None
        if len(node.args) != len(function.args):
            diagnostics.append('%s: takes %d arguments, got %d' % (
                function.name, len(function.args), len(node.args)))
            return None
        for position, (arg, expected) in enumerate(
                zip(node.args, function.args), 1):
            actual = _check(arg, table, diagnostics)
            if actual is not None and not is_subtype(actual, expected):
                diagnostics.append('%s: argument %d is %s, expected %s' % (
                    function.name, position, actual, expected))
        return function.rtype
    if isinstance(node, AllRows):
        return LIST_ROW
    if isinstance(node, RowFilter):
        for condition in node.conditions:
            if not 0 <= condition.column < table.width:
                diagnostics.append('filter: column %d is out of range' %
                                   condition.column)
            elif table.columns[condition.column].ctype != \
                    condition.value.kind:
                diagnostics.append('filter: %s value on %s column %s' % (
                    condition.value.kind,
                    table.columns[condition.column].ctype,
                    table.columns[condition.column].name))
            elif condition.value.kind == STRING and condition.op != '=':
                diagnostics.append('filter: operator %s on string column %s'
                                   % (condition.op,
                                      table.columns[condition.column].name))
        return LIST_ROW
    if isinstance(node, ColumnChoice):
        if not 0 <= node.column < table.width:
            diagnostics.append('column %d is out of range' % node.column)
            return None
        return COLUMN_TYPE[table.columns[node.column].ctype]
    diagnostics.append('%r is not a program node' % (node,))
    return None


def execute(program, table):
    """
    Execute a program.

    Args:
        program: a program tree.
        table (Table): the table.

    Returns:
        `Denotation` with values in row order, or `ExecError`

    >>> from pytqa.tests.test import get_medal_table
    >>> from pytqa.program import parse_program
    >>> table = get_medal_table()
    >>> text = 'select(previous(argmax(all_rows, col:silver)), col:silver)'
    >>> execute(parse_program(text, table), table)
    Denotation(values=(CellValue(kind='number', value=0.0),))
    >>> execute(parse_program('previous(first(all_rows))', table), table).kind
    'index-out-of-range'
    """
    check = typecheck(program, table)
    if not check:
        return ExecError(TYPE_ERROR, _locus(program, table))
    try:
        values = _evaluate(program, table)
    except _Failure as failure:
        return failure.error
    if program.function.rtype not in RETURN_TYPES:
        return ExecError(TYPE_ERROR, _locus(program, table))
    if not values:
        return ExecError(EMPTY_DENOTATION, _locus(program, table))
    return Denotation(tuple(values))


def execute_rows(program, table):
    """
    Execute a row-valued program (no return-type check).

    Returns:
        list of row indices, or `ExecError`
    """
    try:
        return _evaluate(program, table)
    except _Failure as failure:
        return failure.error


def _evaluate(node, table):
    if isinstance(node, ROW_CANDIDATES):
        return filter_rows(table, node)
    if isinstance(node, ColumnChoice):
        return node.column
    args = [_evaluate(a, table) for a in node.args]
    return _OPERATIONS[node.name](node, table, *args)


def _select(node, table, rows, column):
    if not rows:
        raise _Failure(EMPTY_DENOTATION, node, table)
    return [table.cell(row, column) for row in rows]


def _superlative(pick):
    def operation(node, table, rows, column):
        if not rows:
            raise _Failure(EMPTY_ROWS, node, table)
        keys = [table.cell(row, column).sort_key() for row in rows]
        best = pick(keys)
        return [row for row, key in zip(rows, keys) if key == best]
    return operation


def _first(node, table, rows):
    if not rows:
        raise _Failure(EMPTY_ROWS, node, table)
    return rows[:1]


def _last(node, table, rows):
    if not rows:
        raise _Failure(EMPTY_ROWS, node, table)
    return rows[-1:]


def _shift(offset):
    def operation(node, table, rows):
        shifted = [row + offset for row in rows]
        if any(not 0 <= row < table.n_rows for row in shifted):
            raise _Failure(INDEX_OUT_OF_RANGE, node, table)
        return shifted
    return operation


def _count(node, table, rows):
    return [CellValue.number(len(rows))]


def _aggregate(reduce):
    def operation(node, table, rows, column):
        if not rows:
            raise _Failure(EMPTY_ROWS, node, table)
        x = np.array([table.cell(row, column).value for row in rows],
                     dtype=np.float64)
        with np.errstate(over='ignore'):
            total = reduce(x)
        return [_number(node, table, total)]
    return operation


def _scalar(node, table, values):
    if len(values) != 1 or values[0].kind != NUMBER:
        raise _Failure(TYPE_ERROR, node, table)
    return values[0].value


def _number(node, table, x):
    # sums past the float64 range overflow to inf
    if not np.isfinite(x):
        raise _Failure(TYPE_ERROR, node, table)
    return CellValue.number(x)


def _diff(node, table, a, b):
    return [_number(node, table,
                    _scalar(node, table, a) - _scalar(node, table, b))]


_OPERATIONS = {
    'select': _select,
    'argmax': _superlative(max),
    'argmin': _superlative(min),
    'first': _first,
    'last': _last,
    'previous': _shift(-1),
    'next': _shift(1),
    'count': _count,
    'max': _aggregate(np.max),
    'min': _aggregate(np.min),
    'sum': _aggregate(np.sum),
    'average': _aggregate(np.mean),
    'diff': _diff,
}
