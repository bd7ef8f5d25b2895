"""
The abstract grammar (typed production rules, derivations and their
linearization) and the instantiation grammar (slot candidates).

An abstract program is a derivation whose leaves are ``#row_slot`` and
``#column_slot`` markers. Its linearization is the left-to-right
depth-first sequence of production rules; the first rule always selects
the return type.
"""

import functools
import itertools
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .program import (ROOT, ROW, LIST_ROW, COL_STRING, COL_NUMBER, COL_DATE,
                      RETURN_TYPES, CELL_KIND, FUNCTIONS, OPERATORS, AND, OR,
                      NONE, AllRows, RowFilter, ColumnChoice, Condition, Call,
                      ROW_CANDIDATES, func_type, is_subtype)
from .tables import STRING

__all__ = ['GrammarConfig', 'ProductionRule', 'Derivation', 'Slot',
           'AbstractProgram', 'AbstractGrammar', 'Condition', 'AllRows',
           'RowFilter', 'ColumnChoice', 'rule_inventory',
           'abstract_grammar_for_table', 'valid_next_rules', 'linearize',
           'parse', 'enumerate_abstract_programs', 'slot_candidates',
           'instantiate', 'strip']

ROW_SLOT = '#row_slot'
COLUMN_SLOT = '#column_slot'


class DerivationError(RuntimeError):

    def __init__(self, message, index):
        super(DerivationError, self).__init__(
            "%s at rule %d" % (message, index))
        self.index = index


class InstantiationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GrammarConfig(object):
    """
    Instantiation grammar settings.

    Attributes:
        max_conditions: largest number of conditions in a row filter.
        enable_and: allow conjunctions of conditions.
        enable_or: allow disjunctions of conditions.
        function_types: represent every function with a function-type
            non-terminal and two production rules.
    """
    max_conditions: int = 2
    enable_and: bool = True
    enable_or: bool = True
    function_types: bool = False

    def __post_init__(self):
        if self.max_conditions < 1:
            raise RuntimeError("max_conditions must be at least 1")

    @classmethod
    def preset(cls, name, **overrides):
        """
        Connective gating of the dataset-style presets.

        >>> GrammarConfig.preset('wtq-like').enable_and
        False
        """
        return replace(cls(**PRESETS[name]), **overrides)


PRESETS = {'wtq-like': dict(enable_and=False, enable_or=True),
           'wsq-like': dict(enable_and=True, enable_or=False),
           'synthetic': dict(enable_and=True, enable_or=True)}


@dataclass(frozen=True)
class ProductionRule(object):
    lhs: object
    rhs: str
    children: tuple = ()
    kind: str = 'function'
    function: object = None

    def __str__(self):
        return '%s -> %s' % (self.lhs, self.rhs)

    @property
    def is_slot(self):
        return self.kind == 'slot'

    @property
    def cost(self):
        """Contribution to the program size bounded by ``max_rules``."""
        return 1 if self.kind in ('function', 'slot') else 0


@functools.lru_cache(maxsize=None)
def rule_inventory(function_types=False):
    """
    The fixed, ordered global rule inventory; a rule's id is its index.

    >>> [str(r) for r in rule_inventory()[:2]]
    ['ROOT -> STRING', 'ROOT -> NUMBER']
    """
    rules = [ProductionRule(ROOT, str(t), (t,), 'root')
             for t in RETURN_TYPES]
    expansions = []
    for function in FUNCTIONS:
        if function_types:
            ftype = func_type(function.args, function.rtype)
            expansion = ProductionRule(function.rtype, str(ftype), (ftype,),
                                       'expansion')
            if expansion not in expansions:
                expansions.append(expansion)
                rules.append(expansion)
            rules.append(ProductionRule(ftype, function.name, function.args,
                                        'function', function))
        else:
            rules.append(ProductionRule(function.rtype, function.name,
                                        function.args, 'function', function))
    rules.append(ProductionRule(LIST_ROW, ROW_SLOT, (), 'slot'))
    for ctype in (COL_STRING, COL_NUMBER, COL_DATE):
        rules.append(ProductionRule(ctype, COLUMN_SLOT, (), 'slot'))
    return tuple(rules)


@functools.lru_cache(maxsize=None)
def _rule_ids(function_types):
    return dict((rule, index)
                for index, rule in enumerate(rule_inventory(function_types)))


def _function_rules(function, function_types):
    for rule in rule_inventory(function_types):
        if rule.function == function:
            if not function_types:
                return (rule,)
            for expansion in rule_inventory(function_types):
                if expansion.kind == 'expansion' and \
                        expansion.children == (rule.lhs,):
                    return expansion, rule
    raise InstantiationError("function %s is not in the inventory" %
                             function.name)


def _slot_rule(ctype, function_types):
    for rule in rule_inventory(function_types):
        if rule.is_slot and rule.lhs == ctype:
            return rule
    raise InstantiationError("no slot rule for %s" % ctype)


def _root_rule(rtype, function_types):
    if rtype not in RETURN_TYPES:
        raise InstantiationError("%s is not a return type" % rtype)
    return rule_inventory(function_types)[RETURN_TYPES.index(rtype)]


@dataclass(frozen=True)
class Derivation(object):
    rule: ProductionRule
    children: tuple = ()


@dataclass(frozen=True)
class Slot(object):
    kind: str
    index: int
    expected_coltype: Optional[str] = None
    position: int = 0


@dataclass(frozen=True, eq=False)
class AbstractProgram(object):
    """
    A linearized derivation with its slots in linearization order.
    """
    rules: Tuple[ProductionRule, ...]
    slots: Tuple[Slot, ...] = ()
    derivation: Derivation = None

    @classmethod
    def from_rules(cls, rules):
        rules = tuple(rules)
        slots = []
        for position, rule in enumerate(rules):
            if rule.rhs == ROW_SLOT:
                slots.append(Slot('row', len(slots), None, position))
            elif rule.rhs == COLUMN_SLOT:
                slots.append(Slot('column', len(slots), CELL_KIND[rule.lhs],
                                  position))
        return cls(rules, tuple(slots), parse(rules))

    def __eq__(self, other):
        return isinstance(other, AbstractProgram) and \
            self.rules == other.rules

    def __hash__(self):
        return hash(self.rules)

    @property
    def size(self):
        return sum(rule.cost for rule in self.rules)

    def __str__(self):
        return _render(self.derivation)

    def __repr__(self):
        return 'AbstractProgram(%s)' % self


def _render(node):
    rule = node.rule
    if rule.kind in ('root', 'expansion'):
        return _render(node.children[0])
    if rule.is_slot:
        return rule.rhs
    return '%s(%s)' % (rule.rhs, ', '.join(_render(c)
                                             for c in node.children))


class AbstractGrammar(object):
    """
    A set of production rules, the abstract grammar of one table.

    Args:
        rules: the rules, a subset of the global inventory.
        function_types (bool): which global inventory the rules come from.
    """

    def __init__(self, rules, function_types=False):
        ids = _rule_ids(function_types)
        self.function_types = function_types
        self.rules = tuple(sorted(rules, key=ids.__getitem__))
        self._min_cost = _min_costs(self.rules)

    def __contains__(self, rule):
        return rule in self.rules

    def __len__(self):
        return len(self.rules)

    def rule_id(self, rule):
        return _rule_ids(self.function_types)[rule]

    def pending(self, prefix):
        """
        Types still to be expanded after `prefix`, the leftmost last.

        Raises:
            DerivationError: naming the first rule that cannot expand the
                demanded type.
        """
        stack = [ROOT]
        for index, rule in enumerate(prefix):
            if not stack:
                raise DerivationError("derivation already complete", index)
            demanded = stack.pop()
            if rule not in self.rules or not is_subtype(rule.lhs, demanded):
                raise DerivationError(
                    "rule %s cannot expand %s" % (rule, demanded), index)
            stack.extend(reversed(rule.children))
        return stack

    def valid_next_rules(self, prefix):
        """
        The rules that may expand the leftmost unexpanded node of a partial
        derivation given as its rule prefix.
        """
        stack = self.pending(prefix)
        if not stack:
            return []
        demanded = stack[-1]
        return [r for r in self.rules if is_subtype(r.lhs, demanded)]

    def min_cost(self, types):
        return sum(self._min_cost.get(t, float('inf')) for t in types)


def _min_costs(rules):
    demands = set([ROOT])
    for rule in rules:
        demands.update(rule.children)
    cost = dict((t, float('inf')) for t in demands)
    changed = True
    while changed:
        changed = False
        for demanded in demands:
            for rule in rules:
                if not is_subtype(rule.lhs, demanded):
                    continue
                value = rule.cost + sum(cost.get(c, float('inf'))
                                        for c in rule.children)
                if value < cost[demanded]:
                    cost[demanded] = value
                    changed = True
    return cost


def abstract_grammar_for_table(table, config=None):
    """
    The global rule inventory minus the rules that cannot be completed into
    an executable program on `table`.

    Args:
        table (Table): the table.
        config (GrammarConfig, optional): grammar settings.

    Returns:
        `AbstractGrammar`
    """
    config = config or GrammarConfig()
    present = set(c.ctype for c in table.columns)
    inventory = rule_inventory(config.function_types)
    usable = [r for r in inventory
              if not r.is_slot or r.lhs == LIST_ROW or
              CELL_KIND[r.lhs] in present]
    costs = _min_costs(usable)
    finite = [r for r in usable
              if all(costs.get(c, float('inf')) < float('inf')
                     for c in r.children)]
    return AbstractGrammar(finite, config.function_types)


def valid_next_rules(grammar, prefix):
    return grammar.valid_next_rules(prefix)


def linearize(derivation):
    """Left-to-right depth-first rule sequence of a derivation."""
    rules = [derivation.rule]
    for child in derivation.children:
        rules.extend(linearize(child))
    return tuple(rules)


def parse(rules, grammar=None):
    """
    Rebuild the derivation of a rule sequence.

    Args:
        rules: the linearized rules.
        grammar (AbstractGrammar, optional): restricts the usable rules;
            defaults to the inventory the rules come from.

    Returns:
        `Derivation`

    Raises:
        DerivationError: naming the first offending index.
    """
    rules = tuple(rules)
    if grammar is None:
        function_types = any(r.kind == 'expansion' or
                             (r.lhs is not None and r.lhs.is_function)
                             for r in rules)
        grammar = _full_grammar(function_types)
    grammar.pending(rules)
    position = [0]

    def build(demanded):
        index = position[0]
        if index >= len(rules):
            raise DerivationError("derivation incomplete", index)
        rule = rules[index]
        if not is_subtype(rule.lhs, demanded):
            raise DerivationError(
                "rule %s cannot expand %s" % (rule, demanded), index)
        position[0] += 1
        return Derivation(rule, tuple(build(c) for c in rule.children))

    derivation = build(ROOT)
    if position[0] != len(rules):
        raise DerivationError("derivation already complete", position[0])
    return derivation


@functools.lru_cache(maxsize=None)
def _full_grammar(function_types):
    return AbstractGrammar(rule_inventory(function_types), function_types)


def enumerate_abstract_programs(grammar, max_rules):
    """
    All complete derivations of at most `max_rules` rules (the root and
    function-type expansions are free), in lexicographic rule-id order.

    Args:
        grammar (AbstractGrammar): the table's grammar.
        max_rules (int): the size cap, at least 3.

    Returns:
        list of `AbstractProgram`
    """
    if max_rules < 3:
        raise RuntimeError("max_rules must be at least 3")
    programs = []

    def extend(prefix, stack, size):
        if not stack:
            programs.append(AbstractProgram.from_rules(prefix))
            return
        demanded = stack[-1]
        for rule in grammar.rules:
            if not is_subtype(rule.lhs, demanded):
                continue
            rest = stack[:-1] + list(reversed(rule.children))
            total = size + rule.cost
            if total + grammar.min_cost(rest) > max_rules:
                continue
            extend(prefix + (rule,), rest, total)

    extend((), [ROOT], 0)
    return programs


def slot_candidates(slot, table, question, config=None):
    """
    Candidates that can fill a slot.

    Column slots take every column of the expected type. Row slots take
    ``all_rows``, every condition built from a type-compatible column, an
    operator and an entity value, and connective-joined combinations of up
    to ``max_conditions`` conditions.

    Args:
        slot (Slot): the slot.
        table (Table): the table.
        question (Question): the annotated question.
        config (GrammarConfig, optional): grammar settings.

    Returns:
        list of candidates in a deterministic order
    """
    config = config or GrammarConfig()
    if slot.kind == 'column':
        return [ColumnChoice(index)
                for index, column in enumerate(table.columns)
                if slot.expected_coltype in (None, column.ctype)]
    conditions = []
    for mention in question.entities:
        for index, column in enumerate(table.columns):
            if column.ctype != mention.value.kind:
                continue
            ops = ('=',) if column.ctype == STRING else OPERATORS
            for op in ops:
                condition = Condition(index, op, mention.value)
                if condition not in conditions:
                    conditions.append(condition)
    candidates = [AllRows()]
    candidates.extend(RowFilter((c,), NONE) for c in conditions)
    connectives = [c for c, on in ((AND, config.enable_and),
                                   (OR, config.enable_or)) if on]
    for n in range(2, config.max_conditions + 1):
        for combination in itertools.combinations(conditions, n):
            for connective in connectives:
                candidates.append(RowFilter(combination, connective))
    return candidates


def instantiate(program, assignment, table=None):
    """
    Substitute a candidate for every slot.

    Args:
        program (AbstractProgram): the abstract program.
        assignment: one candidate per slot, in slot order.
        table (Table, optional): when given, column candidates are checked
            against the expected column types.

    Returns:
        the executable program tree

    Raises:
        InstantiationError: naming the slot that is missing or ill-typed.
    """
    assignment = tuple(assignment)
    for slot in program.slots:
        if slot.index >= len(assignment) or assignment[slot.index] is None:
            raise InstantiationError("slot %d has no candidate" % slot.index)
        _check_candidate(slot, assignment[slot.index], table)
    if len(assignment) != len(program.slots):
        raise InstantiationError("%d candidates for %d slots" % (
            len(assignment), len(program.slots)))
    fillers = iter(assignment)

    def build(node):
        rule = node.rule
        if rule.kind in ('root', 'expansion'):
            return build(node.children[0])
        if rule.is_slot:
            return next(fillers)
        return Call(rule.function, tuple(build(c) for c in node.children))

    return build(program.derivation)


def _check_candidate(slot, candidate, table):
    if slot.kind == 'row':
        if not isinstance(candidate, ROW_CANDIDATES):
            raise InstantiationError(
                "slot %d is a row slot, got %r" % (slot.index, candidate))
        if table is not None and isinstance(candidate, RowFilter):
            for condition in candidate.conditions:
                if not 0 <= condition.column < table.width or \
                        table.columns[condition.column].ctype != \
                        condition.value.kind:
                    raise InstantiationError(
                        "slot %d has an ill-typed condition" % slot.index)
        return
    if not isinstance(candidate, ColumnChoice):
        raise InstantiationError(
            "slot %d is a column slot, got %r" % (slot.index, candidate))
    if table is not None:
        if not 0 <= candidate.column < table.width:
            raise InstantiationError(
                "slot %d: column %d is out of range" %
                (slot.index, candidate.column))
        ctype = table.columns[candidate.column].ctype
        if slot.expected_coltype not in (None, ctype):
            raise InstantiationError(
                "slot %d expects a %s column, got a %s column" %
                (slot.index, slot.expected_coltype, ctype))


def strip(program, function_types=False):
    """
    Split a program into its abstract program and slot assignment; the
    inverse of `instantiate`.

    >>> from pytqa.program import parse_program
    >>> from pytqa.tests.test import get_medal_table
    >>> z = parse_program('count(all_rows)', get_medal_table())
    >>> h, assignment = strip(z)
    >>> str(h), assignment
    ('count(#row_slot)', (AllRows(),))
    """
    rules = [_root_rule(program.function.rtype, function_types)]
    assignment = []

    def walk(node, demanded):
        if isinstance(node, Call):
            rules.extend(_function_rules(node.function, function_types))
            for arg, arg_type in zip(node.args, node.function.args):
                walk(arg, arg_type)
        elif isinstance(node, ROW_CANDIDATES):
            rules.append(_slot_rule(LIST_ROW, function_types))
            assignment.append(node)
        elif isinstance(node, ColumnChoice):
            rules.append(_slot_rule(demanded, function_types))
            assignment.append(node)
        else:
            raise InstantiationError("not a program node: %r" % (node,))

    walk(program, program.function.rtype)
    return AbstractProgram.from_rules(rules), tuple(assignment)


def slot_type(slot):
    """The demanded type of a slot's marker."""
    if slot.kind == 'row':
        return LIST_ROW
    return {'string': COL_STRING, 'number': COL_NUMBER,
            'date': COL_DATE}[slot.expected_coltype]
