import logging
from collections import OrderedDict
from dataclasses import replace

import numpy as np

from ..executor import execute
from ..program import parse_program
from ..search import SearchConfig, find_consistent
from ..tables import (CellValue, Column, Corpus, Denotation, Example, Table,
                      NUMBER, STRING, denotation_equal, make_question)
from .base_corpus_generator import _BaseCorpusGenerator, SynConfig, TEMPLATES

logger = logging.getLogger(__name__)

ENTITY_WORDS = ('turkey', 'norway', 'brazil', 'canada', 'egypt', 'france',
                'ghana', 'india', 'japan', 'kenya', 'latvia', 'mexico',
                'nepal', 'oman', 'peru', 'qatar', 'russia', 'spain',
                'togo', 'uganda', 'vietnam', 'wales', 'yemen', 'zambia',
                'chile', 'cuba', 'denmark', 'finland', 'greece', 'haiti')
STRING_COLUMNS = ('nation', 'team', 'player', 'club')
NUMBER_COLUMNS = ('gold', 'silver', 'bronze', 'points', 'wins', 'goals',
                  'losses', 'titles')
MAX_VALUE = 10
MAX_REGENERATE = 20

COMPARISONS = (('gt', ('more', 'than')), ('ge', ('at', 'least')),
               ('lt', ('less', 'than')), ('le', ('at', 'most')))

_TAGS = {'how': 'WRB', 'many': 'JJ', 'which': 'WDT', 'what': 'WP',
         'did': 'VBD', 'get': 'VB', 'had': 'VBD', 'came': 'VBD', 'is': 'VBZ',
         'the': 'DT', 'one': 'NN', 'with': 'IN', 'of': 'IN', 'than': 'IN',
         'before': 'IN', 'after': 'IN', 'at': 'IN', 'and': 'CC',
         'most': 'JJS', 'least': 'JJS', 'more': 'JJR', 'less': 'JJR',
         'total': 'JJ', 'average': 'JJ'}


class RegenerateExample(RuntimeError):
    pass


def _tag(token, entities):
    if token in entities:
        return 'NNP'
    if token.isdigit():
        return 'CD'
    return _TAGS.get(token, 'NN')


class TableQAGenerator(_BaseCorpusGenerator):
    """
    Generates tables with one string column of entity names and two or
    three number columns, template questions about them with their gold
    programs, and optionally rewrites tables until each chosen training
    question has several consistent programs.

    >>> generator = TableQAGenerator(SynConfig(seed=1, n_tables=2,
    ...                                        n_examples=3, ratio=(1, 0, 0)))
    >>> corpus = generator.generate()
    >>> len(corpus), len(corpus.tables)
    (3, 2)
    >>> example = corpus.examples[0]
    >>> table = corpus.table_for(example)
    >>> result = execute(example.gold_programs[0], table)
    >>> denotation_equal(result, example.denotation)
    True
    """

    def generate(self):
        """
        Generate the corpus.

        Returns:
          `Corpus` whose examples carry gold programs
        """
        tables = OrderedDict()
        for index in range(self.config.n_tables):
            table = self.generate_table(self.table_rng(index), index)
            tables[table.id] = table
        names = list(tables)
        weights = self.config.weights()
        weights = weights / weights.sum()
        splits = [split for split, n in zip(('train', 'dev', 'test'),
                                            self.split_sizes())
                  for _ in range(n)]
        ordinals = dict.fromkeys(('train', 'dev', 'test'), 0)
        examples = []
        for index, split in enumerate(splits):
            rng = self.example_rng(index)
            table = tables[names[rng.integers(len(names))]]
            example_id = '%s-%05d' % (split, ordinals[split])
            ordinals[split] += 1
            for _ in range(MAX_REGENERATE):
                if rng.random() < self.config.two_condition_rate:
                    template = 'two_conditions'
                else:
                    template = TEMPLATES[rng.choice(len(TEMPLATES),
                                                    p=weights)]
                try:
                    example = self.generate_example(rng, table, template,
                                                    example_id, split)
                    break
                except RegenerateExample as error:
                    logger.debug("%s: regenerating: %s", example_id, error)
            else:
                raise RuntimeError("no executable question for %s after %d "
                                   "attempts" % (example_id, MAX_REGENERATE))
            examples.append(example)
        corpus = Corpus(tables, examples)
        if self.config.spurious_rate > 0:
            corpus = self.inject_spuriousness(corpus)
        return corpus

    def generate_table(self, rng, index=0):
        """
        Draw a table.

        Args:
          rng: numpy random generator.
          index: table ordinal, used in the table id.

        Returns:
          `Table` with all cells populated
        """
        low, high = self.config.rows_per_table
        n_rows = int(rng.integers(low, high + 1))
        names = rng.choice(len(ENTITY_WORDS), size=n_rows, replace=False)
        key = STRING_COLUMNS[rng.integers(len(STRING_COLUMNS))]
        n_numbers = int(rng.integers(2, 4))
        numbers = rng.choice(len(NUMBER_COLUMNS), size=n_numbers,
                             replace=False)
        columns = [Column((key,), STRING,
                          tuple(CellValue.string(ENTITY_WORDS[i])
                                for i in names))]
        for i in numbers:
            values = rng.integers(0, MAX_VALUE, size=n_rows)
            columns.append(Column((NUMBER_COLUMNS[i],), NUMBER,
                                  tuple(CellValue.number(float(x))
                                        for x in values)))
        return Table('table-%03d' % index, tuple(columns), n_rows)

    def generate_example(self, rng, table, template, example_id='train-00000',
                         split='train'):
        """
        Instantiate a question template on a table.

        Args:
          rng: numpy random generator.
          table: the table asked about.
          template: a template id from `TEMPLATES` or ``two_conditions``.
          example_id: id of the example.
          split: its split.

        Returns:
          `Example` with its gold program and executed denotation

        Raises:
          RegenerateExample: when the gold program does not execute.
        """
        if template not in TEMPLATES + ('two_conditions',):
            raise RuntimeError("unknown template %r" % (template,))
        tokens, program = getattr(self, '_' + template)(rng, table)
        gold = parse_program(program, table)
        result = execute(gold, table)
        if not isinstance(result, Denotation):
            raise RegenerateExample("%s gives %s" % (program, result.kind))
        entities = set(c.value for c in table.columns[0].cells)
        question = make_question(tokens, table,
                                 [_tag(t, entities) for t in tokens])
        return Example(example_id, question, table.id, result, split,
                       (gold,))

    def _pick(self, rng, table, n=1):
        """String column name and `n` distinct number column names."""
        numbers = rng.choice(np.arange(1, table.width), size=n,
                             replace=False)
        return (table.columns[0].name,) + tuple(table.columns[i].name
                                                for i in numbers)

    def _entity(self, rng, table, n=1):
        rows = rng.choice(table.n_rows, size=n, replace=False)
        return [table.columns[0].cells[r].value for r in rows]

    def _value(self, rng, table, column):
        cells = table.columns[table.column_index(column)].cells
        return int(cells[rng.integers(table.n_rows)].value)

    def _select(self, rng, table):
        key, number = self._pick(rng, table)
        entity, = self._entity(rng, table)
        tokens = ['how', 'many', number, 'did', entity, 'get']
        return tokens, 'select(filter(all_rows, eq(col:%s, s:%s)), col:%s)' \
            % (key, entity, number)

    def _argmax(self, rng, table):
        key, number = self._pick(rng, table)
        tokens = ['which', key, 'had', 'the', 'most', number]
        return tokens, 'select(argmax(all_rows, col:%s), col:%s)' % (number,
                                                                    key)

    def _argmin(self, rng, table):
        key, number = self._pick(rng, table)
        tokens = ['which', key, 'had', 'the', 'least', number]
        return tokens, 'select(argmin(all_rows, col:%s), col:%s)' % (number,
                                                                    key)

    def _count(self, rng, table):
        key, number = self._pick(rng, table)
        op, words = COMPARISONS[rng.integers(len(COMPARISONS))]
        value = self._value(rng, table, number)
        tokens = ['how', 'many', key, 'had'] + list(words) + \
            [str(value), number]
        return tokens, 'count(filter(all_rows, %s(col:%s, n:%d)))' % (
            op, number, value)

    def _shifted(self, rng, table, function, word):
        key, number = self._pick(rng, table)
        tokens = ['which', key, 'came', word, 'the', 'one', 'with', 'the',
                  'most', number]
        return tokens, 'select(%s(argmax(all_rows, col:%s)), col:%s)' % (
            function, number, key)

    def _previous(self, rng, table):
        return self._shifted(rng, table, 'previous', 'before')

    def _next(self, rng, table):
        return self._shifted(rng, table, 'next', 'after')

    def _sum(self, rng, table):
        key, number = self._pick(rng, table)
        first, second = self._entity(rng, table, 2)
        tokens = ['what', 'is', 'the', 'total', number, 'of', first, 'and',
                  second]
        return tokens, ('sum(filter(all_rows, or(eq(col:%s, s:%s), '
                        'eq(col:%s, s:%s))), col:%s)' %
                        (key, first, key, second, number))

    def _average(self, rng, table):
        key, number = self._pick(rng, table)
        tokens = ['what', 'is', 'the', 'average', number]
        return tokens, 'average(all_rows, col:%s)' % number

    def _total(self, rng, table):
        key, number = self._pick(rng, table)
        tokens = ['what', 'is', 'the', 'total', number]
        return tokens, 'sum(all_rows, col:%s)' % number

    def _two_conditions(self, rng, table):
        key, first, second = self._pick(rng, table, 2)
        low = self._value(rng, table, first)
        high = self._value(rng, table, second)
        tokens = ['how', 'many', key, 'had', 'more', 'than', str(low), first,
                  'and', 'less', 'than', str(high), second]
        return tokens, ('count(filter(all_rows, and(gt(col:%s, n:%d), '
                        'lt(col:%s, n:%d))))' % (first, low, second, high))

    def inject_spuriousness(self, corpus):
        """
        Give a `spurious_rate` fraction of the training examples tables on
        which at least `spurious_target` programs are consistent.

        Each chosen example gets its own copy of its table whose number
        cells are rewritten one at a time, keeping only rewrites that
        preserve the gold denotation, until the search finds enough
        consistent programs. An example that does not get there within
        `max_attempts` rewrites keeps its original table.

        Args:
          corpus: a corpus with gold programs.

        Returns:
          a new `Corpus` with `spurious_count` set on the chosen examples
        """
        train = [i for i, e in enumerate(corpus.examples)
                 if e.split == 'train']
        n_chosen = int(round(self.config.spurious_rate * len(train)))
        if not n_chosen:
            return corpus
        rng = self.spurious_rng()
        chosen = sorted(rng.choice(train, size=n_chosen, replace=False))
        search_config = SearchConfig(max_rules=self.config.search_cap)
        tables = OrderedDict(corpus.tables)
        examples = list(corpus.examples)
        for index in chosen:
            example = examples[index]
            if not example.gold_programs:
                raise RuntimeError("%s has no gold program" % example.id)
            table = tables[example.table_id]
            count = initial = find_consistent(
                example, table, search_config).total_count
            current = table
            attempts = 0
            while count < self.config.spurious_target:
                if attempts == self.config.max_attempts:
                    logger.warning("%s: %d consistent programs after %d "
                                   "rewrites, left unperturbed", example.id,
                                   count, attempts)
                    current = table
                    count = initial
                    break
                attempts += 1
                candidate = self._perturb(rng, current, example,
                                          '%s-%s' % (table.id, example.id))
                if candidate is None:
                    continue
                current, trial = candidate
                count = find_consistent(trial, current,
                                        search_config).total_count
            if current is not table:
                tables[current.id] = current
                example = trial
            examples[index] = replace(example, spurious_count=count)
        return Corpus(tables, examples, corpus.split)

    def _perturb(self, rng, table, example, table_id):
        """
        Overwrite one number cell with a value already present in the
        table or the answer; None if the gold denotation changes.
        """
        numbers = [i for i, c in enumerate(table.columns)
                   if c.ctype == NUMBER]
        pool = [cell for i in numbers for cell in table.columns[i].cells]
        pool += [v for v in example.denotation.values if v.kind == NUMBER]
        column = numbers[rng.integers(len(numbers))]
        row = int(rng.integers(table.n_rows))
        cells = list(table.columns[column].cells)
        cells[row] = pool[rng.integers(len(pool))]
        columns = list(table.columns)
        columns[column] = replace(columns[column], cells=tuple(cells))
        perturbed = Table(table_id, tuple(columns), table.n_rows)
        gold = example.gold_programs[0]
        result = execute(gold, perturbed)
        if not isinstance(result, Denotation) or \
                not denotation_equal(result, example.denotation):
            return None
        question = example.question
        texts = list(question.texts[:-1])
        tags = [t.pos for t in question.tokens[:-1]]
        return perturbed, replace(example, table_id=table_id,
                                  question=make_question(texts, perturbed,
                                                         tags))


def inject_spuriousness(corpus, config=None):
    """Module level form of `TableQAGenerator.inject_spuriousness`."""
    return TableQAGenerator(config).inject_spuriousness(corpus)
