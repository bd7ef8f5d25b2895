from .base_corpus_generator import SynConfig, TEMPLATES
from .table_qa_generator import (TableQAGenerator, RegenerateExample,
                                 inject_spuriousness)

__all__ = ['make_table_qa', 'make_spurious_table_qa', 'make_table',
           'SynConfig', 'TableQAGenerator', 'inject_spuriousness',
           'TEMPLATES']


def make_table_qa(n_examples=900, n_tables=60, seed=0, rows_per_table=(4, 8),
                  ratio=(6, 1, 2), spurious_rate=0., template_mix=None,
                  two_condition_rate=0.1):
    """Generate a synthetic table question answering corpus

    Tables hold one string column of entity names and two or three number
    columns. Questions are filled in from fixed templates covering
    lookups, superlatives, comparisons with counting, previous/next rows
    and aggregation, each with the gold program that answers it. The
    denotation of every example is the execution of its gold program.

    Args:
        n_examples (int, optional): number of examples
        n_tables (int, optional): number of tables
        seed (int, optional): seed of the generator
        rows_per_table (tuple, optional): inclusive range of row counts
        ratio (tuple, optional): train, dev and test proportions
        spurious_rate (float, optional): fraction of the training
            examples whose tables are rewritten until several programs are
            consistent with their denotation
        template_mix (dict, optional): weight of every template in
            `TEMPLATES`
        two_condition_rate (float, optional): fraction of questions with a
            two-condition filter

    Returns:
        `Corpus` with gold programs

    Example

    >>> corpus = make_table_qa(n_examples=9, n_tables=2, seed=4)
    >>> [len(corpus.select(split)) for split in ('train', 'dev', 'test')]
    [6, 1, 2]
    >>> make_table_qa(n_examples=9, n_tables=2, seed=4) == corpus
    True

    """
    config = SynConfig(seed=seed, n_tables=n_tables,
                       rows_per_table=tuple(rows_per_table),
                       n_examples=n_examples, template_mix=template_mix,
                       spurious_rate=spurious_rate,
                       two_condition_rate=two_condition_rate,
                       ratio=tuple(ratio))
    return TableQAGenerator(config).generate()


def make_spurious_table_qa(n_examples=900, n_tables=60, seed=0,
                           spurious_rate=0.5):
    """Generate the spurious-rich corpus of the structured versus standard
    attention comparison

    Args:
        n_examples (int, optional): number of examples
        n_tables (int, optional): number of tables
        seed (int, optional): seed of the generator
        spurious_rate (float, optional): fraction of rewritten training
            examples

    Returns:
        `Corpus` where rewritten examples carry `spurious_count`
    """
    return make_table_qa(n_examples=n_examples, n_tables=n_tables, seed=seed,
                         spurious_rate=spurious_rate)


def make_table(seed=0, rows_per_table=(4, 8)):
    """Draw a single synthetic table

    Args:
        seed (int, optional): seed of the generator
        rows_per_table (tuple, optional): inclusive range of row counts

    Returns:
        `Table`

    >>> make_table(seed=1, rows_per_table=(3, 3)).n_rows
    3
    """
    generator = TableQAGenerator(SynConfig(seed=seed, n_tables=1,
                                           rows_per_table=rows_per_table,
                                           n_examples=0))
    return generator.generate_table(generator.table_rng(0))
