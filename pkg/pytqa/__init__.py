import os
from .tables import (CellValue, Column, Table, Question, Denotation, Example,
                     Corpus, load_corpus, save_corpus, make_question,
                     denotation_equal)
from .program import parse_program, print_program
from .grammar import (GrammarConfig, AbstractProgram, instantiate, strip,
                      abstract_grammar_for_table, enumerate_abstract_programs)
from .executor import execute, typecheck
from .search import SearchConfig, SearchCache, find_consistent, search_corpus
from .lattice import forward_backward, feasible_spans
from .model import ModelConfig, ParserNetwork
from .trainer import TrainConfig, train
from .evalkit import EvalConfig, evaluate, predict
from .structured_parser import StructuredParser


def test():
    r"""
    Run all the tests and doctests available.
    """
    import pytest
    path = os.path.split(__file__)[0]
    return pytest.main([path, '--doctest-modules', '-m', 'not slow'])


def get_version():
    from importlib.metadata import version as distribution_version
    from importlib.metadata import PackageNotFoundError

    try:
        version = distribution_version(__name__)
    except PackageNotFoundError:
        version = "unknown, try running `pip install -e .`"

    return version

__version__ = get_version()

__all__ = ['__version__',
           'test',
           'StructuredParser',
           'CellValue', 'Column', 'Table', 'Question', 'Denotation',
           'Example', 'Corpus', 'load_corpus', 'save_corpus',
           'make_question', 'denotation_equal',
           'parse_program', 'print_program',
           'GrammarConfig', 'AbstractProgram', 'instantiate', 'strip',
           'abstract_grammar_for_table', 'enumerate_abstract_programs',
           'execute', 'typecheck',
           'SearchConfig', 'SearchCache', 'find_consistent', 'search_corpus',
           'forward_backward', 'feasible_spans',
           'ModelConfig', 'ParserNetwork',
           'TrainConfig', 'train',
           'EvalConfig', 'evaluate', 'predict']
