"""
Command line interface::

    pytqa [--config FILE] [--seed N] [--quiet] [--workers N] COMMAND

with the commands ``gen``, ``search``, ``stats``, ``train``, ``eval``,
``parse <example-id>`` and ``align <example-id>``. Tables are printed tab
separated to standard output and logs go to standard error. The exit
code is 0 on success, 1 for usage and configuration errors and 2 for data
errors.
"""

import argparse
import logging
import os
import sys

import torch

from .config import ConfigError, is_quiet, load_config
from .tables import CorpusFormatError, load_corpus

logger = logging.getLogger(__name__)

OK = 0
USAGE = 1
DATA = 2


class UsageError(RuntimeError):
    pass


class DataError(RuntimeError):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _ArgumentParser(prog='pytqa', description=(
        "Weakly supervised question answering over tables."))
    parser.add_argument('--config', help="configuration file")
    parser.add_argument('--seed', type=int, help="overrides every seed")
    parser.add_argument('--quiet', action='store_true',
                        help="log warnings only")
    parser.add_argument('--workers', type=int, default=1,
                        help="parallel jobs of search and eval")
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.add_parser('gen', help="generate a synthetic corpus")
    commands.add_parser('search', help="search consistent programs")
    stats = commands.add_parser('stats', help="print coverage statistics")
    stats.add_argument('--split', default='train')
    commands.add_parser('train', help="train the parser")
    evaluate = commands.add_parser('eval', help="evaluate the parser")
    evaluate.add_argument('--split', default='test')
    parse = commands.add_parser('parse', help="parse one example")
    parse.add_argument('example_id')
    align = commands.add_parser('align', help="print slot alignments")
    align.add_argument('example_id')
    align.add_argument('--gold', action='store_true',
                       help="align the gold program's abstract program")
    align.add_argument('--plot', help="save a heatmap to this file")
    return parser


def _corpus(config):
    if not config.corpus:
        raise UsageError("no corpus path configured")
    if not os.path.exists(config.corpus):
        raise DataError("corpus %s does not exist" % config.corpus)
    return load_corpus(config.corpus)


def _cache(config):
    from .search import SearchCache
    if not os.path.isdir(config.cache_dir):
        os.makedirs(config.cache_dir)
    return SearchCache(config.cache_path, config.search)


def _consistent(corpus, config, workers):
    from .search import search_corpus
    return search_corpus(corpus, config.search, _cache(config), workers)


def _network(config):
    from .model import load_checkpoint
    if not os.path.exists(config.checkpoint_path):
        raise DataError("no checkpoint at %s, run train first" %
                        config.checkpoint_path)
    network, _ = load_checkpoint(config.checkpoint_path)
    return network


def _example(corpus, example_id):
    try:
        example = corpus.example(example_id)
    except KeyError:
        raise DataError("unknown example %s" % example_id)
    return example, corpus.table_for(example)


def gen(config, args, out):
    from .datasets import TableQAGenerator
    from .tables import save_corpus
    if not config.corpus:
        raise UsageError("no corpus path configured")
    corpus = TableQAGenerator(config.gen).generate()
    save_corpus(corpus, config.corpus)
    out.write('\t'.join(str(len(corpus.select(s)))
                        for s in ('train', 'dev', 'test')) + '\n')


def search(config, args, out):
    corpus = _corpus(config)
    results = _consistent(corpus, config, args.workers)
    found = sum(1 for c in results.values() if c)
    out.write('%d\t%d\n' % (len(results), found))


def stats(config, args, out):
    from .search import coverage_stats
    corpus = _corpus(config).select(args.split)
    results = _consistent(corpus, config, args.workers)
    out.write(str(coverage_stats(corpus, config.search, results)) + '\n')


def train(config, args, out):
    from .model import ParserNetwork, Vocabulary
    from .trainer import train as train_network
    corpus = _corpus(config)
    results = _consistent(corpus.select('train'), config, args.workers)
    network = ParserNetwork(Vocabulary.build(corpus),
                            Vocabulary.build_tags(corpus), config.model,
                            config.grammar.function_types)
    result = train_network(network, corpus, results, config.train,
                           config.search, config.eval)
    for metrics in result.metrics:
        out.write(str(metrics) + '\n')


def evaluate(config, args, out):
    from .evalkit import evaluate as evaluate_split
    corpus = _corpus(config).select(args.split)
    network = _network(config)
    results = _consistent(corpus, config, args.workers)
    report = evaluate_split(corpus, network, results, config.eval,
                            config.train.attention_mode, args.workers)
    out.write(str(report) + '\n')


def parse(config, args, out):
    from .evalkit import predict
    from .program import print_program
    example, table = _example(_corpus(config), args.example_id)
    prediction = predict(example, table, _network(config), config.eval,
                         config.train.attention_mode)
    if prediction.program is None:
        out.write('failure\t%s\n' % prediction.failure)
        return
    out.write(print_program(prediction.program, table) + '\n')
    out.write('\t'.join(v.display() for v in prediction.denotation.values) +
              '\n')


def align(config, args, out):
    from .grammar import abstract_grammar_for_table, strip
    from .lattice import InfeasibleSlotError, NoAlignmentError
    from .model import STRUCTURED
    example, table = _example(_corpus(config), args.example_id)
    network = _network(config)
    network.eval()
    with torch.no_grad():
        encoded = network.encode(example.question, table)
        if args.gold:
            if not example.gold_programs:
                raise DataError("%s has no gold program" % example.id)
            h, _ = strip(example.gold_programs[0],
                         config.grammar.function_types)
        else:
            grammar = abstract_grammar_for_table(table, config.eval.grammar)
            beam = network.beam_search(encoded, grammar,
                                       config.eval.max_rules, 1)
            if not beam:
                raise DataError("empty beam for %s" % example.id)
            h = beam[0][0]
        try:
            scores = network.instantiation_log_probs(
                encoded, h, config.eval.grammar, STRUCTURED)
        except (InfeasibleSlotError, NoAlignmentError) as error:
            raise DataError("%s: %s" % (example.id, error))
    E = scores.marginals.E.numpy()
    logger.info("%s: aligning %s", example.id, h)
    out.write("logZ\t%.6f\n" % scores.marginals.logZ.item())
    for k in range(E.shape[0]):
        for i, j in sorted(zip(*E[k].nonzero()), key=lambda s: -E[k][s]):
            if E[k, i, j] >= 1e-4:
                out.write("%d\t%d\t%d\t%.4f\n" % (k, i, j, E[k, i, j]))
    if args.plot:
        from .tools import draw_alignment
        draw_alignment(scores.marginals, example.question,
                       [s.kind for s in h.slots],
                       show=False).savefig(args.plot)


COMMANDS = {'gen': gen, 'search': search, 'stats': stats, 'train': train,
            'eval': evaluate, 'parse': parse, 'align': align}


def main(argv=None, out=None):
    """
    Run a command.

    Returns:
        exit code
    """
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        if args.workers < 1:
            raise UsageError("--workers must be at least 1")
        quiet = args.quiet or is_quiet()
        logging.basicConfig(level=logging.WARNING if quiet else logging.INFO,
                            stream=sys.stderr,
                            format='%(levelname)s %(name)s: %(message)s')
        config = load_config(args.config, args.seed)
        COMMANDS[args.command](config, args, out)
    except SystemExit as exit:
        return exit.code or OK
    except (UsageError, ConfigError) as error:
        sys.stderr.write('pytqa: %s\n' % error)
        return USAGE
    except (DataError, CorpusFormatError) as error:
        sys.stderr.write('pytqa: %s\n' % error)
        return DATA
    return OK
