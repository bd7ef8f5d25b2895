"""
Exhaustive two-stage search for programs consistent with a denotation,
the search cache and coverage statistics.
"""

import hashlib
import io
import itertools
import logging
import os
import struct
import time
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Optional

from joblib import Parallel, delayed

from .executor import execute, filter_rows
from .grammar import (GrammarConfig, abstract_grammar_for_table,
                      enumerate_abstract_programs, slot_candidates,
                      instantiate, strip)
from .program import parse_program, print_program, size, ProgramSyntaxError
from .tables import Denotation, denotation_equal

logger = logging.getLogger(__name__)

RULE_CAPS = {'wtq-like': 9, 'wsq-like': 6, 'synthetic': 6}


class CacheRecordError(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchConfig(object):
    """
    Attributes:
        max_rules: size cap of abstract programs.
        grammar: instantiation grammar settings.
        timeout_ms: per-example time budget.
        cache_path: search cache file.
    """
    max_rules: int = 6
    grammar: GrammarConfig = field(default_factory=GrammarConfig)
    timeout_ms: int = 30000
    cache_path: Optional[str] = None

    def __post_init__(self):
        if self.max_rules < 3:
            raise RuntimeError("max_rules must be at least 3")
        if self.timeout_ms <= 0:
            raise RuntimeError("timeout_ms must be positive")

    @classmethod
    def preset(cls, name, **overrides):
        """
        >>> SearchConfig.preset('wtq-like').max_rules
        9
        """
        return replace(cls(max_rules=RULE_CAPS[name],
                           grammar=GrammarConfig.preset(name)), **overrides)

    def digest(self):
        """Key of the settings that change search output."""
        text = repr((self.max_rules, self.grammar))
        return hashlib.sha1(text.encode('utf-8')).hexdigest()


@dataclass
class ConsistentSet(object):
    """
    Consistent programs of one example grouped by abstract parent.

    Attributes:
        example_id: the example.
        entries: list of ``(AbstractProgram, [assignment, ...])``.
        complete: False when the search timed out.
    """
    example_id: str
    entries: list = field(default_factory=list)
    complete: bool = True

    @property
    def total_count(self):
        return sum(len(assignments) for _, assignments in self.entries)

    @property
    def parents(self):
        return [h for h, _ in self.entries]

    def __len__(self):
        return self.total_count

    def __bool__(self):
        return self.total_count > 0

    def programs(self):
        return [instantiate(h, a) for h, assignments in self.entries
                for a in assignments]

    def texts(self, table):
        return [print_program(z, table) for z in self.programs()]

    def truncate(self, n):
        """
        Keep the `n` shortest programs, shortest by rule and condition
        count, ties in search order.
        """
        if self.total_count <= n:
            return self
        flat = [(size(instantiate(h, a)), index, h, a)
                for index, (h, a) in enumerate(
                    (h, a) for h, assignments in self.entries
                    for a in assignments)]
        keep = sorted(sorted(flat)[:n], key=lambda item: item[1])
        return ConsistentSet(self.example_id, _group(
            (h, a) for _, _, h, a in keep), self.complete)


def _group(pairs):
    grouped = OrderedDict()
    for h, assignment in pairs:
        grouped.setdefault(h, []).append(assignment)
    return list(grouped.items())


def _consistent(program, table, denotation):
    result = execute(program, table)
    return isinstance(result, Denotation) and \
        denotation_equal(result, denotation)


def find_consistent(example, table, config=None, clock=time.monotonic):
    """
    All programs within the size cap that execute to the example's
    denotation.

    Row candidates that select the same rows are executed once. Output
    order is abstract programs in enumeration order, then assignments in
    candidate order.

    Args:
        example (Example): the example.
        table (Table): its table.
        config (SearchConfig, optional): search settings.
        clock (callable, optional): monotonic clock in seconds.

    Returns:
        `ConsistentSet`, flagged incomplete on timeout

    >>> from pytqa.tests.test import get_medal_example
    >>> example, table = get_medal_example()
    >>> texts = find_consistent(example, table).texts(table)
    >>> 'select(previous(argmax(all_rows, col:silver)), col:silver)' in texts
    True
    """
    config = config or SearchConfig()
    deadline = clock() + config.timeout_ms / 1000.
    grammar = abstract_grammar_for_table(table, config.grammar)
    seen = set()
    pairs = []
    complete = True
    row_sets = {}
    for h in enumerate_abstract_programs(grammar, config.max_rules):
        classes = [_candidate_classes(slot, table, example.question,
                                      config.grammar, row_sets)
                   for slot in h.slots]
        found = []
        for choice in itertools.product(*[range(len(c)) for c in classes]):
            if clock() > deadline:
                complete = False
                break
            representative = [classes[k][c][0][1]
                              for k, c in enumerate(choice)]
            if not _consistent(instantiate(h, representative), table,
                               example.denotation):
                continue
            members = [classes[k][c] for k, c in enumerate(choice)]
            found.extend(itertools.product(*members))
        for combination in sorted(found, key=lambda c: [i for i, _ in c]):
            assignment = tuple(candidate for _, candidate in combination)
            text = print_program(instantiate(h, assignment), table)
            if text not in seen:
                seen.add(text)
                pairs.append((h, assignment))
        if not complete:
            logger.warning("search for %s timed out after %d ms",
                           example.id, config.timeout_ms)
            break
    return ConsistentSet(example.id, _group(pairs), complete)


def _candidate_classes(slot, table, question, grammar_config, row_sets):
    """`row_sets` maps row candidates to their filtered rows."""
    candidates = list(enumerate(slot_candidates(slot, table, question,
                                                grammar_config)))
    if slot.kind != 'row':
        return [[candidate] for candidate in candidates]
    classes = OrderedDict()
    for candidate in candidates:
        key = candidate[1]
        if key not in row_sets:
            row_sets[key] = tuple(filter_rows(table, key))
        rows = row_sets[key]
        classes.setdefault(rows, []).append(candidate)
    return list(classes.values())


def find_consistent_naive(example, table, config=None):
    """
    Single-stage reference enumeration: every abstract program, every total
    assignment, one execution each.
    """
    config = config or SearchConfig()
    grammar = abstract_grammar_for_table(table, config.grammar)
    seen = set()
    pairs = []
    for h in enumerate_abstract_programs(grammar, config.max_rules):
        candidates = [slot_candidates(slot, table, example.question,
                                      config.grammar) for slot in h.slots]
        for assignment in itertools.product(*candidates):
            program = instantiate(h, assignment)
            if not _consistent(program, table, example.denotation):
                continue
            text = print_program(program, table)
            if text not in seen:
                seen.add(text)
                pairs.append((h, tuple(assignment)))
    return ConsistentSet(example.id, _group(pairs), True)


_HEADER = struct.Struct('<20sBI')
_LENGTH = struct.Struct('<I')


class SearchCache(object):
    """
    Append-only file of search results keyed by example id and search
    settings. A record is the key digest, a completeness flag, a program
    count, the length-prefixed UTF-8 program texts and a CRC-32 of all
    of these. The last record of a key wins.

    One process writes; readers rescan when the file grows.

    Args:
        path (str): cache file path.
        config (SearchConfig): the settings results were produced with.
    """

    def __init__(self, path, config):
        self.path = path
        self.config = config
        self._index = {}
        self._scanned = 0

    def _key(self, example_id):
        text = '%s\t%s' % (example_id, self.config.digest())
        return hashlib.sha1(text.encode('utf-8')).digest()

    def _scan(self):
        if not os.path.exists(self.path):
            return
        end = os.path.getsize(self.path)
        if end == self._scanned:
            return
        with io.open(self.path, 'rb') as stream:
            stream.seek(self._scanned)
            while stream.tell() < end:
                start = stream.tell()
                try:
                    key, record = _read_record(stream)
                except CacheRecordError as error:
                    logger.warning("search cache %s: %s at byte %d",
                                   self.path, error, start)
                    break
                self._index[key] = record
                self._scanned = stream.tell()

    def __contains__(self, example_id):
        self._scan()
        record = self._index.get(self._key(example_id))
        return record is not None and not isinstance(record,
                                                     CacheRecordError)

    def get(self, example_id, table):
        """
        The cached `ConsistentSet` of an example, or None on a miss.
        Corrupt records count as misses.
        """
        self._scan()
        record = self._index.get(self._key(example_id))
        if record is None:
            return None
        if isinstance(record, CacheRecordError):
            logger.warning("corrupt search cache record for %s: %s",
                           example_id, record)
            return None
        complete, texts = record
        try:
            pairs = [strip(parse_program(text, table),
                           self.config.grammar.function_types)
                     for text in texts]
        except (ProgramSyntaxError, RuntimeError) as error:
            logger.warning("unreadable search cache record for %s: %s",
                           example_id, error)
            return None
        return ConsistentSet(example_id, _group(pairs), complete)

    def put(self, consistent, table):
        """
        Append the result of one example. An unreadable tail left by an
        interrupted write is cut off first.
        """
        self._scan()
        if os.path.exists(self.path) and \
                os.path.getsize(self.path) > self._scanned:
            logger.warning("search cache %s: dropping unreadable bytes "
                           "after byte %d", self.path, self._scanned)
            with io.open(self.path, 'r+b') as stream:
                stream.truncate(self._scanned)
        texts = consistent.texts(table)
        payload = _HEADER.pack(self._key(consistent.example_id),
                               int(consistent.complete), len(texts))
        for text in texts:
            data = text.encode('utf-8')
            payload += _LENGTH.pack(len(data)) + data
        payload += _LENGTH.pack(zlib.crc32(payload) & 0xffffffff)
        directory = os.path.dirname(self.path)
        if directory and not os.path.isdir(directory):
            os.makedirs(directory)
        with io.open(self.path, 'ab') as stream:
            stream.write(payload)


def _read_exactly(stream, n):
    data = stream.read(n)
    if len(data) != n:
        raise CacheRecordError("truncated record")
    return data


def _read_record(stream):
    header = _read_exactly(stream, _HEADER.size)
    key, complete, count = _HEADER.unpack(header)
    payload = header
    texts = []
    for _ in range(count):
        length = _read_exactly(stream, _LENGTH.size)
        data = _read_exactly(stream, _LENGTH.unpack(length)[0])
        payload += length + data
        texts.append(data)
    crc, = _LENGTH.unpack(_read_exactly(stream, _LENGTH.size))
    if crc != zlib.crc32(payload) & 0xffffffff:
        return key, CacheRecordError("checksum mismatch")
    try:
        return key, (bool(complete), [t.decode('utf-8') for t in texts])
    except UnicodeDecodeError:
        return key, CacheRecordError("invalid UTF-8")


def search_corpus(corpus, config=None, cache=None, n_jobs=1):
    """
    Search every example of a corpus; cached examples are not searched
    again.

    Args:
        corpus (Corpus): the corpus.
        config (SearchConfig, optional): search settings.
        cache (SearchCache, optional): read before and written after
            searching, by this process only.
        n_jobs (int, optional): number of parallel jobs.

    Returns:
        dict from example id to `ConsistentSet`
    """
    config = config or SearchConfig()
    results = {}
    todo = []
    for example in corpus.examples:
        table = corpus.table_for(example)
        cached = cache.get(example.id, table) if cache is not None else None
        if cached is not None:
            results[example.id] = cached
        else:
            todo.append(example)
    logger.info("searching %d examples (%d cached)", len(todo),
                len(results))
    found = Parallel(n_jobs=n_jobs)(
        delayed(find_consistent)(example, corpus.table_for(example), config)
        for example in todo)
    for example, consistent in zip(todo, found):
        if cache is not None:
            cache.put(consistent, corpus.table_for(example))
        results[example.id] = consistent
    return results


@dataclass(frozen=True)
class CoverageStats(object):
    coverage: float
    mean_count: float
    distinct_parents: int

    def __str__(self):
        return '%.4f\t%.2f\t%d' % (self.coverage, self.mean_count,
                                   self.distinct_parents)


def coverage_stats(corpus, config=None, results=None, cache=None,
                   n_jobs=1):
    """
    Coverage fraction, mean consistent count and the number of distinct
    abstract programs with a consistent instantiation, over examples whose
    search completed.

    Args:
        corpus (Corpus): the corpus.
        config (SearchConfig, optional): search settings.
        results (dict, optional): search output; searched when missing.
        cache (SearchCache, optional): passed to `search_corpus`.
        n_jobs (int, optional): number of parallel jobs.

    Returns:
        `CoverageStats`
    """
    if results is None:
        results = search_corpus(corpus, config, cache, n_jobs)
    done = [results[e.id] for e in corpus.examples
            if e.id in results and results[e.id].complete]
    if not done:
        return CoverageStats(0., 0., 0)
    parents = set()
    for consistent in done:
        parents.update(consistent.parents)
    covered = sum(1 for c in done if c)
    return CoverageStats(covered / float(len(done)),
                         sum(c.total_count for c in done) /
                         float(len(done)),
                         len(parents))
