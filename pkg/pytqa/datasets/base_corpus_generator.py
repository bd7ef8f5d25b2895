from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

TEMPLATES = ('select', 'argmax', 'argmin', 'count', 'previous', 'next',
             'sum', 'average', 'total')


@dataclass(frozen=True)
class SynConfig(object):
    """
    Settings of the synthetic corpus generator.

    Attributes:
        seed: root seed; every table and example draws from its own
            child stream.
        n_tables: number of tables.
        rows_per_table: inclusive ``(min, max)`` row counts.
        n_examples: number of examples.
        template_mix: weight per template id, uniform when None.
        spurious_rate: fraction of train examples made spurious-rich.
        two_condition_rate: fraction of examples asking a two-condition
            question.
        ratio: train, dev and test proportions.
        max_attempts: table perturbations tried per spurious example.
        spurious_target: consistent programs a spurious example needs.
        search_cap: size cap of the search counting consistent programs.
    """
    seed: int = 0
    n_tables: int = 60
    rows_per_table: Tuple[int, int] = (4, 8)
    n_examples: int = 900
    template_mix: Optional[dict] = None
    spurious_rate: float = 0.
    two_condition_rate: float = 0.1
    ratio: Tuple[int, int, int] = (6, 1, 2)
    max_attempts: int = 50
    spurious_target: int = 3
    search_cap: int = 6

    def __post_init__(self):
        low, high = self.rows_per_table
        if not 2 <= low <= high <= 30:
            raise RuntimeError("rows_per_table must satisfy "
                               "2 <= min <= max <= 30")
        if self.n_tables < 1:
            raise RuntimeError("n_tables must be at least 1")
        if not 0 <= self.spurious_rate <= 1:
            raise RuntimeError("spurious_rate must be in [0, 1]")
        if not 0 <= self.two_condition_rate <= 1:
            raise RuntimeError("two_condition_rate must be in [0, 1]")
        weights = self.weights()
        if np.any(weights < 0) or weights.sum() <= 0:
            raise RuntimeError("template weights must be non-negative "
                               "with a positive sum")
        if len(self.ratio) != 3 or min(self.ratio) < 0 or \
                sum(self.ratio) <= 0:
            raise RuntimeError("ratio must be three non-negative numbers "
                               "with a positive sum")

    def weights(self):
        mix = self.template_mix or dict((t, 1.) for t in TEMPLATES)
        unknown = set(mix) - set(TEMPLATES)
        if unknown:
            raise RuntimeError("unknown templates: %s" %
                               ', '.join(sorted(unknown)))
        return np.array([float(mix.get(t, 0.)) for t in TEMPLATES])


class _BaseCorpusGenerator(object):
    def __init__(self, config=None):
        """
        Instantiate a corpus generator.

        Args:
          config (SynConfig): generator settings.

        Child seeds are spawned from the root seed in a fixed order:
        tables, examples, spuriousness.
        """
        self.config = config or SynConfig()
        root = np.random.SeedSequence(self.config.seed)
        tables, examples, spurious = root.spawn(3)
        self._table_seeds = tables.spawn(self.config.n_tables)
        self._example_seeds = examples.spawn(self.config.n_examples)
        self._spurious_seed = spurious

    def table_rng(self, index):
        return np.random.Generator(np.random.PCG64(self._table_seeds[index]))

    def example_rng(self, index):
        return np.random.Generator(
            np.random.PCG64(self._example_seeds[index]))

    def spurious_rng(self):
        return np.random.Generator(np.random.PCG64(self._spurious_seed))

    def split_sizes(self):
        """Examples per split, the remainder going to train."""
        ratio = np.array(self.config.ratio, dtype=float)
        sizes = np.floor(ratio / ratio.sum() *
                         self.config.n_examples).astype(int)
        sizes[0] += self.config.n_examples - sizes.sum()
        return [int(s) for s in sizes]

    def generate(self):
        raise NotImplementedError
