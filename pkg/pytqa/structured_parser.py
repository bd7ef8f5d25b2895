from sklearn.base import BaseEstimator

from .evalkit import EvalConfig, accuracy, predict_corpus
from .model import ModelConfig, ParserNetwork, Vocabulary
from .search import SearchConfig, search_corpus
from .trainer import TrainConfig, train


class StructuredParser(BaseEstimator):
    """
    The `StructuredParser` answers questions over tables with programs. An
    abstract program is decoded first and its row and column slots are
    then filled in, attending to question spans through alignment
    marginals (``attention_mode='structured'``) or through ordinary
    softmax attention (``attention_mode='standard'``).

    Training needs only question, table and answer: the consistent
    programs of every training example are searched for first, or taken
    from `consistent_sets` when given.

    >>> from pytqa.datasets import make_table_qa
    >>> corpus = make_table_qa(n_examples=6, n_tables=2, seed=2,
    ...                        ratio=(1, 0, 0))
    >>> parser = StructuredParser(
    ...     model_config=ModelConfig(embedding_size=4, projection_size=4,
    ...                              encoder_hidden=4, decoder_hidden=4,
    ...                              ap_hidden=4, mlp_hidden=4),
    ...     train_config=TrainConfig(epochs=1))
    >>> parser.fit(corpus) is parser
    True
    >>> len(parser.predict(corpus)) == len(corpus)
    True

    """

    def __init__(self, model_config=None, train_config=None,
                 search_config=None, eval_config=None,
                 attention_mode=None, cache=None, n_jobs=1):
        """
        Instantiate a StructuredParser.

        Args:
          model_config: `ModelConfig` of the network.
          train_config: `TrainConfig` of the optimizer.
          search_config: `SearchConfig` of the consistent program search.
          eval_config: `EvalConfig` of decoding.
          attention_mode: ``structured`` or ``standard``, overriding
            the model configuration.
          cache: `SearchCache` read and written by the search.
          n_jobs: parallel jobs of search and prediction.
        """
        self.model_config = model_config
        self.train_config = train_config
        self.search_config = search_config
        self.eval_config = eval_config
        self.attention_mode = attention_mode
        self.cache = cache
        self.n_jobs = n_jobs

    def _search_config(self):
        return self.search_config or SearchConfig()

    def _eval_config(self):
        config = self._search_config()
        return self.eval_config or EvalConfig(max_rules=config.max_rules,
                                              grammar=config.grammar)

    def fit(self, corpus, consistent_sets=None):
        """
        Search the consistent programs of the training examples and train
        the network on them, early stopping on the dev split.

        Args:
          corpus: `Corpus` with train (and optionally dev) examples.
          consistent_sets: dict from example id to `ConsistentSet`.

        Returns:
          self
        """
        search_config = self._search_config()
        if consistent_sets is None:
            consistent_sets = search_corpus(corpus.select('train'),
                                            search_config, self.cache,
                                            self.n_jobs)
        model_config = self.model_config or ModelConfig()
        network = ParserNetwork(Vocabulary.build(corpus),
                                Vocabulary.build_tags(corpus), model_config,
                                search_config.grammar.function_types)
        train_config = self.train_config or TrainConfig(
            seed=model_config.seed)
        if self.attention_mode is not None and \
                train_config.attention_mode is None:
            train_config = _with_mode(train_config, self.attention_mode)
        result = train(network, corpus, consistent_sets, train_config,
                       search_config, self._eval_config())
        self.network_ = result.network
        self.metrics_ = result.metrics
        self.consistent_sets_ = consistent_sets
        self.mode_ = train_config.attention_mode
        return self

    def predict(self, corpus):
        """
        Predict the program and denotation of every example.

        Args:
          corpus: `Corpus` of questions.

        Returns:
          list of `Prediction`, in corpus order
        """
        if not hasattr(self, 'network_'):
            raise AttributeError("fit() method must be run before predict().")
        return predict_corpus(corpus, self.network_, self._eval_config(),
                              self.mode_, self.n_jobs)

    def score(self, corpus):
        """
        Denotation accuracy on a corpus.

        Args:
          corpus: `Corpus` of questions with answers.

        Returns:
          fraction of examples answered correctly
        """
        return accuracy(corpus, self.network_, self._eval_config(),
                        self.mode_,
                        predictions=self.predict(corpus))


def _with_mode(config, mode):
    from dataclasses import replace
    return replace(config, attention_mode=mode)
