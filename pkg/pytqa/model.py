"""
The neural parser: question and column encoders, the grammar-constrained
abstract-program decoder, the abstract-program encoder, the alignment
scorer and the slot instantiation classifiers.

All weights live in one `ParserNetwork` module. Training runs in float32;
``network.double()`` switches to float64 for gradient checks.
"""

import io
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .grammar import rule_inventory, slot_candidates
from .lattice import (AlignmentConfig, feasible_spans, forward_backward,
                      marginal_span_pool)
from .program import (OPERATORS, AND, OR, NONE, AllRows, RowFilter,
                      ColumnChoice)
from .tables import ALL_ROW, COLUMN_TYPES, column_indicator

logger = logging.getLogger(__name__)

STRUCTURED = 'structured'
STANDARD = 'standard'
ATTENTION_MODES = (STRUCTURED, STANDARD)

UNK = '<unk>'


class UnrealizableProgramError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig(object):
    """
    Layer sizes, dropout rates and decoding settings.

    Attributes:
        embedding_size: word embedding size.
        projection_size: size of the linear projection of word embeddings.
        feature_size: size of the word indicator, column type and column
            indicator embeddings.
        pos_size: POS tag embedding size, 0 disables POS features.
        rule_embedding_size: production rule embedding size.
        operator_size: comparison operator embedding size.
        encoder_hidden: hidden size of each direction of the question
            encoder.
        decoder_hidden: hidden size of the abstract program decoder.
        ap_hidden: hidden size of each direction of the abstract program
            encoder.
        mlp_hidden: hidden size of every MLP.
        encoder_dropout: dropout on encoder inputs.
        ap_dropout: dropout on abstract program encoder outputs.
        mlp_dropout: dropout on MLP hidden layers.
        attention_mode: ``structured`` (alignment marginals) or
            ``standard`` (independent dot-product attention per slot).
        beam_size: number of abstract programs kept by beam search.
        max_row_span: longest span a row slot may align to.
        max_slots: largest slot count handled by the alignment lattice.
        init_scale: weights are initialized uniformly in
            ``[-init_scale, init_scale]``.
        seed: initialization seed.
    """
    embedding_size: int = 64
    projection_size: int = 64
    feature_size: int = 16
    pos_size: int = 16
    rule_embedding_size: int = 64
    operator_size: int = 16
    encoder_hidden: int = 64
    decoder_hidden: int = 64
    ap_hidden: int = 64
    mlp_hidden: int = 128
    encoder_dropout: float = 0.2
    ap_dropout: float = 0.2
    mlp_dropout: float = 0.2
    attention_mode: str = STRUCTURED
    beam_size: int = 6
    max_row_span: int = 6
    max_slots: int = 8
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ('embedding_size', 'projection_size', 'feature_size',
                     'rule_embedding_size', 'operator_size',
                     'encoder_hidden', 'decoder_hidden', 'ap_hidden',
                     'mlp_hidden', 'beam_size'):
            if getattr(self, name) < 1:
                raise RuntimeError("%s must be at least 1" % name)
        if self.pos_size < 0:
            raise RuntimeError("pos_size must not be negative")
        for name in ('encoder_dropout', 'ap_dropout', 'mlp_dropout'):
            if not 0 <= getattr(self, name) < 1:
                raise RuntimeError("%s must be in [0, 1)" % name)
        if self.attention_mode not in ATTENTION_MODES:
            raise RuntimeError("attention_mode must be one of %s" %
                               ', '.join(ATTENTION_MODES))

    @classmethod
    def preset(cls, name, **overrides):
        """
        Full-scale sizes.

        >>> ModelConfig.preset('wtq').mlp_hidden
        436
        """
        return replace(cls(**MODEL_PRESETS[name]), **overrides)

    @property
    def alignment(self):
        return AlignmentConfig(self.max_row_span, self.max_slots)


MODEL_PRESETS = {
    'desk': dict(),
    'wtq': dict(embedding_size=300, projection_size=256, pos_size=64,
                rule_embedding_size=436, feature_size=16, operator_size=128,
                encoder_hidden=256, encoder_dropout=0.45,
                decoder_hidden=218, ap_hidden=218, ap_dropout=0.25,
                mlp_hidden=436, mlp_dropout=0.25),
    'wsq': dict(embedding_size=300, projection_size=256, pos_size=0,
                rule_embedding_size=328, feature_size=16, operator_size=128,
                encoder_hidden=256, encoder_dropout=0.35,
                decoder_hidden=164, ap_hidden=164, ap_dropout=0.25,
                mlp_hidden=328, mlp_dropout=0.2),
}


class Vocabulary(object):
    """
    A word list with a reserved unknown word at index 0.

    >>> vocabulary = Vocabulary(['silver', 'gold'])
    >>> vocabulary['gold'], vocabulary['bronze']
    (1, 0)
    """

    def __init__(self, words=()):
        self.words = [UNK] + sorted(set(words) - set([UNK]))
        self._index = dict((w, i) for i, w in enumerate(self.words))

    def __len__(self):
        return len(self.words)

    def __getitem__(self, word):
        return self._index.get(word, 0)

    def __contains__(self, word):
        return word in self._index

    @classmethod
    def build(cls, corpus, split='train'):
        """
        Words of the questions of one split plus the column names and
        string cells of every table.
        """
        words = set([ALL_ROW])
        for example in corpus.examples:
            if split is None or example.split == split:
                words.update(example.question.texts)
        for table in corpus.tables.values():
            for column in table.columns:
                words.update(column.name_tokens)
                if column.ctype == 'string':
                    for cell in column.cells:
                        words.update(cell.value.lower().split())
        return cls(words)

    @classmethod
    def build_tags(cls, corpus):
        return cls(t.pos for e in corpus.examples
                   for t in e.question.tokens if t.pos is not None)


@dataclass
class EncodedQuestion(object):
    """
    Attributes:
        l: contextual token representations, one row per token including
            the sentinel.
        columns: column representations.
        question: the question.
        table: the table.
    """
    l: torch.Tensor
    columns: torch.Tensor
    question: object
    table: object

    @property
    def n(self):
        return self.l.shape[0]


@dataclass
class SlotScores(object):
    """
    Per-slot candidate log-probabilities of one abstract program.
    """
    log_probs: list
    candidates: list
    marginals: Optional[object] = None
    spans: Optional[object] = None
    pooled: Optional[torch.Tensor] = None


class MLP(nn.Module):
    """One hidden layer with ReLU."""

    def __init__(self, n_in, n_hidden, n_out, dropout=0.):
        super(MLP, self).__init__()
        self.hidden = nn.Linear(n_in, n_hidden)
        self.dropout = nn.Dropout(dropout)
        self.output = nn.Linear(n_hidden, n_out)

    def forward(self, x):
        return self.output(self.dropout(F.relu(self.hidden(x))))


class ParserNetwork(nn.Module):
    """
    Every trainable weight of the parser.

    Args:
        vocabulary (Vocabulary): question and column words.
        tags (Vocabulary): POS tags.
        config (ModelConfig): sizes and settings.
        function_types (bool): whether abstract programs use the
            function-type rule inventory.

    >>> from pytqa.tests.test import get_medal_example
    >>> example, table = get_medal_example()
    >>> network = ParserNetwork(Vocabulary(example.question.texts),
    ...                         Vocabulary(), ModelConfig(seed=1))
    >>> network.eval().encode(example.question, table).l.shape
    torch.Size([8, 128])
    """

    def __init__(self, vocabulary, tags, config=None, function_types=False):
        super(ParserNetwork, self).__init__()
        config = config or ModelConfig()
        self.config = config
        self.vocabulary = vocabulary
        self.tags = tags
        self.function_types = function_types
        self.rules = rule_inventory(function_types)
        self._rule_ids = dict((r, i) for i, r in enumerate(self.rules))
        token_size = 2 * config.encoder_hidden
        column_size = config.projection_size + 2 * config.feature_size
        condition_size = column_size + config.operator_size + \
            config.projection_size

        self.word_embedding = nn.Embedding(len(vocabulary),
                                           config.embedding_size)
        self.input_projection = nn.Linear(config.embedding_size,
                                          config.projection_size)
        self.word_indicator = nn.Embedding(2, config.feature_size)
        input_size = config.projection_size + config.feature_size
        if config.pos_size:
            self.pos_embedding = nn.Embedding(len(tags), config.pos_size)
            input_size += config.pos_size
        self.encoder_dropout = nn.Dropout(config.encoder_dropout)
        self.encoder = nn.LSTM(input_size, config.encoder_hidden,
                               batch_first=True, bidirectional=True)

        self.column_type = nn.Embedding(len(COLUMN_TYPES),
                                        config.feature_size)
        self.column_indicator = nn.Embedding(2, config.feature_size)

        self.rule_embedding = nn.Embedding(len(self.rules) + 1,
                                           config.rule_embedding_size)
        self.decoder_init = nn.Linear(token_size, config.decoder_hidden)
        self.decoder_cell = nn.LSTMCell(config.rule_embedding_size,
                                        config.decoder_hidden)
        self.decoder_query = nn.Linear(config.decoder_hidden, token_size,
                                       bias=False)
        self.mlp_rule = MLP(config.decoder_hidden + token_size,
                            config.mlp_hidden, len(self.rules),
                            config.mlp_dropout)

        self.ap_encoder = nn.LSTM(config.rule_embedding_size,
                                  config.ap_hidden, batch_first=True,
                                  bidirectional=True)
        self.ap_dropout = nn.Dropout(config.ap_dropout)
        self.mlp_align = MLP(2 * config.ap_hidden + token_size,
                             config.mlp_hidden, 1, config.mlp_dropout)
        self.all_row = nn.Parameter(torch.empty(token_size))
        self.slot_query = nn.Linear(2 * config.ap_hidden, token_size,
                                    bias=False)

        self.operator_embedding = nn.Embedding(len(OPERATORS),
                                               config.operator_size)
        self.connective_embedding = nn.Embedding(2, condition_size)
        self.all_rows_candidate = nn.Parameter(torch.empty(condition_size))
        self.mlp_row = MLP(token_size + condition_size, config.mlp_hidden, 1,
                           config.mlp_dropout)
        self.mlp_col = MLP(token_size + column_size, config.mlp_hidden, 1,
                           config.mlp_dropout)
        self.reset_parameters()

    def reset_parameters(self):
        """
        Uniform weights, zero biases, LSTM forget-gate input biases at 1.
        """
        generator = torch.Generator().manual_seed(self.config.seed)
        scale = self.config.init_scale
        with torch.no_grad():
            for name, parameter in self.named_parameters():
                if name.split('.')[-1].startswith('bias'):
                    parameter.zero_()
                    if name.split('.')[-1].startswith('bias_ih'):
                        hidden = parameter.shape[0] // 4
                        parameter[hidden:2 * hidden] = 1.
                else:
                    parameter.uniform_(-scale, scale, generator=generator)

    @property
    def start_id(self):
        return len(self.rules)

    def rule_id(self, rule):
        return self._rule_ids[rule]

    def _word_ids(self, words):
        return torch.tensor([self.vocabulary[w] for w in words],
                            dtype=torch.long)

    def embed_words(self, words):
        """Projected embeddings of `words`, unknown words share one."""
        return self.input_projection(self.word_embedding(
            self._word_ids(words)))

    def encode_question(self, question, table):
        """
        Contextual token representations from a bidirectional LSTM over
        projected word embeddings, word indicator embeddings and POS
        embeddings.

        Returns:
            tensor of shape ``(n, 2 * encoder_hidden)``
        """
        parts = [self.embed_words(question.texts),
                 self.word_indicator(torch.tensor(
                     [int(t.in_table) for t in question.tokens]))]
        if self.config.pos_size:
            parts.append(self.pos_embedding(torch.tensor(
                [self.tags[t.pos] if t.pos else 0
                 for t in question.tokens])))
        inputs = self.encoder_dropout(torch.cat(parts, -1))
        outputs, _ = self.encoder(inputs[None])
        return outputs[0]

    def encode_columns(self, table, question):
        """
        Per column: the mean projected embedding of its name words, its
        type embedding and its column indicator embedding.
        """
        names = torch.stack([self.embed_words(c.name_tokens).mean(0)
                             for c in table.columns])
        types = self.column_type(torch.tensor(
            [COLUMN_TYPES.index(c.ctype) for c in table.columns]))
        flags = self.column_indicator(torch.tensor(
            [int(f) for f in column_indicator(table, question)]))
        return torch.cat([names, types, flags], -1)

    def encode(self, question, table):
        return EncodedQuestion(self.encode_question(question, table),
                               self.encode_columns(table, question),
                               question, table)

    def _initial_state(self, encoded):
        g = torch.tanh(self.decoder_init(encoded.l.mean(0)))
        return g[None], torch.zeros_like(g)[None]

    def _step(self, encoded, previous, state):
        g, c = self.decoder_cell(
            self.rule_embedding(torch.tensor([previous])), state)
        weights = torch.softmax(encoded.l @ self.decoder_query(g[0]), 0)
        b = weights @ encoded.l
        return self.mlp_rule(torch.cat([g[0], b])), (g, c)

    def _masked_log_softmax(self, scores, valid):
        mask = torch.zeros(len(self.rules), dtype=torch.bool)
        mask[[self.rule_id(r) for r in valid]] = True
        return torch.log_softmax(scores.masked_fill(~mask, float('-inf')),
                                 0), mask

    def decode_steps(self, encoded, grammar, rules):
        """
        Per-step log-probabilities of a rule sequence, each normalized over
        the valid next rules.

        Raises:
            UnrealizableProgramError: when a rule is not valid at its step.
        """
        state = self._initial_state(encoded)
        previous = self.start_id
        steps = []
        for t, rule in enumerate(rules):
            valid = grammar.valid_next_rules(rules[:t])
            if rule not in valid:
                raise UnrealizableProgramError(
                    "rule %s is not valid at step %d" % (rule, t))
            scores, state = self._step(encoded, previous, state)
            log_probs, _ = self._masked_log_softmax(scores, valid)
            steps.append(log_probs[self.rule_id(rule)])
            previous = self.rule_id(rule)
        return steps

    def program_log_prob(self, encoded, grammar, program):
        """log p(h | x, t) of an abstract program."""
        return torch.stack(self.decode_steps(encoded, grammar,
                                             program.rules)).sum()

    def beam_search(self, encoded, grammar, max_rules, k=None):
        """
        The `k` most probable complete abstract programs within the size
        cap.

        Returns:
            list of ``(AbstractProgram, log-probability)``, best first
        """
        from .grammar import AbstractProgram

        k = k or self.config.beam_size
        beams = [(0., (), self._initial_state(encoded), self.start_id, 0)]
        complete = []
        with torch.no_grad():
            for _ in range(2 * max_rules + 1):
                expansions = []
                for score, rules, state, previous, size in beams:
                    stack = grammar.pending(rules)
                    scores, new_state = self._step(encoded, previous, state)
                    valid = grammar.valid_next_rules(rules)
                    log_probs, _ = self._masked_log_softmax(scores, valid)
                    for rule in valid:
                        rest = stack[:-1] + list(reversed(rule.children))
                        total = size + rule.cost
                        if total + grammar.min_cost(rest) > max_rules:
                            continue
                        expansions.append((
                            score + log_probs[self.rule_id(rule)].item(),
                            rules + (rule,), new_state, self.rule_id(rule),
                            total, not rest))
                expansions.sort(key=lambda e: (-e[0], [self.rule_id(r)
                                                       for r in e[1]]))
                beams = []
                for score, rules, state, previous, size, done in \
                        expansions[:k]:
                    if done:
                        complete.append((score, rules))
                    else:
                        beams.append((score, rules, state, previous, size))
                if not beams:
                    break
        complete.sort(key=lambda c: (-c[0], [self.rule_id(r) for r in c[1]]))
        return [(AbstractProgram.from_rules(rules), score)
                for score, rules in complete[:k]]

    def encode_abstract_program(self, program):
        """
        Slot representations r(k): bidirectional LSTM states at the slot
        rule positions.
        """
        ids = torch.tensor([self.rule_id(r) for r in program.rules])
        outputs, _ = self.ap_encoder(self.rule_embedding(ids)[None])
        outputs = self.ap_dropout(outputs[0])
        positions = [slot.position for slot in program.slots]
        return outputs[positions]

    def span_representations(self, encoded):
        """
        Mean token representation of every span ``(i, j)``, shape
        ``(n, n, d)``; the sentinel singleton is the learnable ALL_ROW
        vector and spans with ``j < i`` are zero.
        """
        l = encoded.l
        n = l.shape[0]
        sums = torch.cat([l.new_zeros(1, l.shape[1]), torch.cumsum(l, 0)])
        i = torch.arange(n)[:, None]
        j = torch.arange(n)[None, :]
        lengths = (j - i + 1).clamp(min=1).to(l.dtype)
        reps = (sums[1:][None, :, :] - sums[:-1][:, None, :]) / \
            lengths[..., None]
        reps = reps * (j >= i).to(l.dtype)[..., None]
        sentinel = torch.zeros(n, n, 1, dtype=torch.bool)
        sentinel[n - 1, n - 1] = True
        return torch.where(sentinel, self.all_row.expand_as(reps), reps)

    def score_alignments(self, slot_reps, span_reps, spans):
        """
        ``M[k, i, j] = MLP_2([r(k); span(i, j)])`` on feasible entries,
        zero elsewhere.
        """
        m, n = slot_reps.shape[0], span_reps.shape[0]
        pairs = torch.cat([
            slot_reps[:, None, None, :].expand(m, n, n, -1),
            span_reps[None].expand(m, n, n, -1)], -1)
        scores = self.mlp_align(pairs)[..., 0]
        feasible = torch.as_tensor(spans.mask())
        return torch.where(feasible, scores, torch.zeros_like(scores))

    def attend(self, slot_reps, encoded):
        """Independent dot-product attention of every slot over tokens."""
        weights = torch.softmax(self.slot_query(slot_reps) @ encoded.l.T,
                                -1)
        return weights @ encoded.l

    def candidate_reps(self, candidates, encoded):
        """
        Representations of slot candidates: a column is its column
        representation; a condition is its column, operator and value
        representations; several conditions are averaged and a connective
        embedding is added; ``all_rows`` is a learned vector.
        """
        reps = []
        for candidate in candidates:
            if isinstance(candidate, ColumnChoice):
                reps.append(encoded.columns[candidate.column])
            elif isinstance(candidate, AllRows):
                reps.append(self.all_rows_candidate)
            elif isinstance(candidate, RowFilter):
                conditions = torch.stack([
                    self._condition_rep(c, encoded)
                    for c in candidate.conditions]).mean(0)
                if candidate.connective != NONE:
                    conditions = conditions + self.connective_embedding(
                        torch.tensor((AND, OR).index(candidate.connective)))
                reps.append(conditions)
            else:
                raise TypeError("not a slot candidate: %r" % (candidate,))
        return torch.stack(reps)

    def _condition_rep(self, condition, encoded):
        value = self.embed_words(condition.value.display().lower().split()
                                 or [UNK]).mean(0)
        operator = self.operator_embedding(
            torch.tensor(OPERATORS.index(condition.op)))
        return torch.cat([encoded.columns[condition.column], operator,
                          value])

    def slot_distribution(self, pooled, candidates, encoded, kind):
        """
        Log-probabilities over candidates, ``MLP([s; c])`` followed by a
        softmax; row and column slots have separate MLPs.
        """
        reps = self.candidate_reps(candidates, encoded)
        inputs = torch.cat([pooled[None].expand(len(candidates), -1), reps],
                           -1)
        mlp = self.mlp_row if kind == 'row' else self.mlp_col
        return torch.log_softmax(mlp(inputs)[:, 0], 0)

    def instantiation_log_probs(self, encoded, program, grammar_config=None,
                                mode=None, candidates=None):
        """
        Slot candidate distributions of an abstract program.

        Args:
            encoded (EncodedQuestion): the encoded question.
            program (AbstractProgram): the abstract program.
            grammar_config (GrammarConfig, optional): candidate settings.
            mode (str, optional): attention mode, defaults to the
                configured one.
            candidates (list, optional): candidate lists per slot.

        Returns:
            `SlotScores`

        Raises:
            InfeasibleSlotError, NoAlignmentError: from the alignment
                lattice in structured mode.
        """
        mode = mode or self.config.attention_mode
        if candidates is None:
            candidates = [slot_candidates(slot, encoded.table,
                                          encoded.question, grammar_config)
                          for slot in program.slots]
        slot_reps = self.encode_abstract_program(program)
        marginals = spans = None
        if mode == STRUCTURED:
            spans = feasible_spans(program.slots, encoded.question,
                                   self.config.alignment)
            span_reps = self.span_representations(encoded)
            M = self.score_alignments(slot_reps, span_reps, spans)
            marginals = forward_backward(M, spans, self.config.max_slots)
            pooled = marginal_span_pool(marginals.E, span_reps)
        else:
            pooled = self.attend(slot_reps, encoded)
        log_probs = [self.slot_distribution(pooled[k], candidates[k],
                                            encoded, slot.kind)
                     for k, slot in enumerate(program.slots)]
        return SlotScores(log_probs, candidates, marginals, spans, pooled)

    def gradient(self, loss):
        """
        Reverse-mode gradients of a scalar loss.

        Returns:
            ``(gradients, detached)``: an ordered dict from parameter name
            to gradient, and the names of parameters the loss does not
            depend on (their gradients are zero)
        """
        named = [(n, p) for n, p in self.named_parameters()
                 if p.requires_grad]
        grads = torch.autograd.grad(loss, [p for _, p in named],
                                    retain_graph=True, allow_unused=True)
        gradients = OrderedDict()
        detached = set()
        for (name, parameter), grad in zip(named, grads):
            if grad is None:
                detached.add(name)
                grad = torch.zeros_like(parameter)
            gradients[name] = grad
        return gradients, detached


def save_checkpoint(network, path, **meta):
    """
    Write parameters as little-endian float32 arrays with a JSON header
    holding the configuration and vocabularies.
    """
    arrays = OrderedDict(
        (name, tensor.detach().cpu().numpy().astype('<f4'))
        for name, tensor in network.state_dict().items())
    header = dict(meta, config=asdict(network.config),
                  vocabulary=network.vocabulary.words[1:],
                  tags=network.tags.words[1:],
                  function_types=network.function_types)
    arrays['__meta__'] = np.array(json.dumps(header, sort_keys=True))
    with io.open(path, 'wb') as stream:
        np.savez(stream, **arrays)


def load_checkpoint(path):
    """
    Returns:
        ``(ParserNetwork, meta)``
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data['__meta__']))
        network = ParserNetwork(Vocabulary(meta.pop('vocabulary')),
                                Vocabulary(meta.pop('tags')),
                                ModelConfig(**meta.pop('config')),
                                meta.pop('function_types'))
        state = OrderedDict((name, torch.from_numpy(
            data[name].astype(np.float32)))
            for name in network.state_dict())
    network.load_state_dict(state)
    return network, meta


def load_embeddings(network, path):
    """
    Overwrite word embeddings from ``word<space>floats`` lines.

    Returns:
        number of vocabulary words loaded
    """
    loaded = 0
    weight = network.word_embedding.weight
    with io.open(path, encoding='utf-8') as stream, torch.no_grad():
        for number, line in enumerate(stream, 1):
            fields = line.rstrip().split(' ')
            if len(fields) < 2 or fields[0] not in network.vocabulary:
                continue
            if len(fields) - 1 != weight.shape[1]:
                raise RuntimeError(
                    "line %d: %d values, embedding size is %d" %
                    (number, len(fields) - 1, weight.shape[1]))
            weight[network.vocabulary[fields[0]]] = torch.tensor(
                [float(x) for x in fields[1:]], dtype=weight.dtype)
            loaded += 1
    logger.info("loaded %d embeddings from %s", loaded, path)
    return loaded
