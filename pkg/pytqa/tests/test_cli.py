import io
import os

import numpy as np
import pytest

CONFIG = """corpus = {corpus}
cache_dir = {cache}

[gen]
n_examples = 9
n_tables = 2
rows_per_table = 3, 4

[search]
max_rules = 4

[model]
embedding_size = 4
projection_size = 4
encoder_hidden = 4
decoder_hidden = 4
ap_hidden = 4
mlp_hidden = 4
rule_embedding_size = 4
beam_size = 2

[train]
epochs = 2
"""


@pytest.fixture
def config_path(tmpdir, monkeypatch):
    monkeypatch.delenv('PYTQA_CACHE_DIR', raising=False)
    path = tmpdir.join('pytqa.cfg')
    path.write(CONFIG.format(corpus=tmpdir.join('corpus.tsv'),
                             cache=tmpdir.join('cache')))
    return str(path)


def run(*argv):
    from pytqa.cli import main
    out = io.StringIO()
    code = main(['--quiet'] + list(argv), out)
    return code, out.getvalue()


def test_usage_errors(tmpdir, monkeypatch):
    monkeypatch.delenv('PYTQA_CACHE_DIR', raising=False)
    monkeypatch.chdir(tmpdir)
    assert run()[0] == 1
    assert run('fly')[0] == 1
    assert run('--workers', '0', 'search')[0] == 1
    assert run('search')[0] == 1
    assert run('--config', str(tmpdir.join('missing.cfg')), 'search')[0] == 1
    assert run('--help')[0] == 0


def test_bad_config(tmpdir, monkeypatch):
    monkeypatch.delenv('PYTQA_CACHE_DIR', raising=False)
    path = tmpdir.join('bad.cfg')
    path.write('[search]\nmax_depth = 3\n')
    assert run('--config', str(path), 'gen')[0] == 1


def test_missing_corpus(config_path):
    assert run('--config', config_path, 'search')[0] == 2
    assert run('--config', config_path, 'stats')[0] == 2


def test_corrupt_corpus(config_path, tmpdir):
    tmpdir.join('corpus.tsv').write('X\tbroken\n')
    assert run('--config', config_path, 'search')[0] == 2


def test_gen_search_stats(config_path, tmpdir):
    code, out = run('--config', config_path, 'gen')
    assert code == 0
    assert out == '6\t1\t2\n'
    assert os.path.exists(str(tmpdir.join('corpus.tsv')))
    code, out = run('--config', config_path, '--workers', '2', 'search')
    assert code == 0
    total, found = [int(x) for x in out.split()]
    assert total == 9 and 0 <= found <= 9
    assert os.path.exists(str(tmpdir.join('cache', 'search.cache')))
    code, out = run('--config', config_path, 'stats')
    assert code == 0
    coverage, mean, parents = out.strip().split('\t')
    assert 0 <= float(coverage) <= 1
    code, again = run('--config', config_path, 'stats', '--split', 'train')
    assert again == out


def test_seed_changes_corpus(config_path, tmpdir):
    run('--config', config_path, 'gen')
    with io.open(str(tmpdir.join('corpus.tsv'))) as stream:
        first = stream.read()
    run('--config', config_path, '--seed', '11', 'gen')
    with io.open(str(tmpdir.join('corpus.tsv'))) as stream:
        assert stream.read() != first


def test_eval_needs_checkpoint(config_path):
    assert run('--config', config_path, 'gen')[0] == 0
    assert run('--config', config_path, 'eval')[0] == 2
    assert run('--config', config_path, 'parse', 'test-00000')[0] == 2


def test_train_eval_parse_align(config_path, tmpdir):
    assert run('--config', config_path, 'gen')[0] == 0
    code, out = run('--config', config_path, 'train')
    assert code == 0
    assert out.split('\t')[0] == '1'
    assert os.path.exists(str(tmpdir.join('cache', 'model.npz')))
    code, out = run('--config', config_path, 'eval')
    assert code == 0
    assert len(out.strip().split('\t')) == 5
    code, out = run('--config', config_path, 'parse', 'test-00000')
    assert code == 0
    assert out
    assert run('--config', config_path, 'parse', 'test-99999')[0] == 2
    plot = str(tmpdir.join('align.png'))
    code, out = run('--config', config_path, 'align', 'train-00000',
                    '--gold', '--plot', plot)
    assert code == 0
    lines = out.splitlines()
    name, logZ = lines[0].split('\t')
    assert name == 'logZ' and np.isfinite(float(logZ))
    assert len(lines) > 1
    for line in lines[1:]:
        k, i, j, prob = line.split('\t')
        assert int(i) <= int(j)
        assert 1e-4 <= float(prob) <= 1
    assert os.path.exists(plot)


def test_runs_are_reproducible(config_path, tmpdir):
    outputs = []
    for _ in range(2):
        if tmpdir.join('cache').check():
            tmpdir.join('cache').remove()
        assert run('--config', config_path, 'gen')[0] == 0
        assert run('--config', config_path, 'search')[0] == 0
        code, metrics = run('--config', config_path, 'train')
        assert code == 0
        files = [tmpdir.join('corpus.tsv'),
                 tmpdir.join('cache', 'search.cache')]
        outputs.append([f.read_binary() for f in files] + [metrics])
    assert outputs[0] == outputs[1]
