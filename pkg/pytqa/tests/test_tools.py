import matplotlib
matplotlib.use('Agg')

import numpy as np


def test_token_alignment():
    from pytqa.tools import token_alignment
    E = np.zeros((2, 4, 4))
    E[0, 1, 2] = 0.5
    E[0, 3, 3] = 0.5
    E[1, 0, 0] = 1.
    P = token_alignment(E)
    assert np.allclose(P, [[0., .5, .5, .5], [1., 0., 0., 0.]])


def test_draw_alignment():
    from pytqa.lattice import forward_backward, FeasibleSpans
    from pytqa.tools import draw_alignment
    from pytqa.tests.test import get_medal_example
    example, table = get_medal_example()
    n = example.question.n
    F = FeasibleSpans((((5, 5), (n - 1, n - 1)),
                       tuple((i, i) for i in range(n - 1))), n)
    marginals = forward_backward(np.zeros((2, n, n)), F)
    fig = draw_alignment(marginals, example.question, ['row', 'column'])
    ax = fig.axes[0]
    assert [t.get_text() for t in ax.get_yticklabels()] == ['row', 'column']
    assert len(ax.get_xticklabels()) == n


def test_draw_alignment_without_show(tmpdir, monkeypatch):
    import matplotlib.pyplot as plt
    from pytqa.tools import draw_alignment
    from pytqa.tests.test import get_medal_example
    example, _ = get_medal_example()
    n = example.question.n
    shown = []
    monkeypatch.setattr(plt, 'show', lambda: shown.append(True))
    E = np.zeros((1, n, n))
    E[0, 5, 5] = 1.
    fig = draw_alignment(E, example.question, show=False)
    path = tmpdir.join('align.png')
    fig.savefig(str(path))
    assert not shown
    assert path.check()
    draw_alignment(E, example.question)
    assert shown == [True]


def test_draw_learning_curves():
    from pytqa.tools import draw_learning_curves, _get_color_list
    from pytqa.trainer import EpochMetrics
    run = [EpochMetrics(1, 2., .1), EpochMetrics(2, 1., .3)]
    fig = draw_learning_curves([run, run], ['structured', 'standard'])
    assert len(fig.axes) == 2
    assert len(fig.axes[0].lines) == 2
    assert len(_get_color_list(10)) == 10


def test_draw_gold_posteriors():
    from pytqa.tools import draw_gold_posteriors
    fig = draw_gold_posteriors([np.array([-1., -.5]), np.array([-2., -.1])],
                               ['structured', 'standard'], bins=4)
    assert fig.axes[0].get_legend() is not None
