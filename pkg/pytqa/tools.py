import matplotlib.pyplot as plt
import numpy as np


def _get_color_list(n_sets):
    """
    color list for curves of several runs

    Args:
        n_sets: number of curves

    Returns:
        list of colors for n_sets
    """
    color_list = ['#1a9850', '#f46d43', '#1f78b4', '#e31a1c',
                  '#6a3d9a', '#b2df8a', '#fdbf6f', '#a6cee3']
    return [color_list[i % len(color_list)] for i in range(n_sets)]


def token_alignment(E):
    """
    Probability that each token lies inside the span aligned to each slot.

    Args:
        E: expected alignment of shape ``(m, n, n)``.

    Returns:
        array of shape ``(m, n)``

    >>> E = np.zeros((1, 3, 3))
    >>> E[0, 0, 1] = 1.
    >>> token_alignment(E)
    array([[1., 1., 0.]])
    """
    E = np.asarray(E)
    n = E.shape[-1]
    inside = np.array([[[i <= t <= j for t in range(n)] for j in range(n)]
                       for i in range(n)], dtype=float)
    return np.einsum('kij,ijt->kt', E, inside)


def draw_alignment(marginals, question, slots=None, fontsize=12,
                   figsize=None, show=True):
    """
    Visualize the expected alignment of slots to question tokens.

    Args:
        marginals: `AlignmentMarginals` or an ``(m, n, n)`` array.
        question: the `Question` whose tokens label the columns.
        slots (list, optional): slot labels.
        fontsize (int, optional): label font size.
        figsize (tuple, optional): figure size.
        show (bool, optional): display the figure before returning it.

    Returns:
        the figure
    """
    plt.close('all')
    E = getattr(marginals, 'E', marginals)
    if hasattr(E, 'detach'):
        E = E.detach().cpu().numpy()
    P = token_alignment(E)
    if slots is None:
        slots = ['slot %d' % k for k in range(P.shape[0])]
    fig, ax = plt.subplots(figsize=figsize or (0.6 * P.shape[1] + 2,
                                               0.6 * P.shape[0] + 1.5))
    image = ax.imshow(P, vmin=0., vmax=1., cmap='Greens', aspect='auto')
    ax.set_xticks(np.arange(P.shape[1]))
    ax.set_xticklabels(question.texts, rotation=60, ha='right',
                       fontsize=fontsize)
    ax.set_yticks(np.arange(P.shape[0]))
    ax.set_yticklabels([str(s) for s in slots], fontsize=fontsize)
    fig.colorbar(image, ax=ax)
    fig.tight_layout()
    if show:
        plt.show()
    return fig


def draw_learning_curves(metrics, labels=None, fontsize=15):
    """
    Plot training loss and dev denotation accuracy per epoch.

    Args:
        metrics: list of `EpochMetrics`, or a list of such lists to compare
            several runs.
        labels (list, optional): one label per run.
        fontsize (int, optional): title font size.

    Returns:
        the figure
    """
    plt.close('all')
    runs = metrics if metrics and isinstance(metrics[0], list) else [metrics]
    labels = labels or ['run %d' % i for i in range(len(runs))]
    colors = _get_color_list(len(runs))
    fig, (loss_ax, acc_ax) = plt.subplots(1, 2, figsize=(12, 4))
    for run, label, color in zip(runs, labels, colors):
        epochs = [m.epoch for m in run]
        loss_ax.plot(epochs, [m.loss for m in run], 'o-', color=color,
                     linewidth=2, label=label)
        acc_ax.plot(epochs, [m.dev_accuracy for m in run], 'o-',
                    color=color, linewidth=2, label=label)
    loss_ax.set_title('Training Loss', fontsize=fontsize)
    acc_ax.set_title('Dev Accuracy', fontsize=fontsize)
    for ax in (loss_ax, acc_ax):
        ax.set_xlabel('Epoch')
        ax.grid(True)
    acc_ax.set_ylim(0., 1.)
    acc_ax.legend(loc='best')
    plt.show()
    return fig


def draw_gold_posteriors(posteriors, labels, bins=20, fontsize=15):
    """
    Histograms of gold program log posteriors, one per attention mode.

    Args:
        posteriors: list of arrays of log posteriors.
        labels: one label per array.
        bins (int, optional): number of bins.
        fontsize (int, optional): title font size.

    Returns:
        the figure
    """
    plt.close('all')
    fig, ax = plt.subplots()
    colors = _get_color_list(len(posteriors))
    for values, label, color in zip(posteriors, labels, colors):
        values = np.asarray(values)
        ax.hist(values, bins=bins, alpha=0.5, color=color,
                label='%s (mean %.2f)' % (label, values.mean()))
    ax.set_title('Gold Program Log Posterior', fontsize=fontsize)
    ax.set_xlabel('log p(z* | x, t, d)')
    ax.legend(loc='best')
    plt.show()
    return fig
