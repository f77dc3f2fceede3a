from typing import Collection, Dict, Tuple, Union

import matplotlib
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator
from pylettes import Distinct20

from entrood.errors import DataError

SVG_STYLE = {"svg.hashsalt": "entrood", "svg.fonttype": "path", "path.simplify": True}


def _defaults(kwargs: dict, **defaults) -> dict:

    for key, value in defaults.items():
        if key not in kwargs.keys():
            kwargs[key] = value
    return kwargs


def _finish(fig: Figure, ax: plt.Axes, show: bool, print_out: bool, file_name: str) -> None:
    """ Save the figure as a deterministic SVG (no date, fixed ids) and/or show it. """

    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    fig.tight_layout()

    if not file_name.endswith((".svg", ".png", ".pdf")):
        file_name += ".svg"

    if print_out:
        try:
            with matplotlib.rc_context(SVG_STYLE):
                fig.savefig(file_name, metadata={"Date": None} if file_name.endswith(".svg") else None)
        except OSError as err:
            plt.close(fig)
            raise DataError("could not write plot {}: {}".format(file_name, err))
    if show:
        plt.show()


def _check_series(series: Dict[str, Collection[float]]) -> None:

    for name, values in series.items():
        if values is None or len(values) == 0:
            raise DataError("cannot plot: series '{}' is empty".format(name))


def histogram_plot(in_values: Union[np.ndarray, list], out_values: Union[np.ndarray, list],
                   show: bool = True, print_out: bool = False,
                   file_name: str = "./loglik_histograms.svg",
                   **kwargs: Tuple[int]) -> Tuple[Figure, plt.Axes]:
    """ Overlaid histograms of in- and out-of-distribution log-likelihoods.

    Args:
        in_values (array or list): in-distribution values.
        out_values (array or list): out-of-distribution values.
        show (bool): Choose to display the plot.
        print_out (bool): Choose to save the plot to a file.
        file_name (str): Name of the file where the plot will be saved if
            print_out is active. Must include the output path.
        kwargs (dict): Keyword arguments to format the plot:
            - figsize (tuple(int, int)): the figure size,
            - title (str): figure title,
            - xlabel (str): x-axis label,
            - labels (tuple(str, str)): legend labels,
            - bins (int): number of bins,
            - fontsize (int): font size of label, title 15% larger, ticks 15% smaller.

    Returns:
        fig (figure object): the produced figure object.
        ax (ax object): the produced axis object.
    """

    kwargs = _defaults(kwargs, figsize=(6, 4), title="Log-likelihoods", xlabel="log-likelihood (nats)",
                       labels=("in-distribution", "out-of-distribution"), bins=60, fontsize=12)
    _check_series({kwargs["labels"][0]: in_values, kwargs["labels"][1]: out_values})

    in_values, out_values = np.asarray(in_values, dtype=float), np.asarray(out_values, dtype=float)
    finite = np.concatenate([in_values[np.isfinite(in_values)], out_values[np.isfinite(out_values)]])
    edges = np.histogram_bin_edges(finite, bins=kwargs["bins"]) if finite.size else kwargs["bins"]

    fig = plt.figure(figsize=kwargs["figsize"])
    ax = fig.add_subplot(111)

    for i, (values, label) in enumerate(zip((in_values, out_values), kwargs["labels"])):
        ax.hist(values[np.isfinite(values)], bins=edges, density=True, alpha=.6,
                color=Distinct20()[i % 20], label=label)

    ax.tick_params(labelsize=kwargs["fontsize"] * .85)
    ax.set_xlabel(kwargs["xlabel"], fontsize=kwargs["fontsize"])
    ax.set_ylabel("density", fontsize=kwargs["fontsize"])
    ax.set_title(kwargs["title"], size=kwargs["fontsize"] * 1.15)
    ax.legend(frameon=False, fontsize=kwargs["fontsize"] * .85)

    _finish(fig, ax, show, print_out, file_name)

    return fig, ax


def line_plot(y_vals: Dict[str, Union[np.ndarray, list]], x_val: Union[np.ndarray, list] = None,
              show: bool = True, print_out: bool = False,
              file_name: str = "./line_plot.svg",
              **kwargs: Tuple[int]) -> Tuple[Figure, plt.Axes]:
    """ One or more line series against a shared x axis.

    Args:
        y_vals (dict[str, array]): series name to values along the y axis;
            None entries (undefined values) are left as gaps.
        x_val (array or list): values along the x axis,
            if none, these will be inferred from the shape of the series.
        show (bool): Choose to display the plot.
        print_out (bool): Choose to save the plot to a file.
        file_name (str): Name of the file where the plot will be saved if
            print_out is active. Must include the output path.
        kwargs (dict): Keyword arguments to format the plot:
            - figsize (tuple(int, int)): the figure size,
            - title (str): figure title,
            - xlabel (str): x-axis label,
            - ylabel (str): y-axis label,
            - logx (bool): if True set x-axis to logarithmic scale,
            - logy (bool): if True set y-axis to logarithmic scale,
            - fontsize (int): font size of label, title 15% larger, ticks 15% smaller.

    Returns:
        fig (figure object): the produced figure object.
        ax (ax object): the produced axis object.
    """

    kwargs = _defaults(kwargs, figsize=(6, 4), title="Line plot", xlabel="x", ylabel="y",
                       logx=False, logy=False, fontsize=12)
    _check_series(y_vals)

    fig = plt.figure(figsize=kwargs["figsize"])
    ax = fig.add_subplot(111)
    plt.sca(ax)
    plt.grid(False)

    for i, (name, values) in enumerate(y_vals.items()):
        values = np.array([np.nan if v is None else v for v in values], dtype=float)
        x = range(len(values)) if x_val is None else x_val
        ax.plot(x, values, marker="o", color=Distinct20()[i % 20], label=name)

    if x_val is None:
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    if kwargs["logy"]:
        ax.set_yscale("log")
    if kwargs["logx"]:
        ax.set_xscale("log", base=2)

    ax.tick_params(labelsize=kwargs["fontsize"] * .85)
    ax.set_xlabel(kwargs["xlabel"], fontsize=kwargs["fontsize"])
    ax.set_ylabel(kwargs["ylabel"], fontsize=kwargs["fontsize"])
    ax.set_title(kwargs["title"], size=kwargs["fontsize"] * 1.15)
    ax.legend(frameon=False, fontsize=kwargs["fontsize"] * .85)

    _finish(fig, ax, show, print_out, file_name)

    return fig, ax


def roc_plot(curves: Dict[str, Tuple[np.ndarray, np.ndarray]],
             show: bool = True, print_out: bool = False,
             file_name: str = "./roc_curves.svg",
             **kwargs: Tuple[int]) -> Tuple[Figure, plt.Axes]:
    """ ROC curves of several detectors.

    Args:
        curves (dict[str, (array, array)]): detector name to (fpr, tpr).
        show (bool): Choose to display the plot.
        print_out (bool): Choose to save the plot to a file.
        file_name (str): Name of the file where the plot will be saved if
            print_out is active. Must include the output path.
        kwargs (dict): Keyword arguments to format the plot:
            - figsize (tuple(int, int)): the figure size,
            - title (str): figure title,
            - fontsize (int): font size of label, title 15% larger, ticks 15% smaller.

    Returns:
        fig (figure object): the produced figure object.
        ax (ax object): the produced axis object.
    """

    kwargs = _defaults(kwargs, figsize=(5, 5), title="ROC", fontsize=12)
    if not curves:
        raise DataError("cannot plot: no ROC curves")
    _check_series({name: fpr for name, (fpr, _) in curves.items()})

    fig = plt.figure(figsize=kwargs["figsize"])
    ax = fig.add_subplot(111, aspect="equal")

    ax.plot([0, 1], [0, 1], linestyle="--", color="#aaaaaa", linewidth=1)
    for i, (name, (fpr, tpr)) in enumerate(curves.items()):
        ax.plot(fpr, tpr, color=Distinct20()[i % 20], label=name)

    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.tick_params(labelsize=kwargs["fontsize"] * .85)
    ax.set_xlabel("false positive rate", fontsize=kwargs["fontsize"])
    ax.set_ylabel("true positive rate", fontsize=kwargs["fontsize"])
    ax.set_title(kwargs["title"], size=kwargs["fontsize"] * 1.15)
    ax.legend(frameon=False, fontsize=kwargs["fontsize"] * .85, loc="lower right")

    _finish(fig, ax, show, print_out, file_name)

    return fig, ax
