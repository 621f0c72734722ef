"""Gnuplot scripts for the data files of a finished run.

Scripts are plain text next to the data; rendering them needs gnuplot but
nothing in this package does.
"""
from __future__ import annotations

from pathlib import Path

from . import io

_HEADER = """set datafile separator ','
set key autotitle columnhead
set terminal pngcairo size 900,600
"""


def _col(header, name) -> int:
    return header.index(name) + 1


def _script(data: Path, out_png: str, body: str) -> str:
    return _HEADER + f"set output '{out_png}'\n" + body.replace("DATA", f"'{data.name}'") + "\n"


def _spectrum(path: Path, header) -> str:
    return _script(path, "spectrum.png",
                   "set xlabel 'n'\nset ylabel 'lambda_n'\n"
                   f"plot DATA using {_col(header, 'n')}:{_col(header, 'lambda')} with points pt 7 ps 0.4")


def _weyl(path: Path, header) -> str:
    return _script(path, "weyl.png",
                   "set xlabel 'lambda'\nset ylabel 'N(lambda)'\n"
                   f"plot DATA using {_col(header, 'lambda')}:{_col(header, 'count')} with dots, "
                   "pi*x title 'slope pi' with lines")


def _trajectory(path: Path, header) -> str:
    png = path.stem + ".png"
    t = _col(header, "t")
    return _script(path, png,
                   "set multiplot layout 2,2\nset xlabel 't'\n"
                   + "\n".join(f"plot DATA using {t}:{_col(header, c)} with lines"
                               for c in ("mass", "energy", "h_sigma_norm", "linf_norm"))
                   + "\nunset multiplot")


def _strichartz(path: Path, header) -> str:
    png = path.stem + ".png"
    return _script(path, png,
                   "set xlabel 'block j'\nset ylabel 'log2 lhs'\n"
                   f"plot DATA using {_col(header, 'j')}:(log(${_col(header, 'lhs')})/log(2)) with points pt 7")


def _projector(path: Path, header) -> str:
    return _script(path, "projector_norms.png",
                   "set logscale xy\nset xlabel 'lambda'\nset ylabel 'L2 -> L4 norm'\n"
                   f"plot DATA using {_col(header, 'lambda')}:{_col(header, 'norm')} with points pt 7")


def _phi_ratio(path: Path, header) -> str:
    return _script(path, "phi_ratio.png",
                   "set logscale xy\nset xlabel 's'\nset ylabel 'ratio'\n"
                   f"plot DATA using {_col(header, 's_value')}:{_col(header, 'ratio')} with linespoints")


def _renorm(path: Path, header, summary) -> str:
    x, y = _col(header, "log_inv_eps"), _col(header, "c_eps")
    slope = summary.get("results", {}).get("slope")
    fit = ""
    if slope is not None:
        fit = (f"slope = {slope!r}\nstats DATA using {x}:(${y} - slope*${x}) nooutput\n"
               "offset = STATS_mean\n")
    body = f"set xlabel 'log(1/eps)'\nset ylabel 'c_eps'\n{fit}plot DATA using {x}:{y} with points pt 7"
    if slope is not None:
        body += ", offset + slope*x title sprintf('fit slope %.6f', slope) with lines"
    return _script(path, "renorm_constants.png", body)


def _sandwich(path: Path, header) -> str:
    k = _col(header, "K")
    return _script(path, "sandwich.png",
                   "set xlabel 'K'\nset ylabel 'constant'\n"
                   f"plot DATA using {k}:{_col(header, 'm1')} title 'm1' with points pt 7, "
                   f"DATA using {k}:{_col(header, 'm2')} title 'm2' with points pt 5")


def _contraction(path: Path, header) -> str:
    return _script(path, "contraction.png",
                   "set logscale xy\nset xlabel '||u0||_{H^sigma}'\nset ylabel 'T'\n"
                   f"plot DATA using {_col(header, 'h_sigma_norm')}:{_col(header, 'T')} with points pt 7")


_MAKERS = {
    "sandwich.csv": _sandwich,
    "contraction.csv": _contraction,
    "spectrum.csv": _spectrum,
    "weyl_counting.csv": _weyl,
    "projector_norms.csv": _projector,
    "phi_ratio.csv": _phi_ratio,
}


def emit_plots(run_dir) -> list[Path]:
    """Write one ``.gp`` script per recognized data file in ``run_dir``; return their paths."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    data_files = sorted(run_dir.glob("*.csv"))
    if not data_files:
        raise FileNotFoundError(f"run directory {run_dir} holds no data files")
    summary_path = run_dir / "summary.json"
    summary = io.read_json(summary_path) if summary_path.exists() else {}
    written = []
    for data in data_files:
        header, rows = io.read_csv(data)
        if data.name == "renorm_constants.csv":
            maker = lambda d, h: _renorm(d, h, summary)
        elif data.name in _MAKERS:
            maker = _MAKERS[data.name]
        elif data.name.startswith("trajectory_"):
            maker = _trajectory
        elif data.name.startswith("strichartz_"):
            maker = _strichartz
        else:
            continue
        text = maker(data, header)
        if not rows:
            text = f"# WARNING: {data.name} has no data rows; the plot will be empty\n" + text
        script = data.with_suffix(".gp")
        script.write_text(text)
        written.append(script)
    return written
