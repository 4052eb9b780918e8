"""Reading and writing encounter data, stratum tables, run configs and results.

File formats (UTF-8 CSV, ``.`` decimal separator):

* encounters, history format: ``id,stratum,k1,...,kK`` with 0/1 cells
* encounters, frequency format: ``id,stratum,y``
* strata: ``stratum,<covariate columns...>`` with strata numbered ``1..S``
* draws: ``chain,iter,<monitored scalars...>``
* summary: ``parameter,mean,sd,q2.5,q50,q97.5,rhat``
* gof: ``# p_value=<p>`` comment line, then ``draw,x_obs,x_sim``
* pi summary: ``stratum,pi_mean``
"""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .diagnostics import GofResult, Summary, bayesian_p
from .model import EncounterData

__all__ = [
    "StrataTable",
    "RunConfig",
    "DataFormatError",
    "load_encounters",
    "write_encounters",
    "load_strata",
    "write_strata",
    "build_design",
    "write_truth",
    "read_truth",
    "write_outputs",
    "read_draws",
    "read_gof",
    "write_gof",
    "load_config",
    "example_paths",
    "GOF_COLUMNS",
]

GOF_COLUMNS = ("x_obs", "x_sim")


class DataFormatError(ValueError):
    """Malformed input file."""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i, row) for i, row in enumerate(csv.reader(fh), start=1)
                 if row and not row[0].lstrip().startswith("#")]
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in lines[0][1]]
    return header, lines[1:]


def _parse_int(cell: str, path, line: int, what: str) -> int:
    try:
        return int(cell.strip())
    except ValueError:
        raise DataFormatError(f"{path}, line {line}: {what} {cell!r} is not an integer") from None


# -- encounters ---------------------------------------------------------------------


def load_encounters(path, format: str = "history", K: int | None = None, S: int | None = None,
                    covariates=None, covariate_names=None) -> EncounterData:
    """Load captured individuals from CSV.

    Stratum labels in the file run from 1 to ``S``; they are stored 0-based.
    ``K`` is required for the frequency format and inferred from the column
    count for the history format. ``S`` defaults to the number of rows in
    ``covariates`` or, failing that, the largest label.
    """
    if format not in ("history", "frequency"):
        raise ValueError(f"unknown encounter format {format!r}")
    header, rows = _read_rows(path)
    if len(header) < 3 or header[0] != "id" or header[1] != "stratum":
        raise DataFormatError(f"{path}, line 1: header must start with 'id,stratum'")
    if format == "history":
        K_file = len(header) - 2
        if K is not None and K != K_file:
            raise DataFormatError(f"{path}: {K_file} occasion columns but K={K}")
        K = K_file
    else:
        if header[2:] != ["y"]:
            raise DataFormatError(f"{path}, line 1: frequency header must be 'id,stratum,y'")
        if K is None:
            raise ValueError("K is required for frequency-format encounters")
    if not rows:
        raise DataFormatError(f"{path}: no individuals")
    if S is None and covariates is not None:
        S = np.asarray(covariates).shape[0]
    ids, strata, hist, freq = [], [], [], []
    for line, row in rows:
        if len(row) != len(header):
            raise DataFormatError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0].strip())
        s = _parse_int(row[1], path, line, "stratum")
        if s < 1 or (S is not None and s > S):
            raise DataFormatError(f"{path}, line {line}: stratum {s} out of range 1..{S}")
        strata.append(s - 1)
        if format == "history":
            cells = [_parse_int(c, path, line, "capture") for c in row[2:]]
            if any(c not in (0, 1) for c in cells):
                raise DataFormatError(f"{path}, line {line}: capture cells must be 0 or 1")
            if not any(cells):
                raise DataFormatError(f"{path}, line {line}: uncaptured individual in data")
            hist.append(cells)
        else:
            y = _parse_int(row[2], path, line, "frequency")
            if y == 0:
                raise DataFormatError(f"{path}, line {line}: uncaptured individual in data")
            if not 1 <= y <= K:
                raise DataFormatError(f"{path}, line {line}: frequency {y} out of range 1..{K}")
            freq.append(y)
    if S is None:
        S = max(strata) + 1
    return EncounterData(
        strata=np.array(strata), K=K, S=S,
        histories=np.array(hist, dtype=np.int8) if format == "history" else None,
        freq=None if format == "history" else np.array(freq),
        covariates=covariates, covariate_names=list(covariate_names or []), ids=ids,
    )


def write_encounters(data: EncounterData, path, format: str = "history") -> Path:
    path = Path(path)
    ids = data.ids or [str(i + 1) for i in range(data.n_individuals)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if format == "history":
            if data.histories is None:
                raise ValueError("data carry frequencies only")
            w.writerow(["id", "stratum"] + [f"k{k + 1}" for k in range(data.K)])
            for i in range(data.n_individuals):
                w.writerow([ids[i], int(data.strata[i]) + 1] + [int(c) for c in data.histories[i]])
        elif format == "frequency":
            w.writerow(["id", "stratum", "y"])
            for i in range(data.n_individuals):
                w.writerow([ids[i], int(data.strata[i]) + 1, int(data.freq[i])])
        else:
            raise ValueError(f"unknown encounter format {format!r}")
    return path


# -- strata and design ---------------------------------------------------------------


@dataclass
class StrataTable:
    """Stratum attribute table, rows ordered by stratum number 1..S."""

    columns: dict[str, list[str]]

    @property
    def S(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def numeric(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise KeyError(f"strata table has no column {name!r}")
        try:
            return np.array([float(v) for v in self.columns[name]])
        except ValueError:
            raise DataFormatError(f"column {name!r} is not numeric") from None


def load_strata(path) -> StrataTable:
    header, rows = _read_rows(path)
    if not header or header[0] != "stratum":
        raise DataFormatError(f"{path}, line 1: first column must be 'stratum'")
    if not rows:
        raise DataFormatError(f"{path}: no strata")
    recs = {}
    for line, row in rows:
        if len(row) != len(header):
            raise DataFormatError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
        s = _parse_int(row[0], path, line, "stratum")
        if s in recs:
            raise DataFormatError(f"{path}, line {line}: duplicate stratum {s}")
        recs[s] = [c.strip() for c in row[1:]]
    S = len(recs)
    if sorted(recs) != list(range(1, S + 1)):
        raise DataFormatError(f"{path}: strata must be numbered 1..{S}")
    cols = {name: [recs[s][j] for s in range(1, S + 1)] for j, name in enumerate(header[1:])}
    cols = {"stratum": [str(s) for s in range(1, S + 1)], **cols}
    return StrataTable(cols)


def write_strata(path, covariates, names) -> Path:
    path = Path(path)
    cov = np.asarray(covariates)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum"] + list(names))
        for s, row in enumerate(cov, start=1):
            w.writerow([s] + [_fmt(v) for v in row])
    return path


def _level_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def build_design(strata: StrataTable, numeric=(), categorical=(), intercept: bool = True):
    """Design matrix from declared stratum columns.

    Numeric columns enter verbatim. Categorical columns are dummy coded with
    the first level (in sorted order) as reference. Returns ``(design, names)``.
    """
    cols, names = [], []
    if intercept:
        cols.append(np.ones(strata.S))
        names.append("intercept")
    for nm in numeric:
        cols.append(strata.numeric(nm))
        names.append(nm)
    for nm in categorical:
        if nm not in strata.columns:
            raise KeyError(f"strata table has no column {nm!r}")
        values = strata.columns[nm]
        levels = sorted(set(values), key=_level_key)
        for lev in levels[1:]:
            cols.append(np.array([1.0 if v == lev else 0.0 for v in values]))
            names.append(f"{nm}={lev}")
    design = np.column_stack(cols) if cols else np.zeros((strata.S, 0))
    return design, names


# -- truth sidecar -------------------------------------------------------------------


def write_truth(path, sim, spec) -> Path:
    p = sim.params
    truth = {
        "abundance": spec.abundance.value,
        "detection": spec.detection.value,
        "design_names": list(spec.design_names),
        "beta": [float(b) for b in p.beta],
        "p": float(p.p),
        "alpha0": float(p.alpha0),
        "alpha1": float(p.alpha1),
        "a": float(p.a),
        "N": [int(v) for v in sim.N],
        "N_T": int(np.sum(sim.N)),
        "eta": None if sim.eta is None else [float(v) for v in sim.eta],
        "K": int(sim.data.K),
        "n_captured": int(sim.data.n_individuals),
    }
    path = Path(path)
    path.write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    return path


def read_truth(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- results -------------------------------------------------------------------------


def write_outputs(draws, summary: Summary, gof: GofResult | None, pi_means, out_dir,
                  monitor=None) -> dict[str, Path]:
    """Write ``draws.csv``, ``summary.csv``, ``gof.csv`` and ``pi_summary.csv``.

    ``monitor`` optionally restricts draws and summary to names equal to, or
    indexed under, one of the given prefixes (``"beta"`` keeps ``beta[...]``).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")

    def keep(name):
        if monitor is None:
            return True
        return any(name == m or name.startswith(m + "[") for m in monitor) or name in GOF_COLUMNS

    cols = [j for j, nm in enumerate(draws.names) if keep(nm)]
    paths = {}

    paths["draws"] = out / "draws.csv"
    with open(paths["draws"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iter"] + [draws.names[j] for j in cols])
        for c in range(draws.n_chains):
            for d in range(draws.n_draws):
                w.writerow([c + 1, int(draws.iters[d])] + [_fmt(draws.values[c, d, j]) for j in cols])

    paths["summary"] = out / "summary.csv"
    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "rhat"])
        for j, nm in enumerate(summary.names):
            if nm in GOF_COLUMNS or not keep(nm):
                continue
            w.writerow([nm] + [_fmt(v) for v in (summary.mean[j], summary.sd[j], summary.q025[j],
                                                   summary.q50[j], summary.q975[j], summary.rhat[j])])

    if gof is not None:
        paths["gof"] = write_gof(gof, out / "gof.csv")

    paths["pi_summary"] = out / "pi_summary.csv"
    with open(paths["pi_summary"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "pi_mean"])
        for s, v in enumerate(pi_means, start=1):
            w.writerow([s, _fmt(v)])
    return paths


def read_draws(path):
    """Read ``draws.csv`` back into a :class:`~stratcr.sampler.DrawsMatrix`."""
    from .sampler import DrawsMatrix

    header, rows = _read_rows(path)
    if header[:2] != ["chain", "iter"]:
        raise DataFormatError(f"{path}, line 1: header must start with 'chain,iter'")
    names = header[2:]
    by_chain: dict[int, list] = {}
    iters: dict[int, list] = {}
    for line, row in rows:
        if len(row) != len(header):
            raise DataFormatError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
        c = _parse_int(row[0], path, line, "chain")
        iters.setdefault(c, []).append(_parse_int(row[1], path, line, "iter"))
        try:
            by_chain.setdefault(c, []).append([float(v) if v else math.nan for v in row[2:]])
        except ValueError:
            raise DataFormatError(f"{path}, line {line}: non-numeric draw") from None
    chains = sorted(by_chain)
    lengths = {len(by_chain[c]) for c in chains}
    if len(lengths) != 1:
        raise DataFormatError(f"{path}: chains have unequal lengths")
    values = np.array([by_chain[c] for c in chains])
    return DrawsMatrix(names=names, values=values, iters=np.array(iters[chains[0]]))


def write_gof(gof: GofResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# p_value={_fmt(bayesian_p(gof))}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["draw", "x_obs", "x_sim"])
        for m, (xo, xs) in enumerate(zip(gof.x_obs, gof.x_sim), start=1):
            w.writerow([m, _fmt(xo), _fmt(xs)])
    return path


def read_gof(path) -> GofResult:
    header, rows = _read_rows(path)
    if header != ["draw", "x_obs", "x_sim"]:
        raise DataFormatError(f"{path}, line 1: header must be 'draw,x_obs,x_sim'")
    xo = [float(r[1]) for _, r in rows]
    xs = [float(r[2]) for _, r in rows]
    return GofResult(np.array(xo), np.array(xs))


# -- run configuration ---------------------------------------------------------------


def _as_list(v) -> list[str]:
    if v is None:
        return []
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    return [x.strip() for x in str(v).split(",") if x.strip()]


@dataclass
class RunConfig:
    """All settings of a ``fit`` run; every field has a default except the input paths."""

    encounters: str | None = None
    strata: str | None = None
    out: str = "results"
    format: str = "history"
    K: int | None = None
    covariates: list[str] = field(default_factory=list)
    categorical: list[str] = field(default_factory=list)
    abundance: str = "poisson"
    detection: str = "M0"
    constraint: str | None = None
    M: int | None = None
    chains: int = 3
    iterations: int = 4000
    burnin: int | None = None
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50
    target_accept: float = 0.40
    step_beta: float = 0.05
    step_alpha: float = 0.1
    step_joint: float = 0.05
    step_eta: float = 0.5
    step_a: float = 0.5
    beta_moves: int = 5
    joint_moves: int = 5
    ppc: bool = True
    check_every: int = 1000
    workers: int = 1
    monitor: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.covariates = _as_list(self.covariates)
        self.categorical = _as_list(self.categorical)
        self.monitor = _as_list(self.monitor)
        if self.constraint is None:
            self.constraint = "free" if self.abundance == "dcm" else "derived"
        if self.detection == "Mb" and self.format != "history":
            raise ValueError("the Mb detection model needs history-format encounters")

    def sampler_config(self):
        """The :class:`~stratcr.sampler.SamplerConfig` part of this run."""
        from .sampler import SamplerConfig

        keys = [f.name for f in fields(SamplerConfig)]
        return SamplerConfig(**{k: getattr(self, k) for k in keys})

    @classmethod
    def field_types(cls) -> dict[str, str]:
        return {f.name: str(f.type) for f in fields(cls)}


_INT_FIELDS = {"K", "M", "chains", "iterations", "burnin", "thin", "seed", "adapt_window", "workers",
               "beta_moves", "joint_moves", "check_every"}
_FLOAT_FIELDS = {"target_accept", "step_beta", "step_alpha", "step_joint", "step_eta", "step_a"}
_BOOL_FIELDS = {"ppc"}


def load_config(path) -> dict:
    """Parse a flat ``key = value`` config file into typed RunConfig keyword arguments."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    valid = set(RunConfig.field_types())
    out = {}
    for key, raw in parser["run"].items():
        if key not in valid:
            raise DataFormatError(f"{path}: unknown config key {key!r}")
        value = raw.strip()
        if key in _INT_FIELDS:
            out[key] = None if value.lower() in ("", "none") else int(value)
        elif key in _FLOAT_FIELDS:
            out[key] = float(value)
        elif key in _BOOL_FIELDS:
            if value.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise DataFormatError(f"{path}: {key} must be true or false, got {value!r}")
            out[key] = value.lower() in ("true", "yes", "1")
        else:
            out[key] = value
    return out


def example_paths() -> dict[str, Path]:
    """Paths of the bundled simulated example data set."""
    base = resources.files("stratcr") / "data"
    return {
        "encounters": Path(str(base / "encounters.csv")),
        "strata": Path(str(base / "strata.csv")),
        "truth": Path(str(base / "truth.json")),
    }
