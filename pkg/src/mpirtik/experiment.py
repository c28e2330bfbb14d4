"""Experiment configuration, grid execution and CSV output.

Configuration files are line oriented, one ``section.key = value`` per line,
with ``#`` starting a comment::

    problem.kind = spectra          # spectra | deblur2d | load
    problem.n = 64
    noise.mu_percent = 0.5, 3
    noise.seed = 42
    solver.method = mpir
    solver.alpha2 = 1e-1, 1e-3
    solver.triples = (1,1,1), (3,2,1), (3,3,3)
    solver.include_air = true
    outputs.which = iterates, filters, table2, table3
    format.bf16 = {exponent_bits = 8, mantissa_bits = 7, subnormals = true}

Lists are comma separated.  Every cell of ``mu x alpha2 x triple`` is run
independently and writes its own files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import os
import re
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .filters import effective_filter_set, mpir_filters, pl_filters_recursive
from .fpsim import FloatFormat, PrecisionTriple
from .linalg import KronOperator, build_preconditioner, kron_svd, svd
from .metrics import filter_diff_stats
from .problems import InverseProblem, add_noise, load_problem, make_problem
from .solvers import (
    DOUBLE,
    SolverConfig,
    air_run,
    ir_run,
    landweber_run,
    mpir_run,
    pl_run,
    tikhonov_direct,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "run_experiment",
    "generate_problem",
    "report",
    "OUTPUT_KINDS",
    "METHODS",
]

METHODS = ("tikhonov", "landweber", "pl", "ir", "mpir", "air")
OUTPUT_KINDS = ("iterates", "filters", "table2", "table3")
FILTER_METHODS = ("pl", "ir", "mpir")
PROBLEM_KEYS = {
    "spectra": {"n": 64, "eta": 2.0},
    "deblur2d": {"nr": 32, "nc": 32, "psf_eta": 2.0, "psf_size": 9},
    "load": {"path": None},
}


class ConfigError(ValueError):
    """All problems found in a configuration, one message per entry."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    problem_kind: str = "spectra"
    problem_params: dict = field(default_factory=lambda: dict(PROBLEM_KEYS["spectra"]))
    mu_percent: tuple = (1.0,)
    seed: int = 42
    renoise: bool = True
    method: str = "mpir"
    alpha2: tuple = (1e-2,)
    max_iters: int = 10
    zeta: float = 1.0
    triples: tuple = (DOUBLE,)
    include_air: bool = False
    table2_iters: tuple = (1, 5, 10)
    directory: str | None = None
    which: frozenset = frozenset(OUTPUT_KINDS)
    formats: dict = field(default_factory=dict)
    source: str = ""

    def digest(self) -> str:
        """sha256 of the configuration text plus any command-line overrides."""
        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed), source=self.source + f"\n#override noise.seed = {int(seed)}\n")

    def with_outputs(self, which) -> "ExperimentConfig":
        which = frozenset(which)
        return replace(self, which=which, source=self.source + f"\n#override outputs.which = {','.join(sorted(which))}\n")


# -- parsing -------------------------------------------------------------------

def _split_list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def _float(v):
    return float(v)


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _parse_format(name, text):
    body = text.strip()
    if not (body.startswith("{") and body.endswith("}")):
        raise ValueError("format must be written as {exponent_bits, mantissa_bits, subnormals}")
    parts = _split_list(body[1:-1])
    fields = {}
    order = ("exponent_bits", "mantissa_bits", "subnormals")
    for i, p in enumerate(parts):
        if "=" in p:
            k, val = (s.strip() for s in p.split("=", 1))
        elif i < len(order):
            k, val = order[i], p
        else:
            raise ValueError(f"too many entries in format {name!r}")
        if k not in order:
            raise ValueError(f"unknown format field {k!r}")
        fields[k] = val
    if "exponent_bits" not in fields or "mantissa_bits" not in fields:
        raise ValueError("format needs exponent_bits and mantissa_bits")
    sub = _bool(fields.get("subnormals", "true"))
    return FloatFormat(name, _int(fields["exponent_bits"]), _int(fields["mantissa_bits"]), sub)


def _parse_triples(text, custom):
    groups = re.findall(r"\(([^()]*)\)", text)
    if not groups:
        groups = [text]
    rest = re.sub(r"\(([^()]*)\)", "", text).replace(",", "").strip()
    if rest and len(groups) > 1:
        raise ValueError(f"cannot parse triple list {text!r}")
    return tuple(PrecisionTriple.from_spec(g, custom) for g in groups)


_SCALARS = {
    "noise.seed": _int,
    "solver.method": str,
    "solver.max_iters": _int,
    "solver.zeta": _float,
    "solver.include_air": _bool,
    "outputs.directory": str,
}
_LISTS = {
    "noise.mu_percent": _float,
    "solver.alpha2": _float,
    "outputs.which": str,
    "outputs.table2_iters": _int,
}
_PROBLEM_TYPES = {"n": _int, "eta": _float, "nr": _int, "nc": _int, "psf_eta": _float, "psf_size": _int, "path": str}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document.

    Raises
    ------
    ConfigError
        Listing every unknown key, malformed value and violated constraint,
        each prefixed with its line number.
    """
    errors = []
    seen = {}
    formats = {}
    raw_triples = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} (first on line {seen[key][0]})")
            continue
        if key.startswith("format."):
            name = key[len("format."):]
            try:
                formats[name] = _parse_format(name, value)
            except ValueError as exc:
                errors.append(f"line {lineno}: {key}: {exc}")
            seen[key] = (lineno, value)
            continue
        section = key.split(".", 1)[0]
        known = (key in _SCALARS or key in _LISTS or key == "solver.triples"
                 or key == "problem.kind" or (section == "problem" and key[8:] in _PROBLEM_TYPES))
        if not known:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if value == "":
            errors.append(f"line {lineno}: {key}: empty value")
            continue
        seen[key] = (lineno, value)

    values = {}
    for key, (lineno, value) in seen.items():
        if key.startswith("format."):
            continue
        try:
            if key in _SCALARS:
                values[key] = _SCALARS[key](value)
            elif key in _LISTS:
                values[key] = tuple(_LISTS[key](p) for p in _split_list(value))
            elif key == "solver.triples":
                raw_triples = (lineno, value)
            elif key == "problem.kind":
                values[key] = value.strip().lower()
            else:
                values[key] = _PROBLEM_TYPES[key[8:]](value)
        except (ValueError, KeyError) as exc:
            errors.append(f"line {lineno}: {key}: {exc}")

    def line_of(key):
        return seen[key][0] if key in seen else 0

    def bad(key, msg):
        ln = line_of(key)
        errors.append(f"line {ln}: {key}: {msg}" if ln else f"{key}: {msg}")

    triples = (DOUBLE,)
    if raw_triples is not None:
        try:
            triples = _parse_triples(raw_triples[1], formats)
        except (ValueError, KeyError) as exc:
            errors.append(f"line {raw_triples[0]}: solver.triples: {exc}")
            triples = ()

    kind = values.get("problem.kind", "spectra")
    params = {}
    if kind not in PROBLEM_KEYS:
        bad("problem.kind", f"must be one of {', '.join(PROBLEM_KEYS)}, got {kind!r}")
    else:
        params = dict(PROBLEM_KEYS[kind])
        for key in [k for k in values if k.startswith("problem.") and k != "problem.kind"]:
            name = key[8:]
            if name not in params:
                bad(key, f"not a parameter of problem kind {kind!r}")
            else:
                params[name] = values[key]
        if kind == "load" and not params.get("path"):
            errors.append("problem.path: required for problem kind 'load'")
        for name in ("n", "nr", "nc", "psf_size"):
            if name in params and params[name] < 2:
                bad(f"problem.{name}", "must be at least 2")
        for name in ("eta", "psf_eta"):
            if name in params and not params[name] > 0:
                bad(f"problem.{name}", "must be positive")

    method = values.get("solver.method", "mpir")
    if method not in METHODS:
        bad("solver.method", f"must be one of {', '.join(METHODS)}, got {method!r}")
    alpha2 = values.get("solver.alpha2", (1e-2,))
    if not alpha2:
        bad("solver.alpha2", "needs at least one value")
    for a in alpha2:
        if not a > 0:
            bad("solver.alpha2", f"must be positive, got {a!r}")
    mu = values.get("noise.mu_percent", (1.0,))
    if not mu:
        bad("noise.mu_percent", "needs at least one value")
    for m in mu:
        if not m >= 0:
            bad("noise.mu_percent", f"must be non-negative, got {m!r}")
    max_iters = values.get("solver.max_iters", 10)
    if max_iters < 1:
        bad("solver.max_iters", f"must be at least 1, got {max_iters}")
    zeta = values.get("solver.zeta", 1.0)
    if not 0 < zeta <= 1:
        bad("solver.zeta", f"must lie in (0, 1], got {zeta!r}")
    which = frozenset(values.get("outputs.which", OUTPUT_KINDS))
    for w in which - set(OUTPUT_KINDS):
        bad("outputs.which", f"unknown output {w!r}; choose from {', '.join(OUTPUT_KINDS)}")
    t2 = values.get("outputs.table2_iters") or tuple(k for k in (1, 5, 10) if k <= max(max_iters, 1))
    for k in t2:
        if not 1 <= k <= max_iters:
            bad("outputs.table2_iters", f"iteration {k} outside 1..{max_iters}")
    if method not in FILTER_METHODS:
        # filter factors are only modelled for the refinement-type solvers
        which = which - {"filters", "table2"}

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        problem_kind=kind, problem_params=params, mu_percent=tuple(mu),
        seed=values.get("noise.seed", 42), renoise=kind != "load" or "noise.mu_percent" in values,
        method=method, alpha2=tuple(alpha2), max_iters=max_iters, zeta=zeta,
        triples=tuple(triples) if method in ("mpir", "pl") else (DOUBLE,),
        include_air=values.get("solver.include_air", False) and method != "air",
        table2_iters=tuple(t2), directory=values.get("outputs.directory"), which=which,
        formats=formats, source=text,
    )


# -- problems ------------------------------------------------------------------

def _problem(config: ExperimentConfig, mu: float) -> InverseProblem:
    if config.problem_kind == "load":
        p = load_problem(config.problem_params["path"])
        if not config.renoise:
            return p
        return replace(p, b=p.b_exact + add_noise(p.b_exact, mu, config.seed), noise_level_percent=mu, seed=config.seed)
    return make_problem(config.problem_kind, mu=mu, seed=config.seed, **config.problem_params)


def _mu_values(config):
    if config.problem_kind == "load" and not config.renoise:
        return (float(_problem(config, 0.0).noise_level_percent),)
    return config.mu_percent


def generate_problem(config: ExperimentConfig, directory) -> Path:
    """Write the problem for the first noise level to `directory`."""
    from .problems import save_problem

    return save_problem(_problem(config, config.mu_percent[0]), directory)


# -- grid cells ----------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    method: str
    triple: PrecisionTriple | None
    alpha2: float
    mu: float

    @property
    def combo(self) -> str:
        return self.triple.label if self.triple is not None else "-"

    @property
    def stem(self) -> str:
        tag = "-".join(f.name for f in self.triple) if self.triple is not None else "na"
        return f"{self.method}_{tag}_a{self.alpha2:g}_mu{self.mu:g}"


@dataclass
class CellResult:
    cell: Cell
    iterates_csv: str
    srre: float
    std: float
    diverged: bool
    filters_csv: str | None = None
    diff_csv: str | None = None
    table2_rows: list = field(default_factory=list)


def _cells(config):
    cells = []
    for mu in _mu_values(config):
        for a in config.alpha2:
            if config.method in ("mpir", "pl"):
                cells.extend(Cell(config.method, t, a, mu) for t in config.triples)
            elif config.method == "ir":
                cells.append(Cell("ir", DOUBLE, a, mu))
            else:
                cells.append(Cell(config.method, None, a, mu))
            if config.include_air:
                cells.append(Cell("air", None, a, mu))
    return cells


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def _single_iterate_record(A, b, x, x_true):
    from .solvers import _iterate

    return _iterate("tikhonov", A, b, lambda _x: x, 1, x_true)


def _run_cell(config: ExperimentConfig, cell: Cell) -> CellResult:
    prob = _problem(config, cell.mu)
    A, b = prob.A, prob.b
    scfg = SolverConfig(cell.alpha2, config.max_iters, cell.triple or DOUBLE, config.zeta)
    P = None
    if cell.method == "mpir":
        P = build_preconditioner(A, cell.alpha2, cell.triple.pr1)
        rec = mpir_run(A, b, scfg, x_true=prob.x_true, P=P)
    elif cell.method == "ir":
        P = build_preconditioner(A, cell.alpha2, DOUBLE.pr1)
        rec = ir_run(A, b, scfg, x_true=prob.x_true, P=P)
    elif cell.method == "pl":
        P = build_preconditioner(A, cell.alpha2, cell.triple.pr1)
        rec = pl_run(A, b, P, config.max_iters, cell.triple.pr3, x_true=prob.x_true)
    elif cell.method == "landweber":
        rec = landweber_run(A, b, scfg, x_true=prob.x_true)
    elif cell.method == "air":
        rec = air_run(A, b, scfg, x_true=prob.x_true)
    else:
        rec = _single_iterate_record(A, b, tikhonov_direct(A, b, cell.alpha2), prob.x_true)

    if cell.method == "tikhonov":
        m, s = float(rec.rre_history[1]), 0.0
    elif rec.rre_history[1:].size >= 10 or rec.diverged:
        m, s = rec.srre()
    else:
        m, s = rec.srre(1, rec.n_iter)
    out = CellResult(cell, rec.to_csv(), m, s, rec.diverged)

    if P is not None and cell.method in FILTER_METHODS and ({"filters", "table2"} & config.which):
        _attach_filters(out, config, cell, A, b, P, rec)
    return out


def _attach_filters(out, config, cell, A, b, P, rec):
    f = kron_svd(A) if isinstance(A, KronOperator) else svd(A)
    sigma = f.sigma_unsorted if isinstance(A, KronOperator) else f.sigma
    K = rec.n_iter
    if cell.method == "pl":
        theory = pl_filters_recursive(sigma, P, K, cell.triple.pr3)
    else:
        theory = mpir_filters(sigma, P, K, cell.triple)
    V = P if isinstance(A, KronOperator) else P.V_M
    eff = effective_filter_set(rec.iterates, f, V, b)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "j", "phi", "omega", "absdiff", "flagged"])
    for k in range(K + 1):
        for j in range(sigma.size):
            ph, om = theory.values[k, j], eff.values[k, j]
            w.writerow([k, j + 1, _fmt(ph), _fmt(om), _fmt(abs(ph - om)), int(eff.flagged[j])])
    out.diff_csv = buf.getvalue()
    out.filters_csv = theory.to_csv() + eff.to_csv().split("\n", 1)[1]
    for k in config.table2_iters:
        if k <= K:
            st = filter_diff_stats(theory.values[k], eff.values[k]).as_row()
        else:
            st = (float("nan"),) * 4
        out.table2_rows.append([cell.combo, k, *map(_fmt, st), _fmt(cell.alpha2), _fmt(cell.mu)])


# -- output --------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class ExperimentResult:
    files: list
    diverged: list

    @property
    def any_diverged(self) -> bool:
        return bool(self.diverged)


def run_experiment(config: ExperimentConfig, directory=None, parallel: bool = False,
                   max_workers: int | None = None) -> ExperimentResult:
    """Run every grid cell and write the requested outputs.

    Divergence is recorded in the outputs and never stops the grid.  With
    `parallel` the cells run in a process pool; results are written in grid
    order either way, so outputs do not depend on scheduling.
    """
    from . import __version__

    out = Path(directory or config.directory or "results")
    cells = _cells(config)
    if parallel and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as ex:
            results = list(ex.map(_run_cell, [config] * len(cells), cells))
    else:
        results = [_run_cell(config, c) for c in cells]

    written = {}

    def emit(rel, text):
        _atomic_write(out / rel, text)
        written[rel] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    for r in results:
        if "iterates" in config.which:
            emit(f"iterates/{r.cell.stem}.csv", r.iterates_csv)
        if "filters" in config.which and r.filters_csv is not None:
            emit(f"filters/{r.cell.stem}_filters.csv", r.filters_csv)
            emit(f"filters/{r.cell.stem}_diff.csv", r.diff_csv)
    if "table2" in config.which:
        rows = [row for r in results for row in r.table2_rows]
        emit("table2.csv", _csv_text(["combo", "iter", "mean", "min", "max", "std", "alpha2", "mu"], rows))
    if "table3" in config.which:
        rows = [[r.cell.method, r.cell.combo, _fmt(r.cell.alpha2), _fmt(r.cell.mu), _fmt(r.srre),
                 _fmt(r.std), int(r.diverged)] for r in results]
        emit("table3.csv", _csv_text(["method", "combo", "alpha2", "mu", "srre", "std", "diverged"], rows))

    lines = [f"config_sha256 = {config.digest()}", f"tool_version = {__version__}", f"cells = {len(cells)}"]
    lines += [f"file {rel} = {h}" for rel, h in sorted(written.items())]
    emit("manifest", "\n".join(lines) + "\n")
    diverged = [r.cell for r in results if r.diverged]
    return ExperimentResult(files=sorted(out / rel for rel in written), diverged=diverged)


# -- report --------------------------------------------------------------------

def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _short(v: str) -> str:
    x = float(v)
    return f"{x:.3e}" if np.isfinite(x) else str(x)


def report(directory) -> str:
    """Pivot table2.csv and table3.csv of a results directory into text tables.

    The layouts are also written to ``table2_report.txt`` and
    ``table3_report.txt`` next to the CSVs.
    """
    d = Path(directory)
    sections = []
    t2 = d / "table2.csv"
    if t2.exists():
        rows = _read_csv(t2)
        iters = sorted({int(r["iter"]) for r in rows})
        text = []
        for key in dict.fromkeys((r["alpha2"], r["mu"]) for r in rows):
            text.append(f"alpha2 = {float(key[0]):g}, mu = {float(key[1]):g}%")
            head = ["combo"] + [f"{s}@{k}" for k in iters for s in ("mean", "min", "max", "std")]
            text.append("  ".join(f"{h:>12}" for h in head))
            sub = [r for r in rows if (r["alpha2"], r["mu"]) == key]
            for combo in dict.fromkeys(r["combo"] for r in sub):
                cells = [combo]
                for k in iters:
                    hit = [r for r in sub if r["combo"] == combo and int(r["iter"]) == k]
                    cells += [_short(hit[0][s]) for s in ("mean", "min", "max", "std")] if hit else ["-"] * 4
                text.append("  ".join(f"{c:>12}" for c in cells))
            text.append("")
        body = "\n".join(text)
        _atomic_write(d / "table2_report.txt", body)
        sections.append(body)
    t3 = d / "table3.csv"
    if t3.exists():
        rows = _read_csv(t3)
        mus = list(dict.fromkeys(r["mu"] for r in rows))
        head = ["alpha2", "method", "combo"] + [f"{s}@{float(m):g}%" for m in mus for s in ("sRRE", "std")]
        text = ["  ".join(f"{h:>12}" for h in head)]
        keys = dict.fromkeys((r["alpha2"], r["method"], r["combo"]) for r in rows)
        for a, meth, combo in keys:
            cells = [f"{float(a):g}", meth, combo]
            for m in mus:
                hit = [r for r in rows if (r["alpha2"], r["method"], r["combo"], r["mu"]) == (a, meth, combo, m)]
                if hit:
                    flag = "*" if hit[0]["diverged"] == "1" else ""
                    cells += [_short(hit[0]["srre"]) + flag, _short(hit[0]["std"])]
                else:
                    cells += ["-", "-"]
            text.append("  ".join(f"{c:>12}" for c in cells))
        text.append("(* diverged)")
        body = "\n".join(text) + "\n"
        _atomic_write(d / "table3_report.txt", body)
        sections.append(body)
    if not sections:
        raise FileNotFoundError(f"no table2.csv or table3.csv in {d}")
    return "\n".join(sections)
