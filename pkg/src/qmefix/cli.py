"""Command-line runner that writes the model data behind the figures and tables.

Subcommands ``jc`` and ``rlm`` produce occupation and coherence curves for one
algorithm, ``poles`` writes a pole table and ``memexp`` a memory-expansion
coefficient table. Every output starts with ``#`` header lines recording the
full configuration and the library version.
"""

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import MaxIterExceeded, QmeError, WrongRegime
from .evolve import solve_timelocal
from .fixedpoint import (SuperopTrajectory, stationary_iterate,
                         transient_iterate)
from .liouville import from_json, hermicity_project, spectral_decompose, to_json, vectorize
from .memexp import fcoeff_table, gradient_expansion_stationary, write_fcoeff_csv
from .model_jc import (JcParams, jc_g_infty, jc_g_infty_reg, jc_kernel_hat, jc_kernel_split,
                       jc_propagator, singular_times)
from .model_rlm import (RlmParams, rlm_g_infty, rlm_kernel_hat, rlm_kernel_split,
                        rlm_propagator)
from .spectral import find_poles, seed_grid, semigroup_evolution, slippage, write_pole_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

ALGORITHMS = ("exact", "semigroup-ginf", "semigroup-k0", "semigroup-ginf-reg", "slip",
              "stationary-iterate", "transient-iterate", "poles", "memexp", "gradient")
STARTS = ("k0", "ginf", "random", "file")

DEFAULTS = {
    "model": "jc",
    "Gamma_over_gamma": 0.495,
    "eps": 1.0,
    "Gamma": 1.0,
    "T": 0.1 / (2 * np.pi),
    "detuning": 2 * np.pi,
    "mu": 0.0,
    "alg": "exact",
    "start": "k0",
    "start_file": None,
    "iters": 3,
    "tol": 1e-10,
    "max_iter": 500,
    "accelerate": "none",
    "block": "auto",
    "order": 3,
    "kmax": 6,
    "nmax": None,
    "tmax": 10.0,
    "nodes": 2000,
    "rho0": "excited",
    "seed": None,
    "out": None,
    "format": "csv",
}


class ValidationError(ValueError):
    """Invalid configuration; maps to exit status 2."""


@dataclass
class RunConfig:
    """A complete, validated-on-demand description of one run."""

    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def header_lines(self):
        lines = [f"qmefix {__version__}", f"command = {self.command}"]
        model = self.values.get("model")
        if model is not None:
            lines.append(f"units: {'gamma = 1' if model == 'jc' else 'Gamma = 1'}")
        for key in sorted(self.values):
            lines.append(f"{key} = {self.values[key]!r}")
        return lines


def parse_config_file(path):
    """``key = value`` lines with ``#`` comments; values are parsed as numbers when possible."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line without '=': {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = _coerce(value)
    return out


def _coerce(text):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def _build_parser():
    parser = argparse.ArgumentParser(prog="qmefix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qmefix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dynamics=True):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int)
        if dynamics:
            p.add_argument("--alg", choices=ALGORITHMS)
            p.add_argument("--start", choices=STARTS)
            p.add_argument("--start-file", dest="start_file")
            p.add_argument("--iters", type=int)
            p.add_argument("--tol", type=float)
            p.add_argument("--max-iter", dest="max_iter", type=int)
            p.add_argument("--accelerate", choices=("none", "anderson"))
            p.add_argument("--block", choices=("auto", "all", "occupations"))
            p.add_argument("--order", type=int, help="truncation order for --alg gradient")
            p.add_argument("--kmax", type=int, help="largest order for --alg memexp")
            p.add_argument("--tmax", type=float)
            p.add_argument("--nodes", type=int)
            p.add_argument("--rho0", help="'excited' or four row-major entries 'r00,r01,r10,r11'")

    def jc_params(p):
        p.add_argument("--Gamma-over-gamma", dest="Gamma_over_gamma", type=float)
        p.add_argument("--eps", type=float)

    def rlm_params(p):
        p.add_argument("--Gamma", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--detuning", type=float, help="eps - mu")
        p.add_argument("--mu", type=float)

    jc = sub.add_parser("jc", help="Jaynes-Cummings model dynamics")
    jc_params(jc)
    common(jc)
    rlm = sub.add_parser("rlm", help="resonant level model dynamics")
    rlm_params(rlm)
    common(rlm)
    poles = sub.add_parser("poles", help="eigenvalue poles of the resolvent")
    poles.add_argument("--model", choices=("jc", "rlm"))
    jc_params(poles)
    rlm_params(poles)
    common(poles, dynamics=False)
    mem = sub.add_parser("memexp", help="memory-expansion coefficient table")
    mem.add_argument("--kmax", type=int)
    mem.add_argument("--nmax", type=int)
    common(mem, dynamics=False)
    return parser


def config_from_args(argv):
    """Parse ``argv`` into a :class:`RunConfig` (file values, then flags)."""
    args = vars(_build_parser().parse_args(argv))
    command = args.pop("command")
    path = args.pop("config", None)
    values = dict(DEFAULTS)
    if command in ("jc", "rlm"):
        values["model"] = command
    if command == "memexp":
        values["alg"] = "memexp"
    if command == "poles":
        values["alg"] = "poles"
    if path:
        file_values = parse_config_file(path)
        unknown = set(file_values) - set(DEFAULTS)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    values.update({k: v for k, v in args.items() if v is not None})
    return RunConfig(command, _relevant(command, values))


_KEYS = {
    "jc": ("Gamma_over_gamma", "eps"),
    "rlm": ("Gamma", "T", "detuning", "mu"),
}
_RUN_KEYS = ("alg", "start", "start_file", "iters", "tol", "max_iter", "accelerate", "block",
             "order", "kmax", "tmax", "nodes", "rho0", "seed", "out", "format")


def _relevant(command, values):
    if command == "memexp":
        keys = ("alg", "kmax", "nmax", "seed", "out", "format")
        return {k: values[k] for k in keys}
    model = values["model"]
    if command == "poles":
        keys = ("model", "alg") + _KEYS.get(model, ()) + ("seed", "out", "format")
        return {k: values[k] for k in keys if k in values}
    keys = ("model",) + _KEYS.get(model, ()) + _RUN_KEYS
    return {k: values[k] for k in keys if k in values}


def _jc_params(config):
    return JcParams.from_ratio(float(config.Gamma_over_gamma), eps=float(config.eps))


def _rlm_params(config):
    return RlmParams(float(config.Gamma), float(config.T), eps=float(config.mu) + float(config.detuning),
                     mu=float(config.mu))


def validate(config):
    """Diagnostics for ``config``; an empty list means the run may proceed."""
    out = []
    v = config.values
    if config.command == "memexp":
        if int(v["kmax"]) < 1:
            out.append("kmax must be >= 1")
        return out
    model = v.get("model")
    if model not in ("jc", "rlm"):
        return [f"unknown model {model!r}"]
    if v.get("alg") not in ALGORITHMS:
        out.append(f"unknown algorithm {v.get('alg')!r}")
    if model == "jc":
        if not float(v["Gamma_over_gamma"]) > 0:
            out.append("Gamma/gamma must be > 0")
        if not np.isfinite(float(v["eps"])):
            out.append("eps must be finite")
    else:
        for key in ("Gamma", "T"):
            if not float(v[key]) > 0:
                out.append(f"{key} must be > 0")
    if int(v.get("nodes", 2)) < 2:
        out.append("nodes must be >= 2")
    if not float(v.get("tmax", 1.0)) > 0:
        out.append("tmax must be > 0")
    if v.get("start") == "random" and v.get("seed") is None:
        out.append("--start random requires --seed")
    if v.get("start") == "file" and not v.get("start_file"):
        out.append("--start file requires --start-file")
    if v.get("format") not in ("csv", "json"):
        out.append("format must be csv or json")
    if out:
        return out
    alg = v["alg"]
    if model == "jc":
        overdamped = _jc_params(config).overdamped
        if alg == "semigroup-ginf-reg" and overdamped:
            out.append("semigroup-ginf-reg needs the underdamped regime (gamma < 2 Gamma)")
        if alg in ("semigroup-ginf", "slip") and not overdamped:
            out.append(f"{alg} needs the overdamped regime (gamma >= 2 Gamma)")
        if v.get("start") == "ginf" and alg in ("stationary-iterate", "transient-iterate") and not overdamped:
            out.append("start ginf needs the overdamped regime (gamma >= 2 Gamma)")
    elif alg in ("semigroup-ginf-reg",):
        out.append(f"{alg} is defined for the Jaynes-Cummings model only")
    try:
        _initial_state(v.get("rho0", "excited"))
    except ValidationError as exc:
        out.append(str(exc))
    return out


def _initial_state(text):
    if text == "excited":
        return np.diag([0.0, 1.0]).astype(complex)
    try:
        entries = [complex(part.replace(" ", "")) for part in str(text).split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse rho0 {text!r}") from None
    if len(entries) != 4:
        raise ValidationError("rho0 needs four entries r00,r01,r10,r11")
    rho = np.array(entries).reshape(2, 2)
    if abs(np.trace(rho) - 1) > 1e-12 or np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValidationError("rho0 must be Hermitian with unit trace")
    return rho


class _Model:
    """The pieces of one model needed by the runner."""

    def __init__(self, config):
        self.name = config.model
        if self.name == "jc":
            self.p = _jc_params(config)
            self.kernel = jc_kernel_split(self.p)
            self.khat = lambda E: jc_kernel_hat(E, self.p)
            self.propagator = lambda t: jc_propagator(t, self.p)
            self.overdamped = self.p.overdamped
        else:
            self.p = _rlm_params(config)
            self.kernel = rlm_kernel_split(self.p)
            self.khat = lambda E: rlm_kernel_hat(E, self.p)
            self.propagator = lambda t: rlm_propagator(t, self.p)
            self.overdamped = True

    def g_infty(self):
        if self.name == "jc":
            return jc_g_infty(self.p)
        return rlm_g_infty(self.p)

    def g_infty_reg(self):
        return jc_g_infty_reg(self.p)


def _observables(vectors):
    # occupation <1|rho|1> and Re <0|rho|1> from row-major vectors
    return vectors[:, 3].real, vectors[:, 1].real


def _start(config, model):
    start = config.start
    if start == "k0":
        return np.asarray(model.khat(0.0), dtype=complex)
    if start == "ginf":
        return model.g_infty()
    if start == "random":
        rng = np.random.default_rng(int(config.seed))
        raw = rng.uniform(-1, 1, (4, 4)) + 1j * rng.uniform(-1, 1, (4, 4))
        return hermicity_project(raw)
    with open(config.start_file) as fh:
        return from_json(fh.read())


def _semigroup_columns(x, times, rho, name):
    vecs = semigroup_evolution(x, times) @ vectorize(rho)
    occ, coh = _observables(vecs)
    return {f"{name}_occ": occ, f"{name}_coh": coh}


def _dynamics(config):
    model = _Model(config)
    times = np.linspace(0.0, float(config.tmax), int(config.nodes))
    rho = _initial_state(config.rho0)
    exact = np.array([model.propagator(t) @ vectorize(rho) for t in times])
    occ, coh = _observables(exact)
    columns = {"t": times, "exact_occ": occ, "exact_coh": coh}
    extras = {}
    alg = config.alg
    if alg == "semigroup-ginf":
        columns.update(_semigroup_columns(model.g_infty(), times, rho, "ginf"))
    elif alg == "semigroup-k0":
        columns.update(_semigroup_columns(model.khat(0.0), times, rho, "k0"))
    elif alg == "semigroup-ginf-reg":
        columns.update(_semigroup_columns(model.g_infty_reg(), times, rho, "ginf_reg"))
    elif alg == "slip":
        g = model.g_infty()
        reference = spectral_decompose(g)
        poles = find_poles(model.khat, list(reference.eigenvalues), reference=reference)
        s = slippage([r for r in poles if r.sampled])
        vecs = semigroup_evolution(g, times) @ (s @ vectorize(rho))
        o, c = _observables(vecs)
        columns.update({"slip_occ": o, "slip_coh": c})
        columns.update(_semigroup_columns(g, times, rho, "ginf"))
    elif alg == "stationary-iterate":
        accelerate = None if config.accelerate == "none" else config.accelerate
        x, report = stationary_iterate(model.kernel, _start(config, model), tol=float(config.tol),
                                       max_iter=int(config.max_iter), accelerate=accelerate)
        columns.update(_semigroup_columns(x, times, rho, "iterated"))
        extras = {"generator": json.loads(to_json(x)), "report": json.loads(report.to_json())}
    elif alg == "transient-iterate":
        g0 = SuperopTrajectory.constant(_start(config, model), times[-1], len(times))
        columns.update(_semigroup_columns(g0.values[0], times, rho, "g0"))
        block = config.block
        if block == "auto":
            block = "all" if model.overdamped else "occupations"
        iterates, report = transient_iterate(model.kernel, g0, int(config.iters),
                                             block=[0, 3] if block == "occupations" else None)
        for n, g in enumerate(iterates, 1):
            o, c = _observables(solve_timelocal(g, rho).vectors)
            columns[f"g{n}_occ"] = o
            if block == "all":
                columns[f"g{n}_coh"] = c
        extras = {"report": json.loads(report.to_json())}
        if model.name == "jc" and not model.overdamped:
            extras["singular_times"] = [float(t) for t in singular_times(model.p, t_max=times[-1])]
    elif alg == "gradient":
        exact_g = model.g_infty()
        rows = []
        for k in range(int(config.order) + 1):
            g = gradient_expansion_stationary(model.khat, k)
            rows.append((k, float(np.max(np.abs(g - exact_g)))))
        return {"order": [r[0] for r in rows], "max_error": [r[1] for r in rows]}, {}
    elif alg == "poles":
        return None, {"poles": _pole_records(config)}
    elif alg == "memexp":
        return None, {"fcoeff": fcoeff_table(int(config.kmax))}
    return columns, extras


def _pole_records(config):
    model = _Model(config)
    if model.name == "jc":
        p = model.p
        span = abs(p.eps) + 3 * p.gamma
        seeds = seed_grid((-span, span), (-3 * p.gamma, 0.5 * p.gamma))
    else:
        p = model.p
        span = abs(p.eps - p.mu) + abs(p.eps) + 3 * p.Gamma
        seeds = seed_grid((-span, span), (-2 * p.Gamma, 0.5 * p.Gamma))
    reference = None
    if model.overdamped:
        reference = spectral_decompose(model.g_infty())
    return find_poles(model.khat, seeds, reference=reference)


def _format_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_columns(columns, stream, header):
    for line in header:
        stream.write(f"# {line}\n")
    writer = csv.writer(stream, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        writer.writerow([_format_value(v) for v in row])


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _render(config, columns, extras):
    header = config.header_lines()
    stream = io.StringIO()
    if config.format == "json":
        doc = {"header": header}
        if columns is not None:
            doc["columns"] = _to_jsonable(columns)
        if "poles" in extras:
            doc["poles"] = [{"energy": [r.energy.real, r.energy.imag], "branch": r.branch,
                             "sampled": r.sampled, "slope": [r.slope.real, r.slope.imag]}
                            for r in extras["poles"]]
        elif "fcoeff" in extras:
            doc["fcoeff"] = [{"n": n, "p": list(p), "value": v} for (n, p), v in extras["fcoeff"].items()]
        else:
            doc.update(_to_jsonable(extras))
        stream.write(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    elif "poles" in extras:
        write_pole_csv(extras["poles"], stream, header)
    elif "fcoeff" in extras:
        write_fcoeff_csv(extras["fcoeff"], stream, header)
    else:
        _write_columns(columns, stream, header)
    return stream.getvalue()


def run(config):
    """Execute ``config``; returns the exit status and writes the output."""
    diagnostics = validate(config)
    if diagnostics:
        for d in diagnostics:
            print(f"qmefix: invalid configuration: {d}", file=sys.stderr)
        return EXIT_INVALID
    try:
        if config.command == "memexp":
            nmax = config.nmax
            table = fcoeff_table(int(config.kmax), None if nmax is None else int(nmax))
            columns, extras = None, {"fcoeff": table}
        elif config.command == "poles":
            columns, extras = None, {"poles": _pole_records(config)}
        else:
            columns, extras = _dynamics(config)
    except MaxIterExceeded as exc:
        print(f"qmefix: numerical failure: {exc}; last residuals "
              f"{exc.report.residuals[-3:] if exc.report else []}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QmeError, WrongRegime, OverflowError, np.linalg.LinAlgError) as exc:
        print(f"qmefix: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    text = _render(config, columns, extras)
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:
            # reader closed early (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return EXIT_OK


def main(argv=None):
    try:
        config = config_from_args(sys.argv[1:] if argv is None else argv)
    except (ValidationError, OSError) as exc:
        print(f"qmefix: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
