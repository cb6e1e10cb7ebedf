"""Configuration-driven experiment runner.

Configs are flat "key = value" text files ('#' starts a comment).  Every run
writes its CSV outputs plus a manifest listing the config echo, per-file
checksums and wall-clock duration.  Exit codes: 0 success, 1 validation error,
2 runtime error, 3 lemma-counterexample fatal diagnostic.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

from . import __version__
from .estimators import (
    DecaySeries,
    Observable,
    default_fit_floor,
    estimate_persistence,
    estimate_relaxation,
    fit_exponential,
)
from .exact import east1d_gap
from .lattice import (
    Configuration,
    Delta,
    MeasureSpec,
    ModelParams,
    ProductBernoulli,
    Site,
    Window,
)
from .sim import simulate
from .streams import derive_seed, derived_generator
from .theory import (
    compute_constants,
    fk_cascade_probe,
    validate_path,
    verify_oriented_path_lemma,
)
from .lattice import sample_initial

KINDS = (
    "simulate",
    "persistence",
    "relaxation",
    "gap",
    "constants",
    "verify-lemma",
    "fk-probe",
)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field '{field_name}': {message}")
        self.field_name = field_name


class LemmaCounterexampleError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    raw: dict[str, str]
    params: Optional[ModelParams] = None
    window: Optional[Window] = None
    exterior: int = 1
    measure: Optional[MeasureSpec] = None
    times: tuple[float, ...] = ()
    n: int = 1000
    n_outer: int = 200
    n_inner: int = 100
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    out_dir: str = "out"
    horizon: float = 0.0
    site: Optional[Site] = None
    alpha: float = 0.2
    t: float = 10.0
    gamma: float = 1.0
    delta_const: float = 0.5
    c_const: float = 0.1
    lambda_n: int = 12
    n_values: tuple[int, ...] = ()


def _parse_ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.split())


def _parse_floats(value: str) -> tuple[float, ...]:
    return tuple(float(v) for v in value.split())


def _parse_measure(value: str, config: ExperimentConfig) -> MeasureSpec:
    parts = value.split()
    if parts[0] == "bernoulli":
        if len(parts) != 2:
            raise ConfigError("measure", "expected 'bernoulli <q>'")
        q = float(parts[1])
        if not (0.0 <= q < 1.0):
            raise ConfigError("measure", f"bernoulli parameter must lie in [0,1), got {q}")
        return ProductBernoulli(q)
    if parts[0] == "delta-zeros":
        if config.window is None:
            raise ConfigError("measure", "delta-zeros requires window_lower/window_upper")
        d = config.window.d
        coords = [int(v) for v in parts[1:]]
        if len(coords) % d != 0:
            raise ConfigError("measure", f"zero sites must come in groups of {d} coordinates")
        zeros = [tuple(coords[i : i + d]) for i in range(0, len(coords), d)]
        cfg = Configuration.with_zeros(config.window, zeros, exterior=config.exterior)
        return Delta(cfg)
    raise ConfigError("measure", f"unknown measure '{parts[0]}' (use bernoulli | delta-zeros)")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a flat key=value config."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value

    kind = raw.get("kind")
    if kind is None:
        raise ConfigError("kind", "missing (required)")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    config = ExperimentConfig(kind=kind, raw=dict(raw))

    if kind != "constants" or "d" in raw or "p" in raw:
        try:
            d = int(raw.get("d", "1"))
            p = float(raw.get("p", "0.5"))
        except ValueError as e:
            raise ConfigError("d/p", str(e))
        if not (0.0 < p < 1.0):
            raise ConfigError("p", f"must lie in (0,1), got {p}")
        if d < 1:
            raise ConfigError("d", f"must be >= 1, got {d}")
        config.params = ModelParams(d, p)

    if "exterior" in raw:
        if raw["exterior"] not in ("0", "1"):
            raise ConfigError("exterior", f"must be 0 or 1, got {raw['exterior']!r}")
        config.exterior = int(raw["exterior"])

    if "window_lower" in raw or "window_upper" in raw:
        if not ("window_lower" in raw and "window_upper" in raw):
            raise ConfigError("window", "both window_lower and window_upper are required")
        try:
            lower = _parse_ints(raw["window_lower"])
            upper = _parse_ints(raw["window_upper"])
            config.window = Window(lower, upper)
        except ValueError as e:
            raise ConfigError("window", str(e))
        if config.params and config.window.d != config.params.d:
            raise ConfigError("window", "window dimension does not match d")

    if "measure" in raw:
        config.measure = _parse_measure(raw["measure"], config)

    for key, attr, conv in (
        ("times", "times", _parse_floats),
        ("n", "n", int),
        ("n_outer", "n_outer", int),
        ("n_inner", "n_inner", int),
        ("seed", "seed", int),
        ("threads", "threads", int),
        ("horizon", "horizon", float),
        ("alpha", "alpha", float),
        ("t", "t", float),
        ("gamma", "gamma", float),
        ("delta", "delta_const", float),
        ("c", "c_const", float),
        ("lambda_N", "lambda_n", int),
        ("N", "n_values", _parse_ints),
        ("out", "out_dir", str),
    ):
        if key in raw:
            try:
                setattr(config, attr, conv(raw[key]))
            except ValueError as e:
                raise ConfigError(key, str(e))

    if "site" in raw:
        coords = _parse_ints(raw["site"])
        if config.params and len(coords) != config.params.d:
            raise ConfigError("site", f"expected {config.params.d} coordinates")
        config.site = coords

    # kind-specific validation
    need = {
        "simulate": ("window", "measure"),
        "persistence": ("window", "measure", "site"),
        "relaxation": ("window", "measure", "site"),
        "gap": (),
        "constants": (),
        "verify-lemma": ("window", "measure", "site"),
        "fk-probe": ("window", "measure", "site"),
    }[kind]
    for attr in need:
        if getattr(config, attr) is None:
            raise ConfigError(attr, f"missing (required for kind {kind!r})")
    if kind in ("persistence", "relaxation") and not config.times:
        raise ConfigError("times", "time grid must be non-empty")
    if kind == "gap" and not config.n_values:
        raise ConfigError("N", "missing (required for kind 'gap')")
    if kind in ("persistence", "relaxation", "verify-lemma", "fk-probe") and config.site is not None:
        if config.window is not None and config.site not in config.window:
            raise ConfigError("site", f"site {config.site} outside window")
    if config.n <= 0 or config.n_outer <= 0 or config.n_inner <= 0:
        raise ConfigError("n", "sample counts must be positive")
    return config


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


@dataclass
class RunManifest:
    config_echo: dict[str, str]
    version: str
    checksums: dict[str, str]
    duration_s: float
    status: str

    def to_text(self) -> str:
        lines = [f"version = {self.version}", f"status = {self.status}"]
        for k in sorted(self.config_echo):
            lines.append(f"config.{k} = {self.config_echo[k]}")
        for name in sorted(self.checksums):
            lines.append(f"sha256.{name} = {self.checksums[name]}")
        lines.append(f"duration_s = {self.duration_s:.3f}")
        return "\n".join(lines) + "\n"


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _series_manifest(config: ExperimentConfig) -> dict:
    return {
        "kind": config.kind,
        "seed": config.seed,
        "n": config.n,
        "window_lower": list(config.window.lower) if config.window else None,
        "window_upper": list(config.window.upper) if config.window else None,
        "measure": config.raw.get("measure"),
    }


def _run_outputs(config: ExperimentConfig) -> list[str]:
    """Execute the experiment; returns the list of files written."""
    out = config.out_dir
    written: list[str] = []
    kind = config.kind

    if kind == "simulate":
        rng = derived_generator(config.seed, "simulate-init")
        init = sample_initial(config.measure, config.window, rng)
        log = simulate(config.params, init, config.horizon, derive_seed(config.seed, "simulate"))
        written.append(_write(out, "events.csv", log.to_csv()))

    elif kind == "persistence":
        series = estimate_persistence(
            config.params, config.measure, config.site, config.times, config.n,
            config.window, config.seed,
        )
        written.append(_write(out, "persistence.csv", series.to_csv(_series_manifest(config))))
        try:
            fit = fit_exponential(series, default_fit_floor(series))
            written.append(_write(out, "persistence_fit.txt", fit.summary_line() + "\n"))
        except ValueError:
            written.append(_write(out, "persistence_fit.txt", "fit_failed=too_few_points\n"))

    elif kind == "relaxation":
        series = estimate_relaxation(
            config.params, config.measure, Observable.spin(config.site), config.times,
            config.n_outer, config.n_inner, config.window, config.seed, config.gamma,
        )
        written.append(_write(out, "relaxation.csv", series.to_csv(_series_manifest(config))))
        try:
            fit = fit_exponential(series, default_fit_floor(series))
            written.append(_write(out, "relaxation_fit.txt", fit.summary_line() + "\n"))
        except ValueError:
            written.append(_write(out, "relaxation_fit.txt", "fit_failed=too_few_points\n"))

    elif kind == "gap":
        lines = ["N,gap"]
        for N in config.n_values:
            lines.append(f"{N},{east1d_gap(config.params.p, N):.17g}")
        written.append(_write(out, "gap.csv", "\n".join(lines) + "\n"))

    elif kind == "constants":
        p = config.params.p if config.params else 0.5
        d = config.params.d if config.params else 1
        lam = east1d_gap(p, config.lambda_n)
        lam_prev = east1d_gap(p, config.lambda_n - 1) if config.lambda_n > 1 else lam
        report = compute_constants(p, d, config.delta_const, config.c_const, lam)
        text = report.to_text() + f"lambda_pp_cauchy_increment = {abs(lam - lam_prev)!r}\n"
        written.append(_write(out, "constants.txt", text))

    elif kind == "verify-lemma":
        rows = ["seed,t,alpha,hypothesis_held,found,path_length"]
        counterexample = False
        for r in range(config.n):
            rng = derived_generator(config.seed, "lemma-init", r)
            init = sample_initial(config.measure, config.window, rng)
            run_seed = derive_seed(config.seed, "lemma-sim", r)
            log = simulate(config.params, init, config.t, run_seed)
            res = verify_oriented_path_lemma(log, config.t, config.alpha, config.site)
            if res.hypothesis_held and not res.found:
                counterexample = True
            if res.found and not validate_path(res, log, config.t, config.alpha, config.site):
                counterexample = True
            rows.append(
                f"{run_seed},{config.t:.17g},{config.alpha:.17g},"
                f"{int(res.hypothesis_held)},{int(res.found)},{len(res.path)}"
            )
        written.append(_write(out, "lemma.csv", "\n".join(rows) + "\n"))
        if counterexample:
            raise LemmaCounterexampleError(
                "oriented-path search failed on a hypothesis-holding log; "
                "this contradicts a proven statement (implementation bug)"
            )

    elif kind == "fk-probe":
        res = fk_cascade_probe(
            config.params, config.measure, config.site, config.delta_const,
            config.t, config.n, config.window, config.seed,
        )
        rows = ["step,site_from,site_to,probability,halfwidth"]
        for i in range(config.params.d):
            rows.append(
                f"{i + 1},{';'.join(map(str, res.sites[i]))},"
                f"{';'.join(map(str, res.sites[i + 1]))},"
                f"{res.probabilities[i]:.17g},{res.halfwidths[i]:.17g}"
            )
        written.append(_write(out, "fk_probe.csv", "\n".join(rows) + "\n"))

    return written


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Dispatch, write outputs, and always leave a manifest behind."""
    os.makedirs(config.out_dir, exist_ok=True)
    start = time.monotonic()
    status = "ok"
    written: list[str] = []
    err: Optional[BaseException] = None
    try:
        written = _run_outputs(config)
    except LemmaCounterexampleError as e:
        status = "lemma-counterexample"
        err = e
    except Exception as e:  # noqa: BLE001 - manifest must record handled errors
        status = f"error: {e}"
        err = e
    manifest = RunManifest(
        config_echo=dict(config.raw),
        version=__version__,
        checksums={os.path.basename(p): _sha256(p) for p in written},
        duration_s=time.monotonic() - start,
        status=status,
    )
    _write(config.out_dir, "manifest.txt", manifest.to_text())
    if err is not None:
        raise err
    return manifest


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="east-lab", description="East model simulation and verification harness"
    )
    parser.add_argument("config", help="path to a flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="override the output directory")
    parser.add_argument("--threads", type=int, default=None, help="override the thread count")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 1

    try:
        config = parse_config(text)
    except ConfigError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1

    if args.seed is not None:
        config.seed = args.seed
        config.raw["seed"] = str(args.seed)
    if args.out is not None:
        config.out_dir = args.out
        config.raw["out"] = args.out
    if args.threads is not None:
        config.threads = args.threads

    try:
        run_experiment(config)
    except LemmaCounterexampleError as e:
        print(f"fatal diagnostic: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001
        print(f"runtime error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
