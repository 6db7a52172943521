"""``mstat`` command line.

Exit status: 0 when no alarm is raised, 2 on an alarm, 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import simulation as sim
from .io import (ConfigError, DataFormatError, MomentsCache, RunConfig, cache_key, load_csv,
                 write_series)
from .kernels import KernelSpec, median_bandwidth
from .moments import NullMoments, null_moments
from .offline import DetectionReport, build_offline_blocks, scan
from .online import OnlineDetector
from .thresholds import ThresholdError, offline_threshold_spec, online_threshold_spec

log = logging.getLogger("mstat")

EXIT_OK, EXIT_ERROR, EXIT_ALARM = 0, 1, 2

EXPERIMENTS = {
    "sl": "offline null significance levels (theory vs simulation)",
    "power": "offline power of M, Hotelling T^2 and GLR per case",
    "arl": "online mean run length at the analytic threshold per null",
    "edd": "online expected detection delay per case",
    "sweep": "online detection delay over a grid of window sizes",
}


def _emit(doc: dict, cfg: RunConfig, series: dict | None = None) -> None:
    text = json.dumps(doc, indent=2, default=_json_default)
    if cfg.out and cfg.format == "csv" and series:
        write_series(cfg.out, series)
    elif cfg.out:
        Path(cfg.out).write_text(text + "\n")
    print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# --- shared pieces -----------------------------------------------------------


def _kernel(cfg: RunConfig, reference: np.ndarray) -> KernelSpec:
    # the median trick only ever sees reference data
    if cfg.bandwidth == "median":
        return KernelSpec(median_bandwidth(reference, seed=cfg.seed))
    return KernelSpec(float(cfg.bandwidth))


def _moments(cfg: RunConfig, reference: np.ndarray, spec: KernelSpec, block_sizes) -> NullMoments:
    cache = MomentsCache(cfg.moments_cache) if cfg.moments_cache else None
    key = cache_key(reference, spec.bandwidth, cfg.n_draws, cfg.seed)
    if cache is not None:
        hit = cache.get(key, cfg.N, block_sizes)
        if hit is not None:
            log.info("moments cache hit %s", key)
            return hit
    m = null_moments(reference, spec, cfg.N, block_sizes, n_draws=cfg.n_draws, seed=cfg.seed,
                     workers=cfg.workers)
    if cache is not None:
        cache.put(key, m)
    return m


def _load_moments_file(path) -> NullMoments:
    return NullMoments.from_json(Path(path).read_text())


# --- commands --------------------------------------------------------------


def cmd_threshold(cfg: RunConfig) -> int:
    kappa = None
    if cfg.corrected:
        if cfg.params.get("moments"):
            m = _load_moments_file(cfg.params["moments"])
        elif cfg.ref:
            ref = load_csv(cfg.ref).rows
            if cfg.N is None:
                raise ConfigError("corrected thresholds from --ref need N")
            blocks = range(2, cfg.B_max + 1) if cfg.alpha is not None else [cfg.B0]
            m = _moments(cfg, ref, _kernel(cfg, ref), blocks)
        else:
            raise ConfigError("corrected thresholds need --ref data or a moments file")
        kappa = m.skew_by_B if cfg.alpha is not None else m.skew_by_B[cfg.B0]
    if cfg.alpha is not None:
        ts = offline_threshold_spec(cfg.alpha, cfg.B_max, kappa, cfg.convention)
    else:
        ts = online_threshold_spec(cfg.arl, cfg.B0, kappa)
    _emit(ts.to_dict(), cfg)
    return EXIT_OK


def cmd_moments(cfg: RunConfig) -> int:
    ref = load_csv(cfg.ref).rows
    spec = _kernel(cfg, ref)
    blocks = range(2, cfg.B_max + 1) if cfg.B_max is not None else [cfg.B0]
    m = _moments(cfg, ref, spec, blocks)
    doc = {"kernel": spec.to_dict(), **m.to_dict()}
    series = {"B": list(m.var_by_B), "var": list(m.var_by_B.values()),
              "skewness": list(m.skew_by_B.values())}
    _emit(doc, cfg, series)
    return EXIT_OK


def cmd_detect_offline(cfg: RunConfig) -> int:
    ref = load_csv(cfg.ref).rows
    data = load_csv(cfg.data).rows
    if data.shape[1] != ref.shape[1]:
        raise DataFormatError(f"data has d={data.shape[1]}, reference has d={ref.shape[1]}")
    if data.shape[0] < cfg.B_max:
        raise DataFormatError(f"data has {data.shape[0]} rows, need B_max={cfg.B_max}")
    # the test block is the most recent B_max samples
    start = data.shape[0] - cfg.B_max
    test = data[start:]
    spec = _kernel(cfg, ref)
    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    moments = _moments(cfg, ref, spec, range(2, cfg.B_max + 1))
    kappa = moments.skew_by_B if cfg.corrected else None
    ts = offline_threshold_spec(cfg.alpha, cfg.B_max, kappa, cfg.convention)
    blocks, test = build_offline_blocks(ref, test, cfg.N, cfg.B_max, seed=int(seeds[1]),
                                        contiguous=cfg.contiguous)
    res = scan(blocks, test, moments, spec, ts.b)
    report = DetectionReport(
        mode="offline", statistic=list(res.z_prime), threshold=ts.b, alarm=res.alarm,
        change_location=start + res.change_offset if res.alarm else None,
        extra={"M": res.M, "argmax_B": res.argmax_B, "N": cfg.N, "B_max": cfg.B_max,
               "alpha": cfg.alpha, "bandwidth": spec.bandwidth, "corrected": cfg.corrected,
               "seed": cfg.seed})
    _emit(report.to_dict(), cfg, {"B": res.B, "Z": res.z, "Z_std": res.z_prime})
    return EXIT_ALARM if res.alarm else EXIT_OK


def cmd_detect_online(cfg: RunConfig, stream_jsonl: bool = False) -> int:
    ref = load_csv(cfg.ref).rows
    data = load_csv(cfg.data).rows
    if data.shape[1] != ref.shape[1]:
        raise DataFormatError(f"data has d={data.shape[1]}, reference has d={ref.shape[1]}")
    spec = _kernel(cfg, ref)
    moments = _moments(cfg, ref, spec, [cfg.B0])
    kappa = moments.skew_by_B[cfg.B0] if cfg.corrected else None
    ts = online_threshold_spec(cfg.arl, cfg.B0, kappa)
    det = OnlineDetector(ref, cfg.B0, cfg.N, spec, moments, ts.b, seed=cfg.seed)
    times, values = [], []
    T = None
    for x in data:
        m, alarm = det.step(x)
        if m is None:
            continue
        times.append(det.t)
        values.append(m)
        if stream_jsonl:
            sys.stdout.write(json.dumps({"t": det.t, "M": m, "alarm": alarm}) + "\n")
        if alarm:
            T = det.t
            break
    report = DetectionReport(
        mode="online", statistic=values, threshold=ts.b, alarm=T is not None,
        change_location=None, stopping_time=T,
        extra={"times": times, "B0": cfg.B0, "N": cfg.N, "arl": cfg.arl,
               "bandwidth": spec.bandwidth, "corrected": cfg.corrected, "seed": cfg.seed,
               "samples_read": det.t})
    if stream_jsonl:
        if cfg.out:
            Path(cfg.out).write_text(report.to_json() + "\n")
    else:
        _emit(report.to_dict(), cfg, {"t": times, "M": values})
    return EXIT_ALARM if T is not None else EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    p = dict(cfg.params)
    p.setdefault("seed", cfg.seed)
    if cfg.workers > 1:
        p.setdefault("workers", cfg.workers)
    exp = cfg.experiment
    if exp == "sl":
        corrected = p.pop("corrected", True)
        for k in ("null", "alt"):
            if isinstance(p.get(k), dict):
                p[k] = sim.Dist(**p[k])
        doc = sim.run_sl_experiment(sim.Scenario(**p), corrected=corrected)
    elif exp == "power":
        doc = sim.run_power_experiment(**p)
    elif exp == "arl":
        doc = sim.run_arl_experiment(**p)
    elif exp == "edd":
        doc = sim.run_edd_experiment(**p)
    elif exp == "sweep":
        doc = sim.optimal_block_sweep(**p)
    else:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {sorted(EXPERIMENTS)}")
    doc = {"experiment": exp, "params": p, **doc}
    rows = doc.get("rows") or []
    series = None
    if rows and all(np.isscalar(v) or v is None for v in rows[0].values()):
        keys = [k for k, v in rows[0].items() if isinstance(v, (int, float)) and not isinstance(v, bool)]
        series = {k: [np.nan if r.get(k) is None else r[k] for r in rows] for k in keys}
    _emit(doc, cfg, series)
    return EXIT_OK


# --- argument handling -----------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; flags override its fields")
    p.add_argument("--data", help="CSV of samples to test (one sample per row)")
    p.add_argument("--ref", help="CSV of reference (null) samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the report (json) or the series (csv) here")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--N", type=int, dest="N", help="number of reference blocks")
    p.add_argument("--B-max", type=int, dest="B_max")
    p.add_argument("--B0", type=int, dest="B0")
    p.add_argument("--alpha", type=float)
    p.add_argument("--arl", type=float)
    p.add_argument("--bandwidth", help="positive number or 'median'")
    p.add_argument("--corrected", action="store_true", default=None,
                   help="use the skewness-corrected approximation")
    p.add_argument("--convention", choices=("theorem", "appendix"))
    p.add_argument("--n-draws", type=int, dest="n_draws")
    p.add_argument("--workers", type=int)
    p.add_argument("--moments-cache", dest="moments_cache", help="directory for cached moments")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as an alarm
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mstat", description="Kernel M-statistic change-point detection")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("threshold", help="solve a detection threshold")
    _common(p)
    p.add_argument("--moments", help="NullMoments JSON (for --corrected)")
    p = sub.add_parser("moments", help="estimate null moments from reference data")
    _common(p)
    p = sub.add_parser("detect-offline", help="scan one test block for a change")
    _common(p)
    p.add_argument("--contiguous", action="store_true", default=None,
                   help="use the most recent reference samples as blocks")
    p = sub.add_parser("detect-online", help="monitor a stream until the first alarm")
    _common(p)
    p.add_argument("--jsonl", action="store_true", help="print one {t, M, alarm} line per step")
    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    _common(p)
    p.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                   help="experiment keyword argument, e.g. trials=50")
    return ap


_MODE = {"threshold": "threshold", "moments": "moments", "detect-offline": "offline",
         "detect-online": "online", "simulate": "simulate"}

_OVERRIDES = ("data", "ref", "seed", "out", "format", "N", "B_max", "B0", "alpha", "arl",
              "bandwidth", "corrected", "convention", "n_draws", "workers", "moments_cache",
              "contiguous", "experiment")


def config_from_args(args) -> RunConfig:
    base = {}
    if args.config:
        base = RunConfig.load(args.config).to_dict()
    base["mode"] = _MODE[args.command]
    for k in _OVERRIDES:
        v = getattr(args, k, None)
        if v is not None:
            base[k] = v
    bw = base.get("bandwidth", "median")
    if isinstance(bw, str) and bw != "median":
        try:
            base["bandwidth"] = float(bw)
        except ValueError:
            raise ConfigError(f"bandwidth must be a number or 'median', got {bw!r}") from None
    params = dict(base.get("params") or {})
    for item in getattr(args, "param", []) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    if getattr(args, "moments", None):
        params["moments"] = args.moments
    base["params"] = params
    return RunConfig.from_dict(base).validate()


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # usage errors and --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "threshold":
            return cmd_threshold(cfg)
        if args.command == "moments":
            return cmd_moments(cfg)
        if args.command == "detect-offline":
            return cmd_detect_offline(cfg)
        if args.command == "detect-online":
            return cmd_detect_online(cfg, stream_jsonl=args.jsonl)
        return cmd_simulate(cfg)
    except (ConfigError, DataFormatError, ThresholdError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"mstat: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001  any failure must map to exit 1, never to "alarm"
        log.debug("unexpected failure", exc_info=True)
        print(f"mstat: error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
