"""Expected detection delay of the online M-statistic, optionally with online Hotelling."""

import time
from dataclasses import dataclass

from _common import emit, parse_config
from mstat.simulation import run_edd_experiment


@dataclass
class Config:
    cases: tuple = (1, 2, 3, 4, 5, 6, 7, 8)
    B0: int = 20
    N: int = 5
    arl: float = 5000.0
    trials: int = 100
    horizon: int = 2000
    with_hotelling: bool = False
    seed: int = 0
    workers: int = 1


def main(argv=None):
    cfg, out = parse_config(Config, argv)
    t0 = time.time()
    res = run_edd_experiment(cases=list(cfg.cases), B0=cfg.B0, N=cfg.N, arl=cfg.arl, trials=cfg.trials,
                             seed=cfg.seed, horizon=cfg.horizon, with_hotelling=cfg.with_hotelling,
                             workers=cfg.workers)
    for r in res["rows"]:
        edd = "none" if r["edd"] is None else f"{r['edd']:.2f}"
        line = f"case {r['case']}: EDD={edd}  missed={r['missed']}"
        if cfg.with_hotelling:
            h = r["edd_hotelling"]
            line += f"  | T2 EDD={'none' if h is None else f'{h:.2f}'} missed={r['missed_hotelling']}"
        print(line, flush=True)
    emit(cfg, res, out, t0)


if __name__ == "__main__":
    main()
