"""Detection delay as a function of the online window size B0."""

import time
from dataclasses import dataclass

from _common import emit, parse_config
from mstat.simulation import optimal_block_sweep


@dataclass
class Config:
    shifts: tuple = (0.2, 0.3, 0.5)
    B0_grid: tuple = tuple(range(10, 62, 4))
    d: int = 20
    N: int = 5
    arl: float = 5000.0
    trials: int = 200
    horizon: int = 2000
    seed: int = 0
    workers: int = 1


def main(argv=None):
    cfg, out = parse_config(Config, argv)
    t0 = time.time()
    res = optimal_block_sweep(shifts=tuple(cfg.shifts), B0_grid=tuple(cfg.B0_grid), d=cfg.d, N=cfg.N,
                              arl=cfg.arl, trials=cfg.trials, seed=cfg.seed, horizon=cfg.horizon,
                              workers=cfg.workers)
    for r in res["rows"]:
        curve = " ".join(f"{B}:{e:.1f}" for B, e in zip(r["B0"], r["edd"]))
        print(f"shift {r['shift']}: best B0={r['optimal_B0']}  {curve}", flush=True)
    emit(cfg, res, out, t0)


if __name__ == "__main__":
    main()
