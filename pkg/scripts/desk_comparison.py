"""Run both engines on the shrunk three-layer spheroid and print the per-receiver metrics.

    python scripts/desk_comparison.py --particles 100000 --workers 1 --out runs/desk
"""

import argparse
import time
from dataclasses import dataclass
from pathlib import Path

from layersphere.harness import desk_scenario, run_comparison, write_report


@dataclass
class Config:
    particles: int = 100_000
    seed: int = 20240601
    dt: float = 5.0
    duration: float = 60_000.0
    workers: int = 1
    out: Path | None = None


def main(cfg: Config) -> None:
    sc = desk_scenario(cfg.particles, cfg.seed, cfg.dt, cfg.duration)
    start = time.perf_counter()
    rep = run_comparison(sc, cfg.workers)
    elapsed = time.perf_counter() - start
    print(f"{sc.name}  N={cfg.particles}  seed={cfg.seed}  {elapsed:.1f} s")
    print(f"{'receiver':>9} {'nrmse':>8} {'noise':>8} {'t_peak a':>10} {'t_peak p':>10} {'dt_rel':>7}")
    for m in rep.metrics:
        print(f"{m.receiver:>9} {m.nrmse:8.4f} {m.noise_nrmse:8.4f} {m.analytic_peak_time:10.0f} "
              f"{m.pbs_peak_time:10.0f} {m.peak_time_rel_error:7.3f}")
    print("pass" if rep.passes() else "FAIL")
    if cfg.out:
        cfg.out.mkdir(parents=True, exist_ok=True)
        write_report(rep, cfg.out)


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f, v in Config.__dataclass_fields__.items():
        p.add_argument(f"--{f}", type=Path if f == "out" else type(v.default), default=v.default)
    main(Config(**vars(p.parse_args())))
