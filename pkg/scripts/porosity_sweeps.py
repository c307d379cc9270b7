"""Outer-layer porosity sweeps for an internal and an external source.

Internal source: the outside receiver should peak later and lower as the
porosity drops.  External source: the fraction of molecules inside the
spheroid at a fixed time should grow as the porosity drops.
"""

import argparse
import json
from dataclasses import dataclass

from layersphere.harness import desk_external_scenario, desk_sweep_scenario, porosity_sweep


@dataclass
class Config:
    internal_particles: int = 60_000
    external_particles: int = 20_000
    inside_time: float = 40_000.0
    inside_window: float = 2e5
    workers: int = 1
    analytic_only: bool = False


def main(cfg: Config) -> None:
    internal = porosity_sweep(desk_sweep_scenario(cfg.internal_particles),
                              pbs=not cfg.analytic_only, workers=cfg.workers)
    print("internal source, outside receiver")
    print(json.dumps(internal.ordering(), indent=2))
    external = porosity_sweep(desk_external_scenario(cfg.external_particles),
                              pbs=not cfg.analytic_only, inside_window=cfg.inside_window,
                              workers=cfg.workers)
    print(f"external source, fraction inside at t = {cfg.inside_time:g} s")
    print(json.dumps(external.inside_at(cfg.inside_time), indent=2))


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--internal-particles", type=int, default=Config.internal_particles)
    p.add_argument("--external-particles", type=int, default=Config.external_particles)
    p.add_argument("--inside-time", type=float, default=Config.inside_time)
    p.add_argument("--inside-window", type=float, default=Config.inside_window)
    p.add_argument("--workers", type=int, default=Config.workers)
    p.add_argument("--analytic-only", action="store_true")
    main(Config(**vars(p.parse_args())))
