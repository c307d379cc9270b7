"""Total amount inside a large ball versus time for the full-size stack.

Without degradation the amount should stay at 1 until molecules reach the
ball edge.  Prints the deviation at a few times for several window choices.
"""

import argparse
import math
from dataclasses import dataclass

import numpy as np

from layersphere.medium import SourceSpec, spheroid_stack
from layersphere.timedomain import TransformGrid, radial_mass


@dataclass
class Config:
    source_r: float = 45.83
    r_ext: float = 8000.0
    n_time: int = 1024
    windows: tuple = (1e6, 1e7)


def main(cfg: Config) -> None:
    stack = spheroid_stack()
    src = SourceSpec(cfg.source_r, math.pi / 2, math.pi / 2)
    for window in cfg.windows:
        grid = TransformGrid.damped(window, cfg.n_time)
        t, m = radial_mass(stack, src, grid, cfg.r_ext)
        sel = np.linspace(1, t.size // 2, 6).astype(int)
        print(f"window {window:g} s")
        for i in sel:
            print(f"  t = {t[i]:10.4g}  mass - 1 = {m[i] - 1:+.2e}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--source-r", type=float, default=Config.source_r)
    p.add_argument("--r-ext", type=float, default=Config.r_ext)
    p.add_argument("--n-time", type=int, default=Config.n_time)
    main(Config(**vars(p.parse_args())))
