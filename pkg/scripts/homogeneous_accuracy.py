"""Where the layered series reproduces the free-space kernel, and where it cannot.

A stack of eps = 1 layers is free space, so G from the series should equal
exp(-sigma d) / (4 pi D d).  The error grows once sigma * d makes G itself
exponentially small, and when observer and source radii nearly coincide
the series needs more orders than the cap allows.
"""

import argparse
import math
from dataclasses import dataclass

import numpy as np

from layersphere.analytic import SeriesNotConvergedError, free_space_greens, greens_frequency
from layersphere.medium import LayerStack, SourceSpec, cos_angle_between


@dataclass
class Config:
    samples: int = 60
    seed: int = 3


def main(cfg: Config) -> None:
    rng = np.random.default_rng(cfg.seed)
    stack = LayerStack.from_widths([40.0, 60.0], [1.0, 1.0])
    D = stack.free_diffusion
    for omega in np.logspace(-7, -2, 6):
        worst, worst_abs, skipped = 0.0, 0.0, 0
        for _ in range(cfg.samples):
            r0, r = rng.uniform(5, 190, 2)
            if min(abs(r0 - 40), abs(r0 - 100)) < 1:
                continue
            th0, ph0, th, ph = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi), \
                rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
            cg = cos_angle_between(th, ph, th0, ph0)
            d = math.sqrt(max(r * r + r0 * r0 - 2 * r * r0 * cg, 0.0))
            if d < 1:
                continue
            ref = free_space_greens(d, omega, D)
            try:
                g = greens_frequency(stack, SourceSpec(r0, th0, ph0), (r, th, ph), omega)
            except SeriesNotConvergedError:
                skipped += 1
                continue
            worst = max(worst, abs(g - ref) / abs(ref))
            worst_abs = max(worst_abs, abs(g - ref) * 4 * math.pi * D * d)  # vs static kernel
        print(f"omega {omega:8.1e}  max rel err {worst:9.2e}  abs/static {worst_abs:9.2e}  not converged {skipped}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--samples", type=int, default=Config.samples)
    p.add_argument("--seed", type=int, default=Config.seed)
    main(Config(**vars(p.parse_args())))
