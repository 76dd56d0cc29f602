"""How small can the envelope kernel factor be before h > H somewhere?

For random C^{1,1} jet sets, evaluates both envelopes with kernel ``a M`` for a
range of factors ``a`` and reports the worst gap ``max(h - H)`` per factor.
"""
import argparse
from dataclasses import dataclass

import numpy as np

from jetext.envelope import EnvelopeSpec, H_eval, h_eval
from jetext.fixtures import random_c11_jets
from jetext.jet import wg_constant
from jetext.modulus import Power, primitive


@dataclass
class Config:
    factors: tuple = (0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0)
    datasets: int = 30
    sites: int = 30
    queries: int = 5000
    seed: int = 0


def run(cfg: Config):
    rng = np.random.default_rng(cfg.seed)
    omega = Power(1.0)
    data = []
    for k in range(cfg.datasets):
        n = 1 + k % 3
        jets, _ = random_c11_jets(rng, n, cfg.sites)
        data.append((jets, wg_constant(jets, omega).M, rng.uniform(-1.5, 1.5, (cfg.queries, n))))
    rows = []
    for a in cfg.factors:
        gaps = []
        for jets, M, Q in data:
            spec = EnvelopeSpec(jets, M, primitive(omega), a)
            gaps.append(float((h_eval(spec, Q) - H_eval(spec, Q)).max()))
        gaps = np.array(gaps)
        rows.append((a, int(np.sum(gaps > 1e-9)), float(gaps.max())))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--datasets", type=int, default=Config.datasets)
    p.add_argument("--seed", type=int, default=Config.seed)
    args = p.parse_args()
    print("factor,datasets_with_gap,worst_gap")
    for a, bad, worst in run(Config(datasets=args.datasets, seed=args.seed)):
        print(f"{a},{bad},{worst:.6e}")


if __name__ == "__main__":
    main()
