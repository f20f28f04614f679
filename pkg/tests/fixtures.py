"""Small hand-built and seeded scenarios shared by the tests."""
from __future__ import annotations

import numpy as np

from pedaccess.model import SystemParameters, build_scenario


def two_by_two(pc: float = 300.0, lc: float = 0.0) -> "ScenarioInstance":
    """Tract A (200 children) and B (100), physician 1 in A and 2 in B.

    Distances: A-1 2, A-2 8, B-1 12, B-2 3.  Every participation and
    mobility parameter is 1, so only capacity shapes the assignment.
    """
    params = SystemParameters(pc=pc, lc=lc, cc=1.0)
    tracts = [
        dict(lat=33.0, lon=-84.0, pop_medicaid=80.0, pop_other=120.0, mob_medicaid=1.0, mob_other=1.0, ext_id="A"),
        dict(lat=33.1, lon=-84.0, pop_medicaid=40.0, pop_other=60.0, mob_medicaid=1.0, mob_other=1.0, ext_id="B"),
    ]
    phys = [
        dict(lat=33.0, lon=-84.0, tract=0, pam=1.0, mc=1.0, ext_id="1"),
        dict(lat=33.1, lon=-84.0, tract=1, pam=1.0, mc=1.0, ext_id="2"),
    ]
    arcs = [(0, 0, 2.0), (0, 1, 8.0), (1, 0, 12.0), (1, 1, 3.0)]
    return build_scenario(tracts, phys, params, arcs)


def single_arc(pop_m: float, pop_o: float, mob_m: float, miles: float, pc: float = 2500.0,
               lc: float = 0.0, pam: float = 1.0, mc: float = 1.0):
    params = SystemParameters(pc=pc, lc=lc, cc=1.0)
    tracts = [dict(lat=33.0, lon=-84.0, pop_medicaid=pop_m, pop_other=pop_o, mob_medicaid=mob_m,
                   mob_other=1.0)]
    phys = [dict(lat=33.0, lon=-84.0, tract=0, pam=pam, mc=mc)]
    return build_scenario(tracts, phys, params, [(0, 0, miles)])


def random_tiny(seed: int, max_tracts: int = 4, max_phys: int = 3):
    """Random instance small enough for exhaustive vertex enumeration.

    Capacities are scaled to the populations so that capacity, floor,
    Medicaid, mobility and congestion rows all have a chance to bind.
    """
    rng = np.random.default_rng(seed)
    S = int(rng.integers(1, max_tracts + 1))
    T = int(rng.integers(1, max_phys + 1))
    pc = float(rng.uniform(50, 150))
    params = SystemParameters(pc=pc, lc=float(rng.choice([0.0, 0.25, 0.5])), cc=float(rng.uniform(0.5, 1.0)))
    tracts = [dict(lat=33.0 + 0.01 * i, lon=-84.0, pop_medicaid=float(rng.integers(0, 80)),
                   pop_other=float(rng.integers(0, 80)), mob_medicaid=float(rng.uniform(0, 1)),
                   mob_other=float(rng.uniform(0.5, 1))) for i in range(S)]
    phys = [dict(lat=33.0, lon=-84.0, tract=int(rng.integers(0, S)), pam=float(rng.uniform(0, 1)),
                 mc=float(rng.uniform(0, 1))) for _ in range(T)]
    arcs = [(i, j, float(rng.choice([rng.uniform(0, 9.9), rng.uniform(10, 25)])))
            for i in range(S) for j in range(T) if rng.random() < 0.75]
    return build_scenario(tracts, phys, params, arcs)
