"""wTOP-CSMA while the number of active nodes steps 10 -> 20 -> 10."""
import numpy as np

from kwcsma import ApController, PhyMacConfig, StrategySpec, optimal_p, run_sim
from kwcsma.sim.topology import build_topology, place_ring

cfg = PhyMacConfig()
SEC = 10**9
schedule = [(0, 10), (60 * SEC, 20), (120 * SEC, 10)]
for n in (10, 20):
    print(f"optimal p at N={n}: {optimal_p(np.ones(n), cfg).p:.5f}")

ctl = ApController.wtop(cfg)
rep = run_sim(build_topology(place_ring(20, 8.0), 24.0, 16.0), cfg, StrategySpec.wtop(), 180 * SEC, seed=1,
              controller=ctl, schedule=schedule)
t = np.array([tp.time_ns for tp in ctl.trace]) / SEC
p = np.array([tp.p_val for tp in ctl.trace])
print(" window   N   mean p   Mb/s")
for start in range(0, 180, 20):
    sel = (t >= start) & (t < start + 20)
    print(f"{start:3d}-{start + 20:<3d} {rep.window_active[start]:3d}  {p[sel].mean():.5f}  "
          f"{rep.window_throughput_bps[start:start + 20].mean() / 1e6:5.2f}")
