"""wTOP-CSMA on a fully connected ring: the AP's estimate of p against the analytic optimum."""
import numpy as np

from kwcsma import ApController, PhyMacConfig, StrategySpec, optimal_p, run_sim, system_throughput
from kwcsma.sim.topology import build_topology, place_ring

cfg = PhyMacConfig()
N = 10
p_star = optimal_p(np.ones(N), cfg).p
print(f"N={N}: optimal p = {p_star:.5f}, throughput there = {system_throughput(p_star, np.ones(N), cfg) / 1e6:.2f} Mb/s")

topo = build_topology(place_ring(N, 8.0), 24.0, 16.0)
ctl = ApController.wtop(cfg)
rep = run_sim(topo, cfg, StrategySpec.wtop(), 60 * 10**9, seed=1, controller=ctl)

print(" time_s   p_val    window Mb/s")
for tp in ctl.trace[::20]:
    k = min(int(tp.time_ns // 10**9), len(rep.window_throughput_bps) - 1)
    print(f"{tp.time_ns / 1e9:7.1f}  {tp.p_val:.5f}  {rep.window_throughput_bps[k] / 1e6:6.2f}")
print(f"total over the run: {rep.total_throughput_bps / 1e6:.2f} Mb/s; idle slots per busy period {rep.mean_idle_slots:.2f}")
