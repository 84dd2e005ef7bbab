"""Hidden nodes: standard DCF, wTOP-CSMA and TORA-CSMA on a 20 m disc with 40 nodes."""
from kwcsma import ApController, PhyMacConfig, StrategySpec, run_sim
from kwcsma.sim.topology import build_topology, place_disc

cfg = PhyMacConfig()
topo = build_topology(place_disc(40, 20.0, seed=0), sense_radius_m=24.0, tx_radius_m=20.0)
print(f"{topo.n_nodes} nodes, {topo.hidden_pairs} hidden pairs")

runs = {
    "stddcf": (StrategySpec.std_dcf(), None),
    "wtop": (StrategySpec.wtop(), ApController.wtop(cfg)),
    "tora": (StrategySpec.tora(), ApController.tora(cfg)),
}
for name, (spec, ctl) in runs.items():
    rep = run_sim(topo, cfg, spec, 40 * 10**9, seed=0, controller=ctl)
    tail = rep.window_throughput_bps[-20:].mean() / 1e6
    extra = ""
    if ctl is not None:
        last = ctl.trace[-1]
        extra = f"  final p_val {last.p_val:.4f}" + (f", stage j={last.j}" if name == "tora" else "")
    print(f"{name:7s} last-20s throughput {tail:6.2f} Mb/s{extra}")
