import numpy as np, time
from ra_orient.geometry import geometry_tables
from ra_orient.channel import channel_statistics
from ra_orient.estimation import estimation_statistics
from ra_orient.surrogates import mrc_surrogate, single_user_orientation
from ra_orient.optimizer import optimize_orientation, PgaConfig
from ra_orient.experiments import default_config, generate_geometry, derive_seed
from scratch_check3 import los_scenario

light = PgaConfig(eps=3e-4, max_iters=80, max_backtracks=12)

worst = 0.0
t0 = time.time()
iters = []
for s in range(20):
    for tdeg in (20.0, 40.0, 60.0):
        scen = los_scenario(s, tdeg)
        tables = geometry_tables(scen)
        F_closed = single_user_orientation(scen, tables)
        st = channel_statistics(scen, tables, F_closed)
        es = estimation_statistics(st, scen)
        r_closed = mrc_surrogate(st, es, scen).sum_rate
        F_pga, trace = optimize_orientation(scen, tables, "mrc", cfg=light, seed=s)
        gap = abs(trace.final_objective - r_closed) / r_closed
        worst = max(worst, gap)
        iters.append(trace.n_iters)
print(f"Prop-1 light cfg: worst gap {worst:.2e}, mean iters {np.mean(iters):.1f}, "
      f"time {(time.time()-t0)/60:.2f}s per case avg {(time.time()-t0)/60:.3f}")

cfg = default_config()
t0 = time.time()
finals = {}
for rec in ("mrc", "wzf", "nmse"):
    objs, its = [], []
    t1 = time.time()
    for g in range(8):
        scen = generate_geometry(cfg, derive_seed(7, 0, g))
        tables = geometry_tables(scen)
        F, tr = optimize_orientation(scen, tables, rec, cfg=light, seed=g)
        objs.append(tr.final_objective); its.append(tr.n_iters)
    print(f"{rec}: avg obj {np.mean(objs):.3f} avg iters {np.mean(its):.1f} "
          f"avg time {(time.time()-t1)/8:.3f}s")
# compare against default-config mrc at one geometry to see under-convergence cost
scen = generate_geometry(cfg, derive_seed(7, 0, 0))
tables = geometry_tables(scen)
_, tr_light = optimize_orientation(scen, tables, "mrc", cfg=light, seed=0)
_, tr_full = optimize_orientation(scen, tables, "mrc", cfg=PgaConfig(max_iters=1500), seed=0)
print(f"mrc light {tr_light.final_objective:.4f} vs long {tr_full.final_objective:.4f} "
      f"({tr_full.n_iters} iters, term {tr_full.termination})")
