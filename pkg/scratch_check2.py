import numpy as np, time
from ra_orient.experiments import default_config, generate_geometry, derive_seed
from ra_orient.geometry import geometry_tables
from ra_orient.optimizer import optimize_orientation, PgaConfig, make_objective, broadside_orientation
from ra_orient.simulation import ergodic_rate
from ra_orient.channel import channel_statistics
from ra_orient.estimation import estimation_statistics
from ra_orient.surrogates import mrc_surrogate, wzf_surrogate

cfg = default_config()
scen = generate_geometry(cfg, derive_seed(7, 0, 0))
tables = geometry_tables(scen)

for rec in ("mrc", "wzf", "nmse"):
    t0 = time.time()
    F, trace = optimize_orientation(scen, tables, rec, seed=1)
    t1 = time.time()
    print(f"{rec}: iters={trace.n_iters} obj {trace.objective[0]:.4f} -> {trace.final_objective:.4f} "
          f"term={trace.termination} time={t1-t0:.2f}s")
    mono = all(b >= a - 1e-12 for a, b in zip(trace.objective, trace.objective[1:]))
    print("  monotone:", mono)

# surrogate vs ergodic at wzf-optimal F
F, trace = optimize_orientation(scen, tables, "wzf", seed=1)
stats = channel_statistics(scen, tables, F)
est = estimation_statistics(stats, scen)
for rec, sur in (("mrc", mrc_surrogate(stats, est, scen).sum_rate),
                 ("wzf", wzf_surrogate(stats, est, scen).sum_rate)):
    t0 = time.time()
    rep = ergodic_rate(scen, F, rec, 2000, 99, stats=stats, est=est)
    t1 = time.time()
    print(f"{rec}: surrogate {sur:.4f} ergodic {rep.sum_rate:.4f} +- {rep.sum_rate_stderr:.4f} "
          f"gap {(sur-rep.sum_rate)/sur*100:.2f}% skipped={rep.n_skipped} time={t1-t0:.2f}s")

# PGA with lighter config timing (for sweeps)
light = PgaConfig(eps=3e-4, max_iters=150)
t0=time.time()
for g in range(5):
    s2 = generate_geometry(cfg, derive_seed(7, 0, g))
    tb2 = geometry_tables(s2)
    F2, tr2 = optimize_orientation(s2, tb2, "wzf", cfg=light, seed=g)
t1=time.time()
print(f"light wzf pga avg: {(t1-t0)/5:.3f}s, last iters {tr2.n_iters}")
