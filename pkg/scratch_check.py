import numpy as np
import time
from ra_orient import *
from ra_orient.experiments import default_config, generate_geometry, derive_seed
from ra_orient.geometry import geometry_tables
from ra_orient.channel import channel_statistics
from ra_orient.estimation import estimation_statistics
from ra_orient.surrogates import mrc_surrogate, wzf_surrogate
from ra_orient.gradients import (mrc_gradient, wzf_gradient, gradient_check_error,
                                 mean_nmse_and_gradient, stat_derivatives,
                                 finite_difference_gradient)
from ra_orient.optimizer import uniform_cap_orientation, broadside_orientation

cfg = default_config()
scen = generate_geometry(cfg, derive_seed(7, 0, 0))
tables = geometry_tables(scen)
rng = np.random.default_rng(3)
F = uniform_cap_orientation(scen.n_antennas, scen.theta_max, rng)

stats = channel_statistics(scen, tables, F)
est = estimation_statistics(stats, scen)
print("R Hermitian err:", np.max(np.abs(stats.cov - stats.cov.conj().transose(0,2,1))) if False else "skip")
print("C_e+C_hat=R rel:", np.max([np.linalg.norm(est.err_cov[k]+est.est_cov[k]-stats.cov[k])/np.linalg.norm(stats.cov[k]) for k in range(4)]))

mt = mrc_surrogate(stats, est, scen)
wt = wzf_surrogate(stats, est, scen)
print("MRC sinr:", mt.sinr, "sum", mt.sum_rate)
print("wZF sinr:", wt.sinr, "sum", wt.sum_rate)
print("schur vs inv-diag:", np.max(np.abs(wt.sinr - wt.schur_sinr)/wt.schur_sinr))

def mrc_fun(Fx):
    s = channel_statistics(scen, tables, Fx)
    e = estimation_statistics(s, scen)
    return mrc_surrogate(s, e, scen).sum_rate

def wzf_fun(Fx):
    s = channel_statistics(scen, tables, Fx)
    e = estimation_statistics(s, scen)
    return wzf_surrogate(s, e, scen).sum_rate

def nm_fun(Fx):
    s = channel_statistics(scen, tables, Fx)
    e = estimation_statistics(s, scen)
    return mean_nmse_and_gradient(scen, tables, Fx, stats=s, est=e)[0]

t0=time.time()
g_mrc = mrc_gradient(scen, tables, F)
g_wzf = wzf_gradient(scen, tables, F)
nm_val, g_nm = mean_nmse_and_gradient(scen, tables, F)
t1=time.time()
print("analytic grads time:", t1-t0)

err_mrc = gradient_check_error(mrc_fun, g_mrc, F)
err_wzf = gradient_check_error(wzf_fun, g_wzf, F)
err_nm = gradient_check_error(nm_fun, g_nm, F, steps=(1e-5,1e-6))
print("FD err mrc:", err_mrc)
print("FD err wzf:", err_wzf)
print("FD err nmse:", err_nm)

# stat derivative check at one coordinate
n, m = 3, 1
sd = stat_derivatives(stats, est, scen, tables, F, n, m)
h = 1e-6
def stats_at(Fx):
    s = channel_statistics(scen, tables, Fx)
    e = estimation_statistics(s, scen)
    return s, e
Fp = F.copy(); Fp[n, m] += h
Fm = F.copy(); Fm[n, m] -= h
sp, ep = stats_at(Fp)
sm, em = stats_at(Fm)
for name, ana, num in [
    ("mu", sd.d_mean, (sp.mean-sm.mean)/(2*h)),
    ("cov", sd.d_cov, (sp.cov-sm.cov)/(2*h)),
    ("est_cov", sd.d_est_cov, (ep.est_cov-em.est_cov)/(2*h)),
    ("err_cov", sd.d_err_cov, (ep.err_cov-em.err_cov)/(2*h)),
    ("second", sd.d_second_moment, (ep.second_moment-em.second_moment)/(2*h)),
    ("est_second", sd.d_est_second_moment, (ep.est_second_moment-em.est_second_moment)/(2*h)),
]:
    rel = np.linalg.norm((ana-num).ravel())/max(np.linalg.norm(num.ravel()), 1e-30)
    print(f"stat {name}: rel {rel:.2e}")
