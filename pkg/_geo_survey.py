import numpy as np, time, math
from reluapprox.dataset import generate_synthetic
from reluapprox.dual import solve_dual_geo, check_dual_feasibility, geometric_ratio
from reluapprox.oracle import exact_dual
SQ = math.sqrt(2/math.pi)
t0=time.time(); npass=0; total=0; fails=[]
for seed in range(20):
    dsg = generate_synthetic("general", 8, 3, seed=seed)
    try:
        D, lam = exact_dual(dsg, tol=1e-7)
        gr = geometric_ratio(dsg, lam)
        c = 0.9*min(gr.c_star, 1/gr.c_star)
        cg = solve_dual_geo(dsg, c=c, eps=1e-4)
        lo = SQ*(1-c)*D - 2*cg.eps
        ok = (lo <= cg.objective <= D*(1+1e-6)) and check_dual_feasibility(dsg, cg.lam).feasible
        npass += ok; total += 1
        if not ok: fails.append((seed, round(gr.c_star,3), round(D,3), round(cg.objective,3), round(lo,3)))
        print(f"seed {seed}: D={D:.3f} c*={gr.c_star:.3f} ok={ok} ({time.time()-t0:.0f}s)", flush=True)
    except Exception as e:
        total += 1; fails.append((seed, type(e).__name__, str(e)[:60]))
        print(f"seed {seed}: {type(e).__name__} ({time.time()-t0:.0f}s)", flush=True)
print(f"DONE pass {npass}/{total} in {time.time()-t0:.0f}s; fails: {fails}", flush=True)
