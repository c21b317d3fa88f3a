"""Compare the compiled and pure-Python OCE kernels.

Times ``oce_rows`` on random batches for each utility family and one full
value-iteration sweep on the default MDP, then checks both backends agree.

    python3 benchmarks/bench_kernels.py [--rows 20000] [--width 3] [--repeat 5]
"""

import argparse
import json
import time

import numpy as np

from bellhedge import kernels
from bellhedge.bellman import apply_T
from bellhedge.mdp import MDPConfig, build_mdp
from bellhedge.rng import keyed_rng
from bellhedge.utility import FAMILIES, UtilityFamily


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--width", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print results as JSON")
    args = ap.parse_args()

    backends = kernels.available_backends()
    rng = keyed_rng(0, "bench")
    x = rng.normal(0.0, 1.0, (args.rows, args.width))
    p = rng.dirichlet(np.ones(args.width), args.rows)
    results = []
    for kind in FAMILIES:
        fam = UtilityFamily(kind, 1.0)
        row = {"case": f"oce_rows/{kind}", "rows": args.rows}
        outs = {}
        for b in backends:
            impl = kernels.get_backend(b)
            row[b] = best_time(lambda: impl.oce_rows(fam.code, fam.lam, x, p), args.repeat)
            outs[b] = impl.oce_rows(fam.code, fam.lam, x, p)[0]
        if len(outs) == 2:
            row["max_abs_diff"] = float(np.max(np.abs(outs["cython"] - outs["python"])))
        results.append(row)

    mdp = build_mdp(MDPConfig())
    f = mdp.random_values(0)
    for kind in ("entropy", "cvar"):
        fam = UtilityFamily(kind, 1.0)
        row = {"case": f"apply_T/{kind}", "rows": mdp.K * mdp.n_lattice * mdp.n_actions}
        for b in backends:
            row[b] = best_time(lambda: apply_T(mdp, fam, f, backend=b), args.repeat)
        results.append(row)

    if args.json:
        print(json.dumps(results, indent=2))
        return
    print(f"backends: {', '.join(backends)} (active: {kernels.BACKEND})")
    print(f"{'case':<32}{'rows':>8}" + "".join(f"{b + ' [ms]':>16}" for b in backends) + f"{'speedup':>10}{'max diff':>12}")
    for r in results:
        line = f"{r['case']:<32}{r['rows']:>8}" + "".join(f"{1e3 * r[b]:>16.3f}" for b in backends)
        if "cython" in r and "python" in r:
            line += f"{r['python'] / r['cython']:>10.1f}"
        if "max_abs_diff" in r:
            line += f"{r['max_abs_diff']:>12.2e}"
        print(line)


if __name__ == "__main__":
    main()
