"""Point-measurement convergence study on the triangle potential.

Generates the x0 = 0.45 trace, then recovers with m = 2, 5, 10, 20 Prony modes
from the first 2m samples (4 cosine coefficients at most). Output: out/point/.
"""
import csv
from pathlib import Path

from pronylab.cli import main

ROOT = Path(__file__).resolve().parents[1]
OUT = Path("out/point")

if __name__ == "__main__":
    for argv in (["pde-gen", str(ROOT / "configs" / "point_triangle.json"), "--out", str(OUT),
                  "--full-precision"],
                 ["recover", str(ROOT / "configs" / "recover_point.json"), "--out", str(OUT)]):
        if code := main(argv):
            raise SystemExit(code)
    with (OUT / "convergence.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'m':>3} {'modes':>6} {'n_opt':>6} {'eig err':>12} {'L2 err':>12}")
    for r in rows:
        print(f"{r['m']:>3} {r['n_recovered']:>6} {r['n_opt']:>6} "
              f"{float(r['eig_rel_err']):>12.3e} {float(r['potential_l2_err']):>12.4g}")
