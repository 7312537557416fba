"""Run the three regime sweeps and the decay-rate comparison, then print the fitted slopes.

    python scripts/regime_sweeps.py [--only R2] [--out out/sweeps]

R1 at 9000 bits takes a few minutes on one core.
"""
import argparse
import json
from pathlib import Path

from pronylab.cli import main

ROOT = Path(__file__).resolve().parents[1]
RUNS = {"R1": "sweep_r1.json", "R2": "sweep_r2.json", "R3": "sweep_r3.json",
        "decay": "sweep_decay.json"}


def run(name: str, out: Path):
    code = main(["sweep", str(ROOT / "configs" / RUNS[name]), "--out", str(out / name)])
    if code:
        raise SystemExit(code)
    for path in sorted((out / name).glob("slopes_*.json")):
        slopes = json.loads(path.read_text())["slopes"]
        cells = [f"{k}={v['slope']:.3f}" if v else f"{k}=n/a" for k, v in slopes.items()]
        print(f"{path.stem:>16}  " + "  ".join(cells))


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", choices=sorted(RUNS))
    ap.add_argument("--out", default="out/sweeps")
    args = ap.parse_args()
    for name in [args.only] if args.only else RUNS:
        run(name, Path(args.out))
