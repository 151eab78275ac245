"""Write a set of procedural instance bundles: one directory per seed."""
import argparse
from pathlib import Path

from depthdeblur.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/synth")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--sigma-a", type=float, default=0.05)
    ap.add_argument("--sigma-t", type=float, default=0.05)
    args = ap.parse_args()
    for s in range(args.seeds):
        out = Path(args.out) / f"seed{s:03d}"
        rc = cli_main(["synth", "--procedural", "--seed", str(s), "--size", str(args.size),
                       "--sigma-a", str(args.sigma_a), "--sigma-t", str(args.sigma_t), "--out", str(out)])
        if rc:
            raise SystemExit(rc)


if __name__ == "__main__":
    main()
