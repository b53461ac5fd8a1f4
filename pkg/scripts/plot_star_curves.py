"""Plot attenuation and per-column MAE curves exported by the metrology CLI.

Takes any number of curves.csv files (one per estimator run) and draws
the center-row attenuation profile, the relative bias with the 10%
resolution threshold, and the per-column MAE, all against the fringe
period.  matplotlib is required here but is not a package dependency.
"""

import argparse
import csv
from pathlib import Path

try:
    import matplotlib.pyplot as plt
except ImportError as exc:
    raise SystemExit("this script needs matplotlib (pip install matplotlib)") from exc


def read_curves(path: Path) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key, value in row.items():
                cols.setdefault(key, []).append(float(value))
    return cols


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv", type=Path, nargs="+", help="curves.csv files to overlay")
    ap.add_argument("--out", type=Path, default=None, help="save instead of showing")
    args = ap.parse_args()

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 9))
    for path in args.csv:
        cols = read_curves(path)
        label = path.stem
        axes[0].plot(cols["period"], cols["profile"], label=label)
        axes[1].plot(cols["period"], cols["bias"], label=label)
        axes[2].plot(cols["period"], cols["mae"], label=label)

    axes[0].set_ylabel("center-row v [px]")
    axes[1].set_ylabel("relative bias")
    axes[1].axhline(0.10, color="k", lw=0.8, ls="--")
    axes[1].set_ylim(0, 1.05)
    axes[2].set_ylabel("per-column MAE [px]")
    axes[2].set_xlabel("fringe period [px]")
    for ax in axes:
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    if args.out is not None:
        fig.savefig(args.out, dpi=150)
        print(f"wrote {args.out}")
    else:
        plt.show()


if __name__ == "__main__":
    main()
