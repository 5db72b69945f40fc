"""Expected round times for the 900 fast / 100 slow client fleet.

Prints the async and sampled-minibatch round times for a range of
concurrencies and writes the table to results/speedup_table.csv.
At concurrency 10 the async scheme averages 15s per round while the
minibatch waits about 42.6s for its slowest draw.
"""

import csv
import pathlib

from asgdsim.speedup import SpeedupInput, async_time, minibatch_time, speedup_ratio

DELTAS = tuple([10.0] * 900 + [60.0] * 100)
CONCURRENCIES = (1, 2, 5, 10, 20, 50, 100)


def run():
    rows = []
    print(f"{'C':>4} {'async':>8} {'minibatch':>10} {'ratio':>7}")
    for c in CONCURRENCIES:
        inp = SpeedupInput(DELTAS, concurrency=c)
        a, m = async_time(inp), minibatch_time(inp)
        rows.append((c, a, m, m / a))
        print(f"{c:>4} {a:>8.3f} {m:>10.3f} {speedup_ratio(inp):>7.3f}")

    out = pathlib.Path("results")
    out.mkdir(exist_ok=True)
    with open(out / "speedup_table.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["concurrency", "async_time", "minibatch_time", "ratio"])
        writer.writerows(rows)
    print(f"wrote {out / 'speedup_table.csv'}")


if __name__ == "__main__":
    run()
