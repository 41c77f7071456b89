#!/usr/bin/env python3
"""Generate the synthetic quarterly nowcast fixture.

The series mimics US nominal GDP over 1999Q4-2020Q3: steady growth near
1.2% a quarter, a 2008-09 recession, an unanticipated 2013 surge and a
three-quarter collapse and rebound in 2020. The survey nowcast misses by a
small error each quarter. Output is deterministic for a given seed.

Usage: make_synthetic_nowcast.py [--seed N] > crates/core/fixtures/synthetic_nowcast.csv
"""

import argparse
import random
import sys

RECESSION = {"2008Q3": 0.2, "2008Q4": -1.9, "2009Q1": -1.2, "2009Q2": -0.2}
SURGE = {"2013Q3": (2.4, 1.1)}
SHOCK = {"2020Q1": (-1.3, -0.5), "2020Q2": (-9.0, -2.6), "2020Q3": (9.0, 1.9)}


def quarters(start_year, start_q, n):
    y, q = start_year, start_q
    for _ in range(n):
        yield f"{y}Q{q}"
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seed", type=int, default=2020)
    args = parser.parse_args()
    rng = random.Random(args.seed)

    labels = list(quarters(1999, 4, 84))
    level = 9_900.0
    out = sys.stdout
    out.write("quarter,gdp_level,spf_median_level\n")
    out.write(f"{labels[0]},{level:.1f},{level:.1f}\n")
    ar = 0.0
    for label in labels[1:]:
        ar = 0.4 * ar + rng.gauss(0.0, 0.35)
        growth = 1.15 + ar
        miss = rng.gauss(0.0, 0.3)
        if label in RECESSION:
            growth = RECESSION[label]
        if label in SURGE:
            growth, miss = SURGE[label]
        if label in SHOCK:
            growth, miss = SHOCK[label]
        new_level = level * (1.0 + growth / 100.0)
        nowcast = new_level - miss * level / 100.0
        out.write(f"{label},{new_level:.1f},{nowcast:.1f}\n")
        level = new_level


if __name__ == "__main__":
    main()
