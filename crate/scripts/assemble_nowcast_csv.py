#!/usr/bin/env python3
"""Assemble the nowcast evaluation CSV from two manually downloaded files.

Inputs
  --survey  CSV export of the survey's median nominal GDP *level* forecasts,
            with columns YEAR, QUARTER and the current-quarter column
            (NGDP2 in the median-level file; NGDP1 is the previous quarter).
  --gdp     Quarterly realised nominal GDP levels with columns DATE
            (YYYY-MM-DD, first day of the quarter) and a value column.

Output (stdout): quarter,gdp_level,spf_median_level for every quarter present
in both files, starting one quarter before the first evaluated quarter.

Usage:
  assemble_nowcast_csv.py --survey median_ngdp_level.csv --gdp gdp.csv \
      --first 1999Q4 --last 2020Q3 > nowcast.csv
"""

import argparse
import csv
import sys


def quarter_key(label):
    year, q = label.upper().split("Q")
    return int(year), int(q)


def read_survey(path, column):
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            value = row.get(column, "").strip()
            if value and value != "#N/A":
                out[(int(float(row["YEAR"])), int(float(row["QUARTER"])))] = float(value)
    return out


def read_gdp(path, column):
    out = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        column = column or [c for c in reader.fieldnames if c.upper() not in ("DATE", "OBSERVATION_DATE")][0]
        date_col = [c for c in reader.fieldnames if c.upper() in ("DATE", "OBSERVATION_DATE")][0]
        for row in reader:
            year, month, _ = row[date_col].split("-")
            value = row[column].strip()
            if value and value != ".":
                out[(int(year), (int(month) - 1) // 3 + 1)] = float(value)
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--survey", required=True)
    p.add_argument("--gdp", required=True)
    p.add_argument("--survey-column", default="NGDP2")
    p.add_argument("--gdp-column", default=None)
    p.add_argument("--first", default="1999Q4")
    p.add_argument("--last", default="2020Q3")
    args = p.parse_args()

    survey = read_survey(args.survey, args.survey_column)
    gdp = read_gdp(args.gdp, args.gdp_column)
    first, last = quarter_key(args.first), quarter_key(args.last)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["quarter", "gdp_level", "spf_median_level"])
    y, q = first
    while (y, q) <= last:
        if (y, q) not in gdp or (y, q) not in survey:
            sys.exit(f"missing data for {y}Q{q}")
        writer.writerow([f"{y}Q{q}", gdp[(y, q)], survey[(y, q)]])
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)


if __name__ == "__main__":
    main()
