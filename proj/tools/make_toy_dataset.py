#!/usr/bin/env python3
"""Writes the bundled toy loan dataset: 500 rows, 4 numerical and 4 categorical features, binary label."""
import argparse
import csv
import math
import random


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/toy/loans.csv")
    parser.add_argument("--rows", type=int, default=500)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    jobs = ["clerk", "engineer", "manager", "technician", "unemployed"]
    housing = ["own", "rent", "free"]
    purposes = ["car", "education", "furniture", "business", "repairs"]
    regions = ["north", "south", "east", "west"]

    with open(args.out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["age", "income", "loan_amount", "duration_months", "job", "housing", "purpose", "region", "approved"])
        for _ in range(args.rows):
            age = rng.randint(19, 75)
            job = rng.choice(jobs)
            base = {"clerk": 28000, "engineer": 52000, "manager": 61000, "technician": 39000, "unemployed": 9000}[job]
            income = round(max(3000.0, rng.gauss(base, base * 0.25)), 2)
            amount = rng.randrange(500, 20001, 250)
            duration = rng.choice([6, 12, 18, 24, 36, 48, 60])
            home = rng.choices(housing, weights=[5, 4, 1])[0]
            purpose = rng.choice(purposes)
            region = rng.choice(regions)
            score = (income / 20000.0 - amount / 6000.0 - duration / 40.0 + (age - 40) / 50.0
                     + (0.6 if home == "own" else 0.0) - (0.8 if job == "unemployed" else 0.0)
                     + (0.3 if purpose == "car" else 0.0) + rng.gauss(0.0, 0.6))
            approved = "yes" if 1.0 / (1.0 + math.exp(-score)) > 0.5 else "no"
            w.writerow([age, f"{income:.2f}", amount, duration, job, home, purpose, region, approved])


if __name__ == "__main__":
    main()
