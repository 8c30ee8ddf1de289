#!/usr/bin/env python3
"""Writes data/rts_reduced/{bus,branch,gen}.csv: a 73-bus, 120-branch
three-area system in the RTS-GMLC column layout, with 4 wind units.

Each area copies the 24-bus reliability test system topology; areas are tied
by six inter-area branches, one of them through bus 325. Numbers are fixed so
the fixture is reproducible without network access.

usage: make_rts_fixture.py [OUTDIR]
"""

import csv
import pathlib
import sys

# (from, to, x p.u., continuous rating MW), one area, local bus numbers
AREA_BRANCHES = [
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175), (2, 4, 0.1267, 175),
    (2, 6, 0.1920, 175), (3, 9, 0.1190, 175), (3, 24, 0.0839, 400), (4, 9, 0.1037, 175),
    (5, 10, 0.0883, 175), (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400), (10, 11, 0.0839, 400),
    (10, 12, 0.0839, 400), (11, 13, 0.0476, 500), (11, 14, 0.0418, 500), (12, 13, 0.0476, 500),
    (12, 23, 0.0966, 500), (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 21, 0.0490, 500), (15, 24, 0.0519, 500), (16, 17, 0.0259, 500),
    (16, 19, 0.0231, 500), (17, 18, 0.0144, 500), (17, 22, 0.1053, 500), (18, 21, 0.0259, 500),
    (18, 21, 0.0259, 500), (19, 20, 0.0396, 500), (19, 20, 0.0396, 500), (20, 23, 0.0216, 500),
    (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
]

TIES = [
    (107, 203, 0.1610, 175), (113, 215, 0.0750, 500), (123, 217, 0.0740, 500),
    (223, 318, 0.0970, 500), (121, 325, 0.0680, 500), (325, 323, 0.0500, 500),
]

LOAD_MW = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195,
           13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128}

# (local bus, type, count, pmax MW, pmin MW, fuel $/MMBTU, heat rate BTU/kWh)
AREA_UNITS = [
    (1, "CT", 2, 20, 8, 3.0, 14500), (1, "STEAM", 2, 76, 30, 2.2, 12000),
    (2, "CT", 2, 20, 8, 3.0, 14500), (2, "STEAM", 2, 76, 30, 2.2, 12000),
    (7, "CC", 2, 170, 60, 3.0, 7500), (13, "CC", 3, 197, 70, 3.0, 8000),
    (14, "SYNC_COND", 1, 0, 0, 0.0, 0), (15, "CT", 4, 55, 22, 3.0, 13000),
    (15, "STEAM", 1, 155, 62, 2.2, 9800), (16, "STEAM", 1, 155, 62, 2.2, 9800),
    (18, "NUCLEAR", 1, 400, 396, 0.8, 10500), (21, "NUCLEAR", 1, 400, 396, 0.8, 10500),
    (22, "HYDRO", 6, 50, 0, 0.0, 0), (23, "STEAM", 2, 155, 62, 2.2, 9800),
    (23, "STEAM", 1, 350, 140, 2.2, 9500),
]

# (bus, pmax MW, forecast MW)
WIND = [(122, 713.5, 260.0), (303, 847.0, 310.0), (309, 148.3, 55.0), (317, 799.1, 290.0)]

REF_BUS = 113


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).parent.parent / "data" / "rts_reduced")
    out.mkdir(parents=True, exist_ok=True)

    buses = [a * 100 + b for a in (1, 2, 3) for b in range(1, 25)] + [325]
    gen_buses = {a * 100 + u[0] for a in (1, 2, 3) for u in AREA_UNITS} | {w[0] for w in WIND}
    with open(out / "bus.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["Bus ID", "Bus Name", "BaseKV", "Bus Type", "MW Load", "MVAR Load", "Area"])
        for b in buses:
            kind = "Ref" if b == REF_BUS else ("PV" if b in gen_buses else "PQ")
            load = LOAD_MW.get(b % 100, 0) if b != 325 else 0
            w.writerow([b, f"Bus{b}", 230 if b % 100 > 10 else 138, kind, load, round(0.2 * load, 1), b // 100])

    with open(out / "branch.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["UID", "From Bus", "To Bus", "R", "X", "B", "Cont Rating", "LTE Rating"])
        n = 0
        for a in (1, 2, 3):
            for fr, to, x, rate in AREA_BRANCHES:
                n += 1
                w.writerow([f"L{n}", a * 100 + fr, a * 100 + to, round(x / 8, 5), x, 0.0, rate, round(rate * 1.15)])
        for fr, to, x, rate in TIES:
            n += 1
            w.writerow([f"T{n}", fr, to, round(x / 8, 5), x, 0.0, rate, round(rate * 1.15)])

    with open(out / "gen.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["GEN UID", "Bus ID", "Unit Type", "MW Inj", "PMax MW", "PMin MW", "Fuel Price $/MMBTU", "HR_avg_0"])
        for a in (1, 2, 3):
            for bus, kind, count, pmax, pmin, fuel, hr in AREA_UNITS:
                for k in range(count):
                    at = a * 100 + bus
                    inj = round(0.6 * pmax, 1) if kind == "HYDRO" else pmin
                    w.writerow([f"{at}_{kind}_{k + 1}", at, kind, inj, pmax, pmin, fuel, hr])
        for bus, pmax, inj in WIND:
            w.writerow([f"{bus}_WIND_1", bus, "WIND", inj, pmax, 0, 0.0, 0])


if __name__ == "__main__":
    main()
