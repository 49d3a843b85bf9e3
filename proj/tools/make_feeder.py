#!/usr/bin/env python3
"""Writes the bundled synthetic LV feeder (data/feeder12.json).

Twelve buses: the transformer secondary T plus eleven load nodes on two radial four-wire
laterals. Each lateral runs to a hub that fans out into short spurs. An aggregate of 85 further
customers hangs on T; 74 customers are spread unevenly over the feeder phases, phase a heaviest.
Nine single-phase V2G chargers sit at the spur ends.
"""
import json
import sys

R_KM = 0.30          # phase and neutral conductor resistance, ohm/km
X_SELF_KM = 0.35     # self reactance, ohm/km
X_MUT_KM = 0.20      # mutual reactance between any two conductors, ohm/km

# (id, from, to, length_m, ampacity_a)
LINES = [
    ("L1", "T", "B1", 130, 400),
    ("L2", "B1", "B2", 70, 200),
    ("L3", "B1", "B3", 70, 200),
    ("L4", "B1", "B4", 70, 200),
    ("L5", "B1", "B5", 70, 200),
    ("L6", "T", "B6", 90, 400),
    ("L7", "B6", "B7", 90, 200),
    ("L8", "B6", "B8", 90, 200),
    ("L9", "B6", "B9", 90, 200),
    ("L10", "B6", "B10", 90, 200),
    ("L11", "B6", "B11", 90, 200),
]

# customers per (bus, phase); 74 in total
CUSTOMERS = {
    "B1": (3, 3, 2), "B2": (3, 2, 2), "B3": (3, 2, 1), "B4": (3, 2, 2),
    "B5": (3, 2, 1), "B6": (3, 3, 2), "B7": (3, 2, 2), "B8": (3, 2, 1),
    "B9": (3, 2, 1), "B10": (3, 2, 2), "B11": (3, 2, 1),
}
KW_PER_CUSTOMER = 0.8
LOAD_PF = 0.99
ZIP_P = [0.80, 0.10, 0.10]
ZIP_Q = [0.80, 0.10, 0.10]
AGGREGATE = {"a": 90.0, "b": 82.5, "c": 77.5}  # 85 further customers, kW per phase

# (id, bus, phase)
INVERTERS = [
    (1, "B2", "a"), (2, "B3", "a"), (3, "B4", "a"), (4, "B5", "a"),
    (5, "B7", "b"), (6, "B8", "b"), (7, "B9", "b"), (8, "B10", "c"), (9, "B11", "c"),
]
S_KVA = 7.4
PF_MAX = 0.82
Z_OUT = [0.1, 0.1]


def zmat(length_m):
    km = length_m / 1000.0
    r = [[R_KM * km if i == k else 0.0 for k in range(4)] for i in range(4)]
    x = [[(X_SELF_KM if i == k else X_MUT_KM) * km for k in range(4)] for i in range(4)]
    return {"r": [[round(v, 6) for v in row] for row in r], "x": [[round(v, 6) for v in row] for row in x]}


def main(path):
    tanphi = (1.0 / LOAD_PF ** 2 - 1.0) ** 0.5
    buses = [{"id": "T", "phases": "abcn", "v_min_pu": 0.94, "v_max_pu": 1.10}]
    buses += [{"id": b, "phases": "abcn", "v_min_pu": 0.94, "v_max_pu": 1.10} for b in CUSTOMERS]
    loads = []
    for ph, kw in AGGREGATE.items():
        loads.append({"bus": "T", "phase": ph, "p_kw": kw, "q_kvar": round(kw * tanphi, 4),
                      "zip_p": ZIP_P, "zip_q": ZIP_Q})
    for bus, counts in CUSTOMERS.items():
        for ph, n in zip("abc", counts):
            kw = n * KW_PER_CUSTOMER
            loads.append({"bus": bus, "phase": ph, "p_kw": round(kw, 4), "q_kvar": round(kw * tanphi, 4),
                          "zip_p": ZIP_P, "zip_q": ZIP_Q})
    net = {
        "name": "synthetic-lv-feeder-12",
        "bases": {"v_base_volts": 230.0, "s_base_kva": 100.0},
        "source": {"bus": "T", "v_pu": 1.03, "angle_deg": 0.0, "z_series_ohm": [0.015, 0.045]},
        "buses": buses,
        "lines": [{"id": i, "from": f, "to": t, "length_km": l / 1000.0, "ampacity_a": a, "z_ohm": zmat(l)}
                  for (i, f, t, l, a) in LINES],
        "loads": loads,
        "inverters": [{"id": i, "bus": b, "phase": p, "p_kw": 0.0, "s_kva": S_KVA, "pf_max": PF_MAX,
                       "q_max_kvar": S_KVA, "q_fix_fraction": 0.30, "z_out_ohm": Z_OUT}
                      for (i, b, p) in INVERTERS],
    }
    with open(path, "w") as f:
        json.dump(net, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/feeder12.json")
