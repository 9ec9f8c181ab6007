#!/usr/bin/env python3
"""Writes data/ieee9_3feeders.json: the 9-bus system with the loads at buses
5, 6 and 8 replaced by synthetic 10-bus radial feeders."""

import json
import sys
from pathlib import Path

# id, type, |V|, P_gen, load (P, Q)
BUSES = [
    (1, "slack", 1.04, 0.0, None),
    (2, "pv", 1.025, 1.63, None),
    (3, "pv", 1.025, 0.85, None),
    (4, "pq", 1.0, 0.0, None),
    (5, "pq", 1.0, 0.0, (1.25, 0.50)),
    (6, "pq", 1.0, 0.0, (0.90, 0.30)),
    (7, "pq", 1.0, 0.0, None),
    (8, "pq", 1.0, 0.0, (1.00, 0.35)),
    (9, "pq", 1.0, 0.0, None),
]
# from, to, r, x, total charging B
BRANCHES = [
    (1, 4, 0.0, 0.0576, 0.0),
    (2, 7, 0.0, 0.0625, 0.0),
    (3, 9, 0.0, 0.0586, 0.0),
    (4, 5, 0.010, 0.085, 0.176),
    (4, 6, 0.017, 0.092, 0.158),
    (5, 7, 0.032, 0.161, 0.306),
    (6, 9, 0.039, 0.170, 0.358),
    (7, 8, 0.0085, 0.072, 0.149),
    (8, 9, 0.0119, 0.1008, 0.209),
]
# bus, x'd, H
GENERATORS = [(1, 0.0608, 23.64), (2, 0.1198, 6.40), (3, 0.1813, 3.01)]
DAMPING = 10.0

# Feeder layout, local offsets: 0 head, 1 substation secondary, 1-5 trunk,
# 2-6-7 and 4-8-9 laterals.
SEGMENTS = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (2, 6), (6, 7), (4, 8), (8, 9)]
LOAD_SHARE = {2: 0.10, 3: 0.15, 4: 0.15, 5: 0.15, 6: 0.10, 7: 0.15, 8: 0.10, 9: 0.10}
TRANSFORMER_Z1 = (0.0064, 0.0960)
LINE_Z1 = (0.0096, 0.0192)   # per segment, for a 1.35 p.u. feeder
REFERENCE_S = abs(complex(1.25, 0.50))


def feeder(name, boundary, base, load):
    s = complex(*load)
    scale = REFERENCE_S / abs(s)
    buses = []
    for k in range(10):
        bus = {"id": base + k}
        if k in LOAD_SHARE:
            bus["load"] = [round(s.real * LOAD_SHARE[k], 10), round(s.imag * LOAD_SHARE[k], 10)]
        buses.append(bus)
    segments = []
    for a, b in SEGMENTS:
        if a == 0:
            z1 = [TRANSFORMER_Z1[0] * scale, TRANSFORMER_Z1[1] * scale]
            z0 = z1
        else:
            z1 = [LINE_Z1[0] * scale, LINE_Z1[1] * scale]
            z0 = [3 * z1[0], 3 * z1[1]]
        segments.append({"from": base + a, "to": base + b,
                         "z1": [round(v, 10) for v in z1], "z0": [round(v, 10) for v in z0]})
    return {"name": name, "boundary_bus": boundary, "head_bus": base,
            "z_share": 0.75, "motor_share": 0.25, "buses": buses, "segments": segments}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "data" / "ieee9_3feeders.json"
    case = {
        "name": "ieee9_3feeders",
        "transmission": {
            "base_mva": 100.0,
            "frequency": 60.0,
            "buses": [],
            "branches": [{"from": f, "to": t, "z1": [r, x], "b1": b} for f, t, r, x, b in BRANCHES],
            "generators": [{"bus": b, "xd_prime": x, "h": h, "damping": DAMPING} for b, x, h in GENERATORS],
            "boundary_buses": [5, 6, 8],
        },
        "motors": {"v_stall": 0.6, "stall_delay": 0.07, "stall_multiplier": 6.0, "stall_power_factor": 0.6},
        "feeders": [
            feeder("A", 5, 10, (1.25, 0.50)),
            feeder("B", 6, 20, (0.90, 0.30)),
            feeder("C", 8, 30, (1.00, 0.35)),
        ],
    }
    for bid, kind, v, p, _load in BUSES:
        bus = {"id": bid, "type": kind, "v": v}
        if kind == "pv":
            bus["p_gen"] = p
        case["transmission"]["buses"].append(bus)
    out.write_text(json.dumps(case, indent=2) + "\n")


if __name__ == "__main__":
    main()
