"""Freeze extended-precision haversine reference distances.

Evaluates the haversine great-circle formula with 60 significant digits
(mpmath) on seeded random coordinate pairs and writes them as a JSON fixture
consumed by the Rust test suites.
"""
import json
import random
import sys

import mpmath as mp

mp.mp.dps = 60
R = mp.mpf(6371000)


def haversine(lat1, lon1, lat2, lon2):
    p1, p2 = mp.radians(mp.mpf(lat1)), mp.radians(mp.mpf(lat2))
    dphi = mp.radians(mp.mpf(lat2) - mp.mpf(lat1))
    dlam = mp.radians(mp.mpf(lon2) - mp.mpf(lon1))
    h = mp.sin(dphi / 2) ** 2 + mp.cos(p1) * mp.cos(p2) * mp.sin(dlam / 2) ** 2
    return R * 2 * mp.asin(mp.sqrt(h))


def main(out):
    rng = random.Random(20240917)
    pairs = []
    while len(pairs) < 100:
        lat1, lat2 = rng.uniform(-90, 90), rng.uniform(-90, 90)
        lon1, lon2 = rng.uniform(-180, 180), rng.uniform(-180, 180)
        d = haversine(lat1, lon1, lat2, lon2)
        # keep clear of the antipode, where asin is ill-conditioned in f64
        if d > R * (mp.pi - mp.mpf("1e-3")):
            continue
        pairs.append({"a": [lat1, lon1], "b": [lat2, lon2], "meters": mp.nstr(d, 30)})
    with open(out, "w") as f:
        json.dump({"radius_m": 6371000, "pairs": pairs}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])
