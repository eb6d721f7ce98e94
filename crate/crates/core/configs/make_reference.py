#!/usr/bin/env python3
"""Writes reference.json, the calibrated synthetic cohort.

Calibration targets on the shipped seed: every fresh device statistic below
10, every aged device stressed for 2 h or more above 20, and the 1 h s9234
device indistinguishable from the fresh cohort. Path offsets alternate
between two bands a few MHz wide so that the clustering baseline always
finds two clusters, while each band stays wide enough to hide a 6 MHz drop
from it.
"""
import json
import pathlib

PATHS = 32
SPREAD_MHZ = 8.0


def path_offset(p):
    step = (p // 2) * SPREAD_MHZ / (PATHS // 2 - 1)
    return round((-20.0 if p % 2 == 0 else 12.0) + step, 4)


def aged(base, circuit, hours):
    return {"base_device": base, "circuit": circuit, "stress_hours": hours}


def main():
    config = {
        "seed": 1,
        "layout": {
            "rows": 94,
            "column_groups": [[0, 3], [5, 7], [9, 12], [14, 16]],
            "lut_inputs": 6,
            "ro_stages": 15,
        },
        "variation": {
            "nominal_freq_mhz": 250.0,
            "path_offsets_mhz": [path_offset(p) for p in range(PATHS)],
            "systematic": [
                {"x_pow": 1, "y_pow": 0, "coeff": 0.15},
                {"x_pow": 0, "y_pow": 1, "coeff": 0.009},
            ],
            "random_sigma_mhz": 0.05,
            "lot_jitter": 0.2,
        },
        "fresh_devices": 35,
        "circuits": [
            {"name": "s9234", "region": {"col_min": 15, "col_max": 16, "row_min": 84, "row_max": 93}},
            {"name": "riscv", "region": {"col_min": 10, "col_max": 16, "row_min": 0, "row_max": 79}},
        ],
        "aged": [aged(b, "s9234", h) for b, h in enumerate([6, 6, 3, 2, 1])]
        + [aged(5 + b, "riscv", h) for b, h in enumerate([6, 3, 2, 1])],
    }
    out = pathlib.Path(__file__).with_name("reference.json")
    out.write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
