#!/usr/bin/env python3
"""Regenerates crates/core/data/sobol_directions.bin.

The binary file embeds Joe-Kuo D(6) primitive polynomials and initial direction
numbers for the first 1024 Sobol dimensions, taken from SciPy's bundled copy of
the published table (scipy/stats/_sobol_direction_numbers.npz). Layout, all
little-endian u32:

    [n_dims]
    then per dimension d = 2 .. n_dims (dimension 1 is the van der Corput
    sequence and carries no record):
        [s]              polynomial degree
        [a]              middle coefficients a_1..a_{s-1} packed as
                         sum a_i 2^(s-1-i)
        [m_1 .. m_s]     initial direction numbers (odd integers)

Run from the repository root:

    python3 scripts/make_direction_numbers.py
"""

import os
import struct
import sys

import numpy as np
import scipy.stats

N_DIMS = 1024
OUT = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "crates", "core", "data", "sobol_directions.bin",
)


def main() -> None:
    data_path = os.path.join(
        os.path.dirname(scipy.stats.__file__), "_sobol_direction_numbers.npz"
    )
    z = np.load(data_path)
    poly = z["poly"]
    vinit = z["vinit"]

    out = bytearray()
    out += struct.pack("<I", N_DIMS)
    # Row 0 of the table is dimension 1 (poly == 1); rows 1.. are dimensions 2..
    for row in range(1, N_DIMS):
        p = int(poly[row])
        s = p.bit_length() - 1
        # p encodes x^s + a_1 x^(s-1) + ... + a_{s-1} x + 1.
        a = (p - (1 << s) - 1) >> 1
        m = [int(v) for v in vinit[row][:s]]
        assert all(mi % 2 == 1 for mi in m), f"even m at row {row}: {m}"
        assert all(m[i] < (1 << (i + 1)) for i in range(s)), f"m out of range at {row}"
        out += struct.pack("<II", s, a)
        out += struct.pack(f"<{s}I", *m)

    with open(OUT, "wb") as f:
        f.write(out)
    print(f"wrote {OUT}: {len(out)} bytes, {N_DIMS} dimensions")


if __name__ == "__main__":
    sys.exit(main())
