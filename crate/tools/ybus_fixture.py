"""Freeze the bus admittance matrices of the IEEE 14- and 118-bus cases as
computed by PYPOWER's makeYbus.

Run from the repository root: PYTHONPATH=tools python3 tools/ybus_fixture.py OUT.json
"""
import json
import sys

from pypower.ext2int import ext2int
from pypower.makeYbus import makeYbus

from reference_nlp import parse_m

out = {}
for name in ("case14", "case118"):
    raw = parse_m(f"data/{name}.m")
    ppc = ext2int(raw)
    ybus, _, _ = makeYbus(ppc["baseMVA"], ppc["bus"], ppc["branch"])
    y = ybus.toarray()
    out[name] = {
        "n": int(y.shape[0]),
        "bus_ids": [int(b) for b in raw["bus"][:, 0]],
        "entries": [[i, j, float(y[i, j].real), float(y[i, j].imag)] for i in range(y.shape[0]) for j in range(y.shape[1]) if y[i, j] != 0],
    }
json.dump(out, open(sys.argv[1], "w"))
