"""Freeze reference AC power flow solutions (PYPOWER, Newton, no Q limits)."""
import json
import sys

from pypower.api import case14, case118, ppoption, runpf

out = {}
opt = ppoption(PF_ALG=1, PF_TOL=1e-12, PF_MAX_IT=50, ENFORCE_Q_LIMS=0, VERBOSE=0, OUT_ALL=0)
for name, case in [("case14", case14), ("case118", case118)]:
    res, ok = runpf(case(), opt)
    assert ok
    out[name] = {
        "bus": [int(b) for b in res["bus"][:, 0]],
        "vm": [float(v) for v in res["bus"][:, 7]],
        "va_deg": [float(v) for v in res["bus"][:, 8]],
    }
json.dump(out, open(sys.argv[1], "w"), indent=1)
