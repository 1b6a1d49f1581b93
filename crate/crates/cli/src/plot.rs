/// Standalone matplotlib script for `trace.csv`: e, e', e'' and the bound.
pub const TRACE_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot an entropy trace written by `hypocoerce simulate`.

usage: python3 plot_trace.py [trace.csv] [out.png]
"""
import sys

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "trace.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "trace.png"
data = np.genfromtxt(src, delimiter=",", names=True)
t, e = data["t"], data["e_psi"]
de = np.gradient(e, t)
d2e = np.gradient(de, t)

fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
top.semilogy(t, e, label="e(t)")
if np.isfinite(data["bound"]).any():
    top.semilogy(t, data["bound"], "--", label="bound")
top.set_ylabel("relative entropy")
top.legend()
bottom.plot(t, de, label="e'(t)")
bottom.plot(t, d2e, label="e''(t)")
bottom.axhline(0.0, color="gray", lw=0.5)
bottom.set_xlabel("t")
bottom.legend()
fig.tight_layout()
fig.savefig(dst, dpi=150)
print("wrote", dst)
"#;
