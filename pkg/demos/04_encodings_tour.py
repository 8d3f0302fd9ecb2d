"""
A tour of the input encodings
=============================

Every architecture here is "encode the coordinates, then run a network".
This demo visualizes what each encoder hands to its network for a 1-D input
sweep, and shows the multiplicative Fourier network's defining property:
with two sinusoidal filter stages the output spectrum lives on sums and
differences of the filter frequencies.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nrfield import EncodingSpec, NormState, Tape, build_model, default_config
from nrfield.encodings import build_encoder

OUT = os.path.join(os.path.dirname(__file__), "demo_out")
os.makedirs(OUT, exist_ok=True)

rng = np.random.default_rng(0)
xn = np.linspace(-1.0, 1.0, 512).reshape(-1, 1)

specs = {
    "gaussian PE (L=4, bw=8)": EncodingSpec(kind="gaussian_pe", L=4, bandwidth=8.0),
    "fixed 2L PE (L=3)": EncodingSpec(kind="fixed_pe_2l", L=3),
    "hash grid (4 levels)": EncodingSpec(kind="hash_grid", levels=4, log2_table=8,
                                         base_resolution=2, fine_resolution=16, features=1),
}
fig, axes = plt.subplots(len(specs), 1, figsize=(8, 7), sharex=True)
for ax, (label, spec) in zip(axes, specs.items()):
    encoder = build_encoder(spec, in_dim=1, rng=np.random.default_rng(1))
    feats = encoder.encode(Tape(), xn).data
    for j in range(min(feats.shape[1], 6)):
        ax.plot(xn[:, 0], feats[:, j], lw=0.8)
    ax.set_title(f"{label}: first {min(feats.shape[1], 6)} of {feats.shape[1]} features")
axes[-1].set_xlabel("normalized input")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "encodings.png"), dpi=120)
print(f"wrote {OUT}/encodings.png")

# ---- multiplicative filter network spectrum --------------------------------------
# set both filter frequencies by hand: 3 and 10 cycles over the [-1, 1) window
w = 4
model = build_model(default_config("mfn_fourier", 1, 1, layers=2, width=w, seed=0),
                    NormState.identity(1, 1))
model._by_name["flt.omega0"].data[...] = 3 * np.pi
model._by_name["flt.phi0"].data[...] = 0.0
model._by_name["flt.omega1"].data[...] = 10 * np.pi
model._by_name["flt.phi1"].data[...] = 0.0
model._by_name["net.w0"].data[...] = np.eye(w)
model._by_name["net.b0"].data[...] = 1.0
model._by_name["net.w1"].data[...] = 1.0 / w
model._by_name["net.b1"].data[...] = 0.0

n = 4096
xs = np.linspace(-1.0, 1.0, n, endpoint=False).reshape(-1, 1)
spectrum = np.abs(np.fft.rfft(model.forward(xs)[:, 0])) / (n / 2)
bins = np.nonzero(spectrum > 1e-8)[0]
print(f"spectrum support: bins {list(bins)} (exactly 10-3, 10, 10+3)")

fig, ax = plt.subplots(figsize=(7, 3.2))
ax.stem(np.arange(40), spectrum[:40])
ax.set_xlabel("frequency (cycles per window)")
ax.set_ylabel("amplitude")
ax.set_title("depth-2 multiplicative Fourier net: output spectrum")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "mfn_spectrum.png"), dpi=120)
print(f"wrote {OUT}/mfn_spectrum.png")
