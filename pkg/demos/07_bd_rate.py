"""Bjontegaard delta bitrate on synthetic curves: the exact closed-form cases
and a realistic comparison between a codec alone and the hybrid system."""

import numpy as np

from hybridvc.metrics import RDCurve, RDPoint, bdbr

rates = np.array([0.05, 0.1, 0.2, 0.4])
dists = np.array([31.0, 33.5, 36.0, 38.5])
anchor = RDCurve([RDPoint(r, d) for r, d in zip(rates, dists)], label="anchor")

print("identical curves     ->", f"{bdbr(anchor, anchor):+7.2f} %")
half = RDCurve([RDPoint(r / 2, d) for r, d in zip(rates, dists)], label="half-rate")
print("half the rate        ->", f"{bdbr(anchor, half):+7.2f} %  (exactly -50)")
double = RDCurve([RDPoint(r * 2, d) for r, d in zip(rates, dists)], label="double")
print("double the rate      ->", f"{bdbr(anchor, double):+7.2f} %  (exactly +100)")

# A restoration decoder shifts the whole curve up in quality for a small
# constant rate overhead (the losslessly coded reference frame).
enhanced = RDCurve([RDPoint(r + 0.009, d + 0.9) for r, d in zip(rates, dists)],
                   label="hybrid")
print("hybrid (+0.9 dB, +0.009 bpp) vs codec alone ->",
      f"{bdbr(anchor, enhanced):+7.2f} %")
print("negative numbers mean the second system needs that much less rate for"
      " equal quality, integrated over the overlapping quality range.")
