"""Compare the two orderings of the first unitarity correction.

With U*U = I + eps I1 the correction V0 = -U I1 / 2 removes the O(eps) term
of (U + eps V0)*(U + eps V0) - I exactly.  The ordering V0 = -I1 U / 2 only
does so when I1 commutes with U.  Both are formed here as square matrices on
the oversampled grid and measured on the band of the coarse grid.
"""
import numpy as np

from wavetrace.profiles import make_profile
from wavetrace.quantize import Grid, band_embedding, loglog_slope, op_norm, quantized_frame


def residuals(prof, n, eps, oversample=2):
    coarse = Grid(n, 2 * np.pi, eps)
    fine = Grid(n * oversample, 2 * np.pi, eps)
    U = quantized_frame(prof, fine).matrix
    E = band_embedding(coarse, fine, ncomp=3)
    eye = np.eye(U.shape[0])
    G = U.conj().T @ U - eye  # eps I1
    out = {}
    for name, W in (("-U I1/2", U - 0.5 * U @ G), ("-I1 U/2", U - 0.5 * G @ U)):
        out[name] = op_norm(E.conj().T @ (W.conj().T @ W - eye) @ E)
    out["none"] = op_norm(E.conj().T @ G @ E)
    return out


def main():
    prof = make_profile("shifted-sine")
    eps_list = [0.4, 0.2, 0.1]
    rows = [residuals(prof, 16, e) for e in eps_list]
    for name in rows[0]:
        vals = [r[name] for r in rows]
        print(f"{name:>8}: " + "  ".join(f"{v:.3e}" for v in vals) + f"   slope {loglog_slope(eps_list, vals):.3f}")


if __name__ == "__main__":
    main()
