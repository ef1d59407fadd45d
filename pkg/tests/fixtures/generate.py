"""Regenerate ``oracles.json`` from slow reference computations.

Run from the repository root:  python3 tests/fixtures/generate.py

Operator norms come from dense Toeplitz matrices and their largest singular
value, and kernels are assembled with ``numpy.convolve`` (direct summation),
so none of the FFT or power-iteration code under test is reused.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.linalg import svdvals

from homlab.biparam import BiDecomposition, ProductGroup, bi_kernel_checks, tensor_kernel
from homlab.decomposition import Decomposition, NSchedule
from homlab.grid import Lattice
from homlab.groups import abelian, estimate_A0, heisenberg
from homlab.kernels import hilbert_kernel
from homlab.norms import dini_integral, dini_modulus
from homlab.weights import BallSampler, interval_bruteforce, power_weight, reverse_holder_probe

OUT = Path(__file__).with_name("oracles.json")
G = abelian(1)
K = hilbert_kernel(G)


def direct_kernel(dec: Decomposition, pairs):
    """``sum_k D_k * A_k`` by direct summation; ``pairs`` is (k, e_plus, e_minus)."""
    h = dec.lattice.h[0]
    out = np.zeros(dec.lattice.shape)
    for k, ep, em in pairs:
        d = dec.bump(ep) - (dec.bump(em) if em is not None else 0.0)
        out += np.convolve(d, dec.average(k).values, mode="same") * h
    return out


def toeplitz(kernel: np.ndarray, h: float) -> np.ndarray:
    """Matrix of ``f -> (f * kernel)`` restricted to the symmetric box."""
    n = kernel.size
    m = (n - 1) // 2
    i = np.arange(n)
    d = i[:, None] - i[None, :] + m
    ok = (d >= 0) & (d < n)
    return np.where(ok, kernel[np.clip(d, 0, n - 1)], 0.0) * h


def top_sv(A):
    return float(svdvals(A)[0])


def main():
    out = {}
    out["heisenberg_A0_1e6"] = estimate_A0(heisenberg(), 10 ** 6, seed=0)

    # single-scale pieces on the line: exact norms from dense matrices
    lat = Lattice((1024,), (1 / 64,))
    dec = Decomposition(K, lat, (-1, 2))
    norms = []
    for j in range(1, 7):
        kern = direct_kernel(dec, [(k, k - j - 1, k - j) for k in dec.ks()])
        norms.append(top_sv(toeplitz(kern, lat.h[0])))
    out["tilde_norms_1d"] = {"half": 1024, "h": 1 / 64, "k": [-1, 2], "values": norms}

    # Cotlar table on a reduced setup, exact compositions of dense matrices
    clat = Lattice((1024,), (1 / 32,))
    cdec = Decomposition(K, clat, (0, 3))
    tables = {}
    for j in (1, 3):
        mats = {k: toeplitz(direct_kernel(cdec, [(k, k - j - 1, k - j)]), clat.h[0]) for k in cdec.ks()}
        ks = sorted(mats)
        M = [[top_sv(mats[a].T @ mats[b]) + top_sv(mats[b] @ mats[a].T) for b in ks] for a in ks]
        tables[str(j)] = M
    out["cotlar_small"] = {"half": 1024, "h": 1 / 32, "k": [0, 3], "tables": tables}

    # power weights: brute force over every interval plus the sampled values
    wlat = Lattice((1000,), (1e-3,))
    fam = {}
    for a in (0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 0.9):
        wg = power_weight(a, G, wlat)
        bf = interval_bruteforce(wg.w.values, 2.0)
        fam[f"{a:g}"] = {"sampled_Ap": wg.Ap, "brute_Ap": bf["Ap"], "brute_Ainf": bf["Ainf_w"]}
    out["power_family"] = fam
    out["reverse_holder_sqrt_0.1"] = reverse_holder_probe(power_weight(0.5, G, wlat), 0.1)["parens_ratio"]

    # weighted L^2 norms of the truncated operator (dense oracle)
    slat = Lattice((512,), (1 / 16,))
    sdec = Decomposition(K, slat, (-3, 3))
    sched = NSchedule.powers_of_two(2)
    skern = direct_kernel(sdec, [(k, k - sched(2) - 1, None) for k in sdec.ks()])
    T = toeplitz(skern, slat.h[0])
    sharp = {}
    for a in (0.0, 0.3, 0.6, 0.8, 0.9):
        wg = power_weight(a, G, slat, 2.0, BallSampler())
        s = np.sqrt(wg.w.values)
        sharp[f"{a:g}"] = {"norm": top_sv(s[:, None] * T / s[None, :]), "Ap": wg.Ap}
    out["sharpness_dense"] = sharp

    # Dini moduli of K_j^N (direct kernels)
    dlat = Lattice((2048,), (1 / 64,))
    ddec = Decomposition(K, dlat, (-1, 2))
    dsched = NSchedule.powers_of_two(3)
    dini = []
    for j in (1, 2, 3):
        a, b = dsched(j), dsched(j - 1)
        kern = direct_kernel(ddec, [(k, k - a - 1, k - b - 1) for k in ddec.ks()])
        from homlab.grid import GridFunction
        dm = dini_modulus(GridFunction(G, dlat, kern), radii=2.0 ** np.arange(-1, 4))
        dini.append(dini_integral(dm["t"], dm["omega"]))
    out["dini_1d"] = dini

    # bi-parameter size constants on the default product setup
    pg = ProductGroup(G, G)
    blat = Lattice((256,), (1 / 16,))
    bk = tensor_kernel(pg, lambda u: np.sign(u[..., 0]), lambda v: np.sign(v[..., 0]))
    bdec = BiDecomposition(bk, blat, blat, (0, 1), (0, 1))
    rep = bi_kernel_checks(bdec, NSchedule.powers_of_two())
    out["bi_size"] = [r["size"] for r in rep.tables["constants"]]

    OUT.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
