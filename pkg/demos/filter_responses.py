"""Show what a freshly initialized filter bank looks like on the spectrum.

Builds a bank of K spectral filters, sketches each response g_k(lambda)
over [0, 2] as an ASCII strip, then shows how the per-channel mixing
weights alpha combine them into effective per-channel filters, and how a
Chebyshev expansion converges to one of the responses.
"""

import numpy as np

from gwmixer import (
    bank_responses,
    build_filter_bank,
    chebyshev_fit,
    filter_eval,
)

BLOCKS = " .:-=+*#%@"


def sparkline(values):
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo if hi > lo else 1.0
    idx = ((values - lo) / span * (len(BLOCKS) - 1)).astype(int)
    return "".join(BLOCKS[i] for i in idx)


def main():
    k, d = 4, 8
    bank = build_filter_bank(k, d, seed=7)
    lam = np.linspace(0.0, 2.0, 64)
    resp = bank_responses(bank, lam)  # (k, 64)

    print(f"filter bank: K={k} filters, d={d} channels, seed 7")
    print("response of each filter over lambda in [0, 2]  (low = smooth/global")
    print("structure on the graph, high = sharp/local):\n")
    for i in range(k):
        r = resp[i]
        print(f"  g_{i + 1}  [{r.min():.3f}, {r.max():.3f}]  |{sparkline(r)}|")

    print("\neffective per-channel filters h_c = sum_k alpha_kc * g_k.")
    print("at init every channel mixes the bank uniformly (alpha = 1/K), so")
    print("here alpha is randomized the way training would differentiate it")
    print("(three sample channels):\n")
    bank.alpha[:] = np.random.default_rng(1).dirichlet(np.ones(k), size=d).T
    eff = bank.alpha.T @ resp  # (d, 64)
    for c in (0, d // 2, d - 1):
        h = eff[c]
        print(f"  ch{c:<3d} [{h.min():.3f}, {h.max():.3f}]  |{sparkline(h)}|")

    print("\nChebyshev expansion of g_1 (max error on [0, 2] vs order):")
    fn = lambda t: filter_eval(bank.filters[0], t)
    for order in (2, 4, 8, 16, 32):
        _, err = chebyshev_fit(fn, order)
        print(f"  order {order:>2d}: {err:.3e}")
    print("\nthe recurrence applies these filters with sparse matrix-vector")
    print("products only -- no eigendecomposition.")


if __name__ == "__main__":
    main()
