"""Interventional estimates from observational regimes.

Binary treatment X, binary outcome Y, binary confounder Z that drives both.
The naive conditional P(Y=1 | X=1) overstates the effect because treated
units are disproportionately high-Z. Adjusting for Z inside each regime and
averaging the per-regime answers over the cover recovers the do-value; the
exact targets here are 0.30 under X=0 and 0.60 under X=1.
"""
import numpy as np

from jstab.aggregate import jdo_backdoor


def draw(n, rng):
    z = rng.random(n) < 0.5
    x = rng.random(n) < 0.2 + 0.6 * z
    y = rng.random(n) < 0.1 + 0.3 * x + 0.4 * z
    return np.column_stack([x, z, y]).astype(float)


def main():
    rng = np.random.default_rng(20)
    data = {"spring": draw(40_000, rng), "autumn": draw(40_000, rng)}
    pooled = np.vstack(list(data.values()))

    print("      naive   adjusted   truth")
    for x_val, truth in ((0.0, 0.30), (1.0, 0.60)):
        sel = pooled[:, 0] == x_val
        naive = pooled[sel, 2].mean()
        levels, probs = jdo_backdoor(data, x_var=0, x_val=x_val, y_var=2,
                                     z_vars=(1,), cover=("spring", "autumn"))
        adj = float(probs[list(levels).index(1.0)])
        print(f"x={x_val:.0f}   {naive:.3f}    {adj:.3f}     {truth:.2f}")

    print("\nnaive contrast inflates the effect; the covariate-adjusted "
          "per-regime estimates glue to the interventional one")


if __name__ == "__main__":
    main()
