"""Score search with a cross-regime drift penalty.

Two regimes, four variables, two candidate edges. X2 -> X3 keeps the same
coefficient in both regimes; X0 -> X1 either matches it in stability or
drifts between 1.0 and 0.4. Greedy search accepts the strongest move first,
and a drifting coefficient erodes the pooled fit, so the drifting edge loses
its front position to the stable competitor. With lambda_j > 0 each move
also pays the distance between its per-regime coefficient fits, pushing the
same ordering, and the decision log carries the paid penalty per move, so
an unstable edge is visible even after it is accepted.
"""
import numpy as np

from jstab.ges import ScoreConfig, decision_log_rows, tces_search


def build(beta01, rng):
    data = {}
    for env, b in zip(("summer", "winter"), beta01):
        X = rng.normal(size=(4000, 4))
        X[:, 1] = b * X[:, 0] + X[:, 1]
        X[:, 3] = 0.68 * X[:, 2] + X[:, 3]
        data[env] = X
    return data


def first_acceptance(log, pair):
    for step, delta in enumerate(log):
        kind, u, v = delta.move
        if kind == "add" and {u, v} == set(pair):
            return step
    return None


def main():
    rng = np.random.default_rng(7)
    cfg = ScoreConfig(lambda_j=0.1)
    scenarios = (("stable", (0.7, 0.7)), ("drifting", (1.0, 0.4)))

    for name, betas in scenarios:
        res = tces_search(build(betas, rng), cfg)
        s01 = first_acceptance(res.log, (0, 1))
        s23 = first_acceptance(res.log, (2, 3))
        lead = "X0->X1 enters first" if s01 < s23 else "X2->X3 enters first"
        print(f"{name:>9} X0->X1 ({betas[0]}/{betas[1]}): {lead} "
              f"(steps {s01} vs {s23})")
        for row in decision_log_rows(res.log, cfg):
            print(f"           {row['move']:<10} fit gain "
                  f"{row['delta_bic']:8.1f}   drift paid "
                  f"{row['lambda_j_dJ']:.4f}")
        print()

    print("the drift column separates the two edges by an order of "
          "magnitude; the fit gain alone never would")


if __name__ == "__main__":
    main()
