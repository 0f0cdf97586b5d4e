"""Smoke test for the mlbn extension module.

Build and install with `maturin develop --release` from crates/python, or copy
target/release/libmlbn.so next to this script as mlbn.so.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import mlbn


def main():
    g = mlbn.Graph(3, [(1, 2, 1.0), (2, 3, 0.5), (1, 3, 1.0)])
    ks = g.kleene_star()
    assert ks[0][2] == 1.5, ks
    assert ks[2][0] == -math.inf
    assert g.ancestors(3) == [1, 2]

    assert mlbn.kleene([[0.0, 2.0], [-math.inf, 0.0]])[0][1] == 2.0

    atoms = g.atoms(1, 3)
    assert atoms["i"] == 1 and atoms["j"] == 3
    assert atoms["atoms"][0]["location"] == 1.5

    clean = mlbn.simulate(g, 2000, seed=1, sigma=0.0)
    assert mlbn.min_estimate(clean, 1, 3)["estimate"] == 1.5

    s = mlbn.simulate(mlbn.Graph.preset("gmm"), 3000, seed=7, sigma=0.1)
    again = mlbn.simulate(mlbn.Graph.preset("gmm"), 3000, seed=7, sigma=0.1)
    assert s.log_x() == again.log_x()
    assert len(s.differences(1, 2)) == s.n_samples == 3000

    gmm = mlbn.gmm_estimate(s, 1, 2, kmax=4, seed=0)
    assert gmm["report"]["method"] and gmm["fit"]["K"] == len(gmm["fit"]["mu"]) >= 1

    qp = mlbn.qp_solve(s, 1, 2, 0.5, 0.5)
    assert qp["K1"] == 0.5 and "omega_hat" in qp
    auto = mlbn.qp_auto(s, 1, 2)
    assert auto["status"] in ("CONVERGED", "NEEDS_MANUAL_TUNING")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.csv")
        s.save(path)
        assert mlbn.Samples.load(path).log_x() == s.log_x()

    try:
        g.atoms(0, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("vertex 0 accepted")

    print("smoke test passed:", g, s)


if __name__ == "__main__":
    main()
