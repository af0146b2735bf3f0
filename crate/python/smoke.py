"""Smoke test for the qrec Python bindings.

Build and install first:  pip install --no-build-isolation ./crates/python
"""

import json
import math

import qrec


def main():
    store = qrec.MatrixStore.from_triplets([(0, 0, 0.4), (0, 1, 0.4), (0, 2, 0.8), (0, 3, 0.2)])
    assert abs(store.subtree_weight(0, "0") - 0.32) < 1e-15
    assert abs(store.subtree_weight(0, "1") - 0.68) < 1e-15
    assert abs(store.frobenius_norm() - 1.0) < 1e-15

    restored = qrec.MatrixStore.deserialize(store.serialize())
    assert restored.to_dense() == store.to_dense()

    _, sigma, _ = qrec.svd([[3.0, 0.0], [0.0, 4.0]])
    assert sigma == [4.0, 3.0]

    diag = qrec.MatrixStore.from_dense([[3.0, 0.0], [0.0, 1.0]])
    out = json.loads(qrec.sve(diag, [1.0, 1.0], 0.05, path="circuit", seed=1))
    assert len(out["components"]) == 2

    state, kept, _ = qrec.threshold_project(diag, [1.0, 1.0], 2.0)
    assert kept == [0] and abs(abs(state[0]) - 1.0) < 1e-12

    prefs = qrec.generate_preferences(16, 16, 2, seed=4)
    t = qrec.MatrixStore.from_dense(prefs)
    sigma = qrec.recommendation_sigma(t.frobenius_norm(), 2, 0.3, 1.0)
    user = next(i for i in range(16) if t.row_norm(i) > 0)
    picks = qrec.recommend(t, user, sigma, count=20, seed=2)
    assert picks == qrec.recommend(t, user, sigma, count=20, seed=2)
    assert all(0 <= p < 16 for p in picks)

    assert math.isclose(qrec.bad_sample_bound(0.1), (0.1 / 0.9) ** 2)

    report = json.loads(qrec.run_experiment(json.dumps({"users": 24, "products": 24, "rank": 2})))
    assert report["schema"] == "qrec.experiment.report/v1"

    try:
        qrec.recommend(qrec.MatrixStore.from_dense([[1.0, 0.0], [0.0, 0.0]]), 1, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("cold-start user accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
