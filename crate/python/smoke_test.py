"""Smoke test for the rcindex_py extension module.

Build and install first:
    pip install maturin
    pip install --no-build-isolation ./crates/py
then run `python python/smoke_test.py`.
"""

import json
import math
import pathlib
import tempfile

import rcindex_py as rc


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    # two variables with r = 0.5
    corr = [[1.0, 0.5], [0.5, 1.0]]
    assert close(rc.kmo(corr)["overall"], 0.5)
    b = rc.bartlett(corr, 100)
    expected = -(99 - 9 / 6) * math.log(0.75)
    assert close(b["chi2"], expected), b

    values, vectors = rc.eigen(corr)
    assert close(values[0], 1.5) and close(values[1], 0.5)
    assert len(vectors) == 2

    table = rc.loading_table(["a", "b"], [[0.6, 0.3], [0.2, 0.7]])
    assert close(table["rows"][0]["h2"], 0.45)

    ranking = rc.rank(["B", "A", "C"], [1.0, 1.0, 3.0])
    assert [code for _, code, _ in ranking] == ["C", "A", "B"]

    items = [[float(i + (i * (j + 2)) % 5) for j in range(3)] for i in range(12)]
    rel = rc.reliability(items)
    assert 0.0 < rel["std_alpha"] <= 1.0

    try:
        rc.efa(corr, factors=2)
    except ValueError:
        pass
    else:
        raise AssertionError("two factors from two variables must be rejected")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        data = tmp / "synth.csv"
        data.write_text(rc.synthetic_panel(7, countries=60, years=3))
        dictionary = tmp / "dictionary.json"
        dictionary.write_text(json.dumps(rc.default_dictionary()))
        manifest = rc.run_pipeline(
            str(data), str(dictionary), str(tmp / "out"), seed=3, chains=2, iterations=300, warmup=150
        )
        stages = [s["stage"] for s in manifest["stages"]]
        assert stages[0] == "ingest" and len(stages) == 9, stages
        model = json.loads((tmp / "out" / "efa" / "factor_model.json").read_text())
        assert len(model["rotated_loadings"][0]) == 2

    print("rcindex_py smoke test passed")


if __name__ == "__main__":
    main()
