"""Smoke test for the latentreg extension module.

Build first:
    cargo build -p latentreg-py --features extension-module
then run this script from the repository root. Set LATENTREG_LIB to point
at a different build of liblatentreg_py.so.
"""

import importlib.util
import os
import shutil
import sys
import tempfile

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", ".."))


def load_module():
    lib = os.environ.get("LATENTREG_LIB", os.path.join(ROOT, "target", "debug", "liblatentreg_py.so"))
    if not os.path.exists(lib):
        sys.exit(f"extension not found at {lib}; build it first")
    tmp = tempfile.mkdtemp()
    target = os.path.join(tmp, "latentreg.so")
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("latentreg", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    lr = load_module()
    x, y, theta = lr.simulate(n=100, p=15, m=10, k=2, eta=0.2, seed=3)
    assert len(x) == 100 and len(x[0]) == 15 and len(y[0]) == 10

    model = lr.FittedModel(x, y, k=2, seed=1)
    assert model.k == 2
    assert model.shape == (100, 15, 10)
    assert len(model.f_hat()) == 15
    assert len(model.b_hat()) == 2
    assert all(s > 0 for s in model.sigma2())

    res = model.infer_theta(0, 0, alpha=0.05)
    assert res.ci_low <= res.theta_debiased <= res.ci_high
    assert 0.0 <= res.p_value <= 1.0
    print(res, "true", theta[0][0])

    b = model.test_hidden(4)
    assert b.df == 2 and 0.0 <= b.p_value <= 1.0
    print(b)

    try:
        model.infer_theta(99, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("out-of-range entry accepted")

    selected = lr.FittedModel(x, y)
    print("selected k:", selected.k)
    print("smoke test passed, version", lr.__version__)


if __name__ == "__main__":
    main()
