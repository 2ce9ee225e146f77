import numpy as np
import pytest

from hho.mesh import generate_mesh

MESH_KINDS = ["triangular", "cartesian", "voronoi_polygonal"]


@pytest.fixture(scope="session")
def meshes():
    """Small meshes of every built-in family, keyed by kind."""
    return {kind: generate_mesh(kind, 4) for kind in MESH_KINDS}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_polynomial(degree, rng):
    """Random global polynomial of the given degree with its gradient."""
    from hho.polycalc import monomial_exponents
    ex = monomial_exponents(degree)
    c = rng.standard_normal(len(ex))

    def f(x):
        return sum(ci * x[:, 0] ** a * x[:, 1] ** b for ci, (a, b) in zip(c, ex))

    def grad(x):
        gx = sum(ci * a * x[:, 0] ** max(a - 1, 0) * x[:, 1] ** b for ci, (a, b) in zip(c, ex))
        gy = sum(ci * b * x[:, 0] ** a * x[:, 1] ** max(b - 1, 0) for ci, (a, b) in zip(c, ex))
        return gx + 0 * x[:, 0], gy + 0 * x[:, 0]

    return f, grad


# acceptance criteria report: (criterion, passed, detail) tuples appended by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    status = {}
    for crit, ok, detail in ACCEPTANCE:
        status.setdefault(crit, []).append((ok, detail))
    terminalreporter.section("acceptance criteria")
    for crit in sorted(status):
        ok = all(o for o, _ in status[crit])
        failed = [d for o, d in status[crit] if not o]
        line = f"criterion {crit}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(line + (f"  ({'; '.join(failed)})" if failed else ""))
