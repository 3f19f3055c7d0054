import numpy as np
import pytest

from genpde import autodiff as ad

# --- finite-difference oracle -------------------------------------------------------


def _fd_once(f, x, t, h):
    c = f(x, t)
    xp, xm = f(x + h, t), f(x - h, t)
    tp, tm = f(x, t + h), f(x, t - h)
    pp, pm = f(x + h, t + h), f(x + h, t - h)
    mp, mm = f(x - h, t + h), f(x - h, t - h)
    return {
        "dx": (xp - xm) / (2 * h),
        "dt": (tp - tm) / (2 * h),
        "dxx": (xp - 2 * c + xm) / h ** 2,
        "dtt": (tp - 2 * c + tm) / h ** 2,
        "dxt": (pp - pm - mp + mm) / (4 * h * h),
    }


def fd_partials(f, x, t, h=1e-3, levels=1):
    """Central differences with ``levels`` Richardson steps (error O(h^(2 + 2 levels))).

    ``f`` maps float arrays (x, t) to float arrays of the same shape.
    """
    table = [_fd_once(f, x, t, h / 2 ** i) for i in range(levels + 1)]
    for j in range(1, levels + 1):
        c = 4 ** j
        table = [{k: (c * b[k] - a[k]) / (c - 1) for k in a} for a, b in zip(table, table[1:])]
    return table[0]


def rel_dev(a, b, floor):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


# --- random expression trees -------------------------------------------------------------

UNARY = ("sin", "cos", "exp", "tanh", "neg", "square", "pow")
BINARY = ("add", "sub", "mul", "div")


def random_tree(rng, depth):
    """Nested tuples describing a smooth expression of (x, t) with bounded exp/div arguments."""
    if depth == 0 or rng.uniform() < 0.15:
        r = rng.uniform()
        if r < 0.4:
            return ("x",)
        if r < 0.8:
            return ("t",)
        return ("c", float(rng.uniform(-2, 2)))
    if rng.uniform() < 0.5:
        return (str(rng.choice(UNARY)), random_tree(rng, depth - 1))
    return (str(rng.choice(BINARY)), random_tree(rng, depth - 1), random_tree(rng, depth - 1))


def eval_tree(node, x, t, lib):
    """Evaluate with ``lib`` = numpy (plain floats) or the jet primitives."""
    op = node[0]
    if op == "x":
        return x
    if op == "t":
        return t
    if op == "c":
        return node[1]
    a = eval_tree(node[1], x, t, lib)
    if op == "sin":
        return lib["sin"](a)
    if op == "cos":
        return lib["cos"](a)
    if op == "exp":
        # keep the argument in (-1, 1)
        return lib["exp"](lib["tanh"](a))
    if op == "tanh":
        return lib["tanh"](a)
    if op == "neg":
        return -a
    if op == "square":
        return a * a
    if op == "pow":
        # positive base, fractional power
        return (lib["exp"](lib["tanh"](a)) + 0.5) ** 1.5
    b = eval_tree(node[2], x, t, lib)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    # denominator bounded away from zero: 2 + sin(b) in [1, 3]
    return a / (2.0 + lib["sin"](b))


NP_LIB = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}
JET_LIB = {"sin": ad.sin, "cos": ad.cos, "exp": ad.exp, "tanh": ad.tanh}


# --- acceptance summary ------------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
