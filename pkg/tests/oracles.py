"""Independent oracles shared by the test modules.

Central finite differences here are deliberately decoupled from the
package's automatic differentiation: they only ever call plain forward
evaluations, so a bug in the derivative code cannot hide in its own test.
"""

import numpy as np

FD_STEP = 1e-4


def rel_err(value, reference, floor=1e-8):
    """Max-norm relative error with a floor against vanishing references.

    Norm-relative (not entrywise) because central differences carry an
    absolute truncation/roundoff error of order h^2 * scale; entries far
    below the array's scale would otherwise drown in oracle noise.
    """
    value = np.asarray(value, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(np.abs(reference).max(initial=0.0), floor)
    return float(np.abs(value - reference).max() / scale)


def fd_gradient(f, x, h=FD_STEP):
    """Central-difference gradient of a scalar function of x (shape (d,))."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def fd_hessian(f, x, h=FD_STEP):
    """Central-difference Hessian of a scalar function of x."""
    x = np.asarray(x, dtype=float)
    d = x.size
    out = np.zeros((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        out[i, i] = (f(x + ei) - 2 * f(x) + f(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            out[i, j] = (f(x + ei + ej) - f(x + ei - ej)
                         - f(x - ei + ej) + f(x - ei - ej)) / (4 * h**2)
            out[j, i] = out[i, j]
    return out


def numpy_forward(net, x):
    """Straight-line re-evaluation of the layer composition in plain numpy."""
    h = np.asarray(x, dtype=float)
    if net.activation == "tanh":
        act = np.tanh
    elif net.activation == "sigmoid":
        act = lambda z: 1.0 / (1.0 + np.exp(-z))
    else:
        raise ValueError(net.activation)
    for w, b in net.params[:-1]:
        h = act(np.asarray(w) @ h + np.asarray(b))
    w, b = net.params[-1]
    return np.asarray(w) @ h + np.asarray(b)
