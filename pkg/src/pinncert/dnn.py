"""Dense feed-forward networks with exact input- and parameter-derivatives.

Networks are immutable: every field of :class:`Network` is a value, and all
operations return fresh instances.  Hidden layers apply a smooth activation
(tanh by default); the output layer is affine.  Weight matrices and the final
bias are constrained to a box ``[-B, B]``; hidden biases are unconstrained.

Input derivatives (``grad_x``, ``hessian_x``, ``laplacian_x``) and parameter
gradients of quadrature losses are computed by nested forward-mode automatic
differentiation, so they are exact up to floating point rather than finite
difference approximations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import jax
import jax.flatten_util
import jax.numpy as jnp
import numpy as np

Params = tuple  # ((W_1, b_1), ..., (W_L, b_L)) with jnp arrays

_CHECKPOINT_FORMAT = "pinncert-network"
_CHECKPOINT_VERSION = 1

# Activations must be C-infinity: losses differentiate the network twice in x
# and once more in the parameters.
_ACTIVATIONS: dict[str, Callable] = {
    "tanh": jnp.tanh,
    "sigmoid": jax.nn.sigmoid,
}


@dataclass(frozen=True)
class WeightBound:
    """Half-width of the admissible box for weights and the final bias.

    ``b = 0`` degenerates to the single point {0} and is accepted (it is
    still a compact set, and useful in tests).
    """

    b: float = 10.0

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"weight bound must be nonnegative, got {self.b}")


@dataclass(frozen=True)
class Network:
    """Immutable dense network: layer widths, parameters, activation, bound."""

    arch: tuple[int, ...]
    params: Params
    activation: str = "tanh"
    bound: WeightBound = WeightBound()
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.arch[0]

    @property
    def output_dim(self) -> int:
        return self.arch[-1]

    def __call__(self, x):
        return forward(self, x)


def activation_fn(name: str) -> Callable:
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(
            f"unsupported activation {name!r}; need a smooth one of {sorted(_ACTIVATIONS)}"
        ) from None


def _validate_arch(arch: Sequence[int]) -> tuple[int, ...]:
    arch = tuple(int(w) for w in arch)
    if len(arch) < 2:
        raise ValueError(f"need at least input and output widths, got {arch}")
    if any(w < 1 for w in arch):
        raise ValueError(f"all layer widths must be >= 1, got {arch}")
    if arch[0] > 3:
        raise ValueError(f"input dimension limited to <= 3, got {arch[0]}")
    return arch


def init_network(
    arch: Sequence[int],
    seed: int = 0,
    bound: WeightBound | float = WeightBound(),
    activation: str = "tanh",
) -> Network:
    """Create a network with Glorot-uniform weights clipped into the bound box.

    Deterministic for a fixed ``seed``.  Biases start at zero, which always
    satisfies the box constraint on the final bias.
    """
    arch = _validate_arch(arch)
    if isinstance(bound, (int, float)):
        bound = WeightBound(float(bound))
    activation_fn(activation)  # fail early on bad names
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(arch[:-1], arch[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        w = np.clip(w, -bound.b, bound.b)
        params.append((jnp.asarray(w), jnp.zeros(fan_out)))
    return Network(arch=arch, params=tuple(params), activation=activation,
                   bound=bound, seed=seed)


def apply_params(params: Params, x, activation: str = "tanh"):
    """Evaluate the layer composition for one input point ``x`` of shape (d,).

    Hidden layers are ``act(W h + b)``; the final layer is affine.
    """
    act = activation_fn(activation)
    h = x
    for w, b in params[:-1]:
        h = act(w @ h + b)
    w, b = params[-1]
    return w @ h + b


def _check_input(net: Network, x) -> jnp.ndarray:
    x = jnp.atleast_1d(jnp.asarray(x, dtype=jnp.float64))
    if x.shape != (net.input_dim,):
        raise ValueError(
            f"input has shape {x.shape}, network expects ({net.input_dim},)"
        )
    return x


def forward(net: Network, x) -> np.ndarray:
    """Network output at a single point, shape (output_dim,)."""
    x = _check_input(net, x)
    return np.asarray(apply_params(net.params, x, net.activation))


def grad_x(net: Network, x) -> np.ndarray:
    """Jacobian of the outputs with respect to the input, shape (out, d)."""
    x = _check_input(net, x)
    jac = jax.jacfwd(lambda p: apply_params(net.params, p, net.activation))(x)
    return np.asarray(jac)


def hessian_x(net: Network, x, output: int = 0) -> np.ndarray:
    """(d, d) Hessian of one output component."""
    x = _check_input(net, x)
    f = lambda p: apply_params(net.params, p, net.activation)[output]
    return np.asarray(jax.jacfwd(jax.jacfwd(f))(x))


def laplacian_x(net: Network, x, output: int = 0) -> float:
    """Trace of the Hessian over all input coordinates."""
    return float(np.trace(hessian_x(net, x, output)))


def param_grad(net: Network, loss: Callable[[Network], float]) -> np.ndarray:
    """Exact gradient of ``loss(net)`` with respect to every parameter.

    ``loss`` must be jax-traceable (built from jnp operations and the
    package's field/loss machinery), and may differentiate the network in x
    internally; the chain rule runs through those nested derivatives.
    Returns a flat vector in the ordering of :func:`params_pack`.
    """
    grads = jax.grad(lambda p: loss(replace(net, params=p)))(net.params)
    flat, _ = jax.flatten_util.ravel_pytree(grads)
    return np.asarray(flat)


def params_pack(net: Network) -> np.ndarray:
    """Flatten all parameters to one vector (layer order, W row-major then b)."""
    flat, _ = jax.flatten_util.ravel_pytree(net.params)
    return np.asarray(flat)


def params_unpack(net: Network, vector) -> Network:
    """Rebuild a network from a flat parameter vector; inverse of pack."""
    flat, unravel = jax.flatten_util.ravel_pytree(net.params)
    vector = jnp.asarray(vector, dtype=jnp.float64)
    if vector.shape != flat.shape:
        raise ValueError(f"expected {flat.shape[0]} entries, got {vector.shape}")
    return replace(net, params=unravel(vector))


def clip_params(params: Params, b: float) -> Params:
    """Clip all weight matrices and the final bias into [-b, b].

    Hidden biases are left untouched; only weights and the last bias are
    assumed bounded.
    """
    clipped = [(jnp.clip(w, -b, b), bias) for w, bias in params[:-1]]
    w, bias = params[-1]
    clipped.append((jnp.clip(w, -b, b), jnp.clip(bias, -b, b)))
    return tuple(clipped)


def project_params(net: Network, bound: WeightBound | None = None) -> Network:
    """Component-wise projection of the network into its parameter box."""
    b = (bound or net.bound).b
    out = replace(net, params=clip_params(net.params, b))
    if bound is not None:
        out = replace(out, bound=bound)
    return out


def params_in_bound(net: Network, tol: float = 0.0) -> bool:
    b = net.bound.b + tol
    for i, (w, bias) in enumerate(net.params):
        if np.abs(np.asarray(w)).max(initial=0.0) > b:
            return False
        if i == len(net.params) - 1 and np.abs(np.asarray(bias)).max(initial=0.0) > b:
            return False
    return True


def save_checkpoint(net: Network, path) -> None:
    """Write a versioned JSON checkpoint (arch, activation, parameters, seed, bound)."""
    record = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "arch": list(net.arch),
        "activation": net.activation,
        "seed": net.seed,
        "bound": net.bound.b,
        "weights": [np.asarray(w).tolist() for w, _ in net.params],
        "biases": [np.asarray(b).tolist() for _, b in net.params],
    }
    Path(path).write_text(json.dumps(record))


def load_checkpoint(path) -> Network:
    record = json.loads(Path(path).read_text())
    if record.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"not a network checkpoint: {path}")
    if record.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {record.get('version')}")
    params = tuple(
        (jnp.asarray(w, dtype=jnp.float64), jnp.asarray(b, dtype=jnp.float64))
        for w, b in zip(record["weights"], record["biases"])
    )
    return Network(
        arch=tuple(record["arch"]),
        params=params,
        activation=record["activation"],
        bound=WeightBound(record["bound"]),
        seed=record["seed"],
    )
