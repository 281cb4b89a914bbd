"""
Neural bid strategies.

A PolicyNet is a small fully connected network with SeLU hidden layers and a
ReLU output layer, evaluated and differentiated by hand with numpy. One net
is shared by all bidders of a symmetric auction.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from gym_smooth_auctions.errors import ConfigurationError

logger = logging.getLogger(__name__)

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

FORMAT_VERSION = 1
HIDDEN_ACTIVATION = "selu"
OUTPUT_ACTIVATIONS = ("relu", "gaussian")

DEFAULT_HIDDEN = (10, 10)
PRETRAIN_ITERATIONS = 50
PRETRAIN_BATCH = 2**10
PRETRAIN_STEP_SIZE = 2e-2


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


class ForwardCache(NamedTuple):
    """Layer inputs and pre-activations remembered for the backward pass."""

    inputs: list
    pre_activations: list


@dataclass(frozen=True)
class AdamConfig:
    """
    Attributes:
        step_size (float): Initial step size.
        beta1 (float): First moment decay.
        beta2 (float): Second moment decay.
        eps (float): Denominator offset.
        anneal (bool): Cosine-anneal the step size over a known horizon.
        final_fraction (float): Step size at the end of the horizon, as a
            fraction of step_size.
    """

    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    anneal: bool = True
    final_fraction: float = 0.0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigurationError(f"step_size must be positive, got {self.step_size}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("moment decays must lie in [0, 1)")
        if not 0 <= self.final_fraction <= 1:
            raise ConfigurationError("final_fraction must lie in [0, 1]")


class Adam:
    """
    Adaptive-moment optimizer over a flat parameter vector.

    With a horizon and config.anneal the step size follows a half cosine from
    step_size down to final_fraction * step_size; the first step uses the full
    step size. Without a horizon the step size is constant.
    """

    def __init__(
        self,
        n_params: int,
        config: AdamConfig = AdamConfig(),
        horizon: Optional[int] = None,
    ):
        self.config = config
        self.horizon = horizon
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def current_step_size(self) -> float:
        """Step size of the next update."""
        c = self.config
        if not c.anneal or not self.horizon:
            return c.step_size
        progress = min(self.t, self.horizon) / self.horizon
        cosine = 0.5 * (1.0 + np.cos(np.pi * progress))
        return c.step_size * (c.final_fraction + (1.0 - c.final_fraction) * cosine)

    def step(self, theta: np.ndarray, grad: np.ndarray, ascent: bool = True):
        """
        Returns the updated parameters.

        Args:
            theta (np.ndarray): Current flat parameters.
            grad (np.ndarray): Gradient of the objective at theta.
            ascent (bool): Maximize the objective if True, minimize otherwise.
        """
        c = self.config
        step_size = self.current_step_size()
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad**2
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        direction = 1.0 if ascent else -1.0
        return theta + direction * step_size * m_hat / (np.sqrt(v_hat) + c.eps)


class PolicyNet:
    """
    Multilayer perceptron bid function.

    Attributes:
        layer_sizes (tuple[int, ...]): Widths from input to output layer.
        output_activation (str): "relu" for pure bids, "gaussian" for mixed
            strategies whose first half of outputs are ReLU means and second
            half unconstrained scale parameters.
        weights (list[np.ndarray]): Per layer, shape (fan_in, fan_out).
        biases (list[np.ndarray]): Per layer, shape (fan_out,).
    """

    def __init__(
        self,
        layer_sizes: Sequence[int],
        output_activation: str = "relu",
        rng: Optional[np.random.Generator] = None,
    ):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {self.layer_sizes}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError(f"unknown output activation {output_activation!r}")
        if output_activation == "gaussian" and self.layer_sizes[-1] % 2:
            raise ConfigurationError("gaussian output layer needs an even width")
        self.output_activation = output_activation

        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @classmethod
    def for_items(
        cls,
        n_items: int,
        hidden: Sequence[int] = DEFAULT_HIDDEN,
        mixed: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> "PolicyNet":
        """Default architecture: m inputs, 10-10 hidden, m outputs (2m if mixed)."""
        n_out = 2 * n_items if mixed else n_items
        return cls(
            (n_items, *hidden, n_out),
            output_activation="gaussian" if mixed else "relu",
            rng=rng,
        )

    @classmethod
    def linear(cls, n_items: int, slope: float, intercept: float = 0.0) -> "PolicyNet":
        """Single affine layer bidding relu(slope * v + intercept) item-wise."""
        net = cls((n_items, n_items))
        net.weights[0] = slope * np.eye(n_items)
        net.biases[0] = np.full(n_items, float(intercept))
        return net

    @property
    def n_items(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_params(self) -> int:
        return sum(
            (fan_in + 1) * fan_out
            for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )

    @property
    def mixed(self) -> bool:
        return self.output_activation == "gaussian"

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend((w.ravel(), b))
        return np.concatenate(parts)

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ConfigurationError(
                f"expected {self.n_params} parameters, got shape {theta.shape}"
            )
        offset = 0
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[idx] = theta[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[idx] = theta[offset : offset + b.size].copy()
            offset += b.size

    def copy(self) -> "PolicyNet":
        clone = PolicyNet(self.layer_sizes, self.output_activation)
        clone.set_flat(self.get_flat())
        return clone

    def with_params(self, theta: np.ndarray) -> "PolicyNet":
        clone = self.copy()
        clone.set_flat(theta)
        return clone

    def _output(self, z: np.ndarray) -> np.ndarray:
        if self.output_activation == "relu":
            return np.maximum(z, 0.0)
        half = z.shape[1] // 2
        return np.concatenate([np.maximum(z[:, :half], 0.0), z[:, half:]], axis=1)

    def _output_grad(self, z: np.ndarray) -> np.ndarray:
        grad = (z > 0).astype(np.float64)
        if self.output_activation == "gaussian":
            grad[:, z.shape[1] // 2 :] = 1.0
        return grad

    def forward(self, values: np.ndarray):
        """
        Evaluates the network.

        Args:
            values (np.ndarray): Inputs of shape (batch, layer_sizes[0]).

        Returns:
            tuple[np.ndarray, ForwardCache]: Outputs of shape
                (batch, layer_sizes[-1]) and the cache for backward().
        """
        a = np.asarray(values, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.layer_sizes[0]:
            raise ConfigurationError(
                f"inputs must have shape (batch, {self.layer_sizes[0]}), got {a.shape}"
            )
        inputs, pre = [], []
        last = len(self.weights) - 1
        for idx, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            a = self._output(z) if idx == last else selu(z)
        return a, ForwardCache(inputs, pre)

    def backward(
        self,
        cache: ForwardCache,
        upstream: np.ndarray,
        through_output_activation: bool = True,
    ) -> np.ndarray:
        """
        Reverse-mode gradient of sum(upstream * outputs) over the batch.

        Args:
            cache (ForwardCache): Cache returned by forward() on the same inputs.
            upstream (np.ndarray): d loss / d outputs, shape of the outputs.
            through_output_activation (bool): If False, upstream is taken as
                d loss / d output pre-activations instead.

        Returns:
            np.ndarray: Flat gradient aligned with get_flat().
        """
        if len(cache.pre_activations) != len(self.weights):
            raise ConfigurationError("forward cache does not belong to this network")
        upstream = np.asarray(upstream, dtype=np.float64)
        z_out = cache.pre_activations[-1]
        if upstream.shape != z_out.shape:
            raise ConfigurationError(
                f"upstream shape {upstream.shape} does not match outputs {z_out.shape}"
            )
        delta = upstream * self._output_grad(z_out) if through_output_activation else upstream

        grads = [None] * (2 * len(self.weights))
        for idx in range(len(self.weights) - 1, -1, -1):
            grads[2 * idx] = cache.inputs[idx].T @ delta
            grads[2 * idx + 1] = delta.sum(axis=0)
            if idx > 0:
                delta = (delta @ self.weights[idx].T) * selu_grad(
                    cache.pre_activations[idx - 1]
                )
        return np.concatenate([g.ravel() for g in grads])

    def bid(self, values: np.ndarray) -> np.ndarray:
        """Deterministic bids, the mean head for mixed strategies."""
        out, _ = self.forward(values)
        return out[:, : self.n_items] if self.mixed else out

    def save(self, path) -> Path:
        """Writes a versioned .npz file with architecture header and flat parameters."""
        path = Path(path)
        np.savez(
            path,
            format_version=np.array(FORMAT_VERSION),
            layer_sizes=np.array(self.layer_sizes),
            activations=np.array([HIDDEN_ACTIVATION, self.output_activation]),
            params=self.get_flat(),
        )
        return path if path.suffix == ".npz" else path.with_suffix(".npz")

    @classmethod
    def load(cls, path) -> "PolicyNet":
        with np.load(path) as data:
            version = int(data["format_version"])
            if version != FORMAT_VERSION:
                raise ConfigurationError(f"unsupported policy format version {version}")
            hidden, output = (str(a) for a in data["activations"])
            if hidden != HIDDEN_ACTIVATION:
                raise ConfigurationError(f"unsupported hidden activation {hidden!r}")
            net = cls(data["layer_sizes"].tolist(), output_activation=output)
            net.set_flat(data["params"])
        return net


def truthful_mse(net: PolicyNet, values: np.ndarray) -> float:
    return float(np.mean((net.bid(values) - values) ** 2))


def pretrain(
    net: PolicyNet,
    sampler: Callable[[int], np.ndarray],
    iterations: int = PRETRAIN_ITERATIONS,
    batch_size: int = PRETRAIN_BATCH,
    config: AdamConfig = AdamConfig(step_size=PRETRAIN_STEP_SIZE),
) -> PolicyNet:
    """
    Supervised pretraining towards truthful bidding.

    Minimizes the mean squared error between the bid head's pre-activation and
    the valuation, so a ReLU output that starts out inactive still learns.

    Args:
        net (PolicyNet): Network to update in place.
        sampler (Callable[[int], np.ndarray]): Draws (batch, m) valuations.
        iterations (int): Number of descent steps.
        batch_size (int): Valuations drawn per step.
        config (AdamConfig): Optimizer settings.

    Returns:
        PolicyNet: The same network.
    """
    optimizer = Adam(net.n_params, config)
    m = net.n_items
    for _ in range(iterations):
        values = sampler(batch_size)
        _, cache = net.forward(values)
        z = cache.pre_activations[-1]
        upstream = np.zeros_like(z)
        upstream[:, :m] = 2.0 * (z[:, :m] - values) / values.size
        grad = net.backward(cache, upstream, through_output_activation=False)
        net.set_flat(optimizer.step(net.get_flat(), grad, ascent=False))
    if iterations:
        logger.debug(
            "pretrained %d iterations, truthful mse %.3g",
            iterations,
            truthful_mse(net, values),
        )
    return net
