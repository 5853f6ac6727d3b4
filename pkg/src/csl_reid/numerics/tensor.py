"""Dense tensors, learnable parameters and the reverse-mode sweep."""

import contextlib
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_DTYPE = {"value": np.dtype(np.float32)}


def default_dtype() -> np.dtype:
    """Float dtype used for new parameters, images and buffers."""
    return _DTYPE["value"]


@contextlib.contextmanager
def precision(dtype) -> Iterator[np.dtype]:
    """Temporarily switch the default float dtype.

    Gradient checks run under ``precision(np.float64)``; training keeps the
    32-bit default.

    Args:
        dtype: ``np.float32`` or ``np.float64``.
    """
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported precision: {dtype}")
    previous = _DTYPE["value"]
    _DTYPE["value"] = dtype
    try:
        yield dtype
    finally:
        _DTYPE["value"] = previous


class Tensor:
    """A node of the computation graph.

    ``data`` holds the forward value. ``grad`` is filled by :meth:`backward`
    for every node that depends on a parameter. Nodes created from plain
    arrays (images, labels) carry no gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        requires_grad: bool = False,
    ):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(default_dtype())
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        # Constant subgraphs keep no history.
        self._parents = tuple(parents) if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def accumulate(self, grad: np.ndarray) -> None:
        """Add an incoming gradient contribution."""
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def _topological_order(self) -> List["Tensor"]:
        order: List[Tensor] = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self) -> None:
        """Propagate gradients from this scalar to every parameter it uses.

        Raises:
            ValueError: If the tensor is not a scalar.
            FloatingPointError: If any propagated gradient is not finite.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = self._topological_order()
        self.accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if not np.all(np.isfinite(node.grad)):
                    raise FloatingPointError("Non-finite gradient during backward pass")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


class ParamTensor(Tensor):
    """A named learnable array with a persistent gradient slot."""

    __slots__ = ("name", "trainable", "decay")

    def __init__(self, name: str, data, trainable: bool = True, decay: bool = True):
        super().__init__(np.ascontiguousarray(data), requires_grad=True)
        self.name = name
        self.trainable = trainable
        self.decay = decay
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, grad: np.ndarray) -> None:
        self.grad += grad

    def __repr__(self):
        return f"ParamTensor({self.name!r}, shape={self.shape})"


@dataclass
class BNState:
    """Per-channel batch normalization parameters and running statistics."""

    gamma: ParamTensor
    beta: ParamTensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    mode: str = "train"

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"BN eps must be positive, got {self.eps}")
        if self.mode not in ("train", "eval"):
            raise ValueError(f"BN mode must be 'train' or 'eval', got {self.mode!r}")

    @property
    def channels(self) -> int:
        return int(self.gamma.data.shape[0])


class ParamStore:
    """Registry of every parameter and batch-norm buffer of one model.

    Names are unique and namespaced (``pct.*``, ``backbone.*``,
    ``classifier.*``); the checkpoint layer relies on the registration order.
    """

    def __init__(self):
        self.params: Dict[str, ParamTensor] = {}
        self.bn_states: Dict[str, BNState] = {}

    def param(self, name: str, data, trainable: bool = True, decay: bool = True) -> ParamTensor:
        if name in self.params:
            raise ValueError(f"Duplicate parameter name: {name}")
        tensor = ParamTensor(name, np.asarray(data, dtype=default_dtype()), trainable, decay)
        self.params[name] = tensor
        return tensor

    def batch_norm(self, name: str, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> BNState:
        if name in self.bn_states:
            raise ValueError(f"Duplicate batch norm name: {name}")
        dtype = default_dtype()
        state = BNState(
            gamma=self.param(f"{name}.gamma", np.ones(channels, dtype=dtype), decay=False),
            beta=self.param(f"{name}.beta", np.zeros(channels, dtype=dtype), decay=False),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            eps=eps,
        )
        self.bn_states[name] = state
        return state

    def parameters(self) -> List[ParamTensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def set_mode(self, mode: str) -> None:
        for state in self.bn_states.values():
            if mode not in ("train", "eval"):
                raise ValueError(f"BN mode must be 'train' or 'eval', got {mode!r}")
            state.mode = mode

    def astype(self, dtype) -> None:
        """Cast every parameter and running statistic in place."""
        for tensor in self.params.values():
            tensor.data = np.ascontiguousarray(tensor.data, dtype=dtype)
            tensor.grad = np.zeros_like(tensor.data)
        for state in self.bn_states.values():
            state.running_mean = state.running_mean.astype(dtype)
            state.running_var = state.running_var.astype(dtype)

    def count(self, trainable_only: bool = True) -> int:
        return sum(p.data.size for p in self.params.values() if p.trainable or not trainable_only)

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Return parameters followed by running statistics, in registration order."""
        arrays = {name: tensor.data for name, tensor in self.params.items()}
        for name, state in self.bn_states.items():
            arrays[f"{name}.running_mean"] = state.running_mean
            arrays[f"{name}.running_var"] = state.running_var
        return arrays

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Restore values saved by :meth:`state_arrays`.

        Raises:
            ValueError: If names or shapes do not match this store.
        """
        expected = self.state_arrays()
        missing = sorted(set(expected) - set(arrays))
        unexpected = sorted(set(arrays) - set(expected))
        if missing or unexpected:
            raise ValueError(f"Checkpoint mismatch: missing={missing} unexpected={unexpected}")
        for name, array in arrays.items():
            if array.shape != expected[name].shape:
                raise ValueError(
                    f"Checkpoint shape mismatch for {name}: {array.shape} vs {expected[name].shape}"
                )
        for name, tensor in self.params.items():
            tensor.data = np.array(arrays[name], copy=True)
            tensor.grad = np.zeros_like(tensor.data)
        for name, state in self.bn_states.items():
            state.running_mean = np.array(arrays[f"{name}.running_mean"], copy=True)
            state.running_var = np.array(arrays[f"{name}.running_var"], copy=True)
