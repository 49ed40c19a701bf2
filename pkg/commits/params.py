"""Trainable parameter store, Adam optimizer and the binary checkpoint format."""
import hashlib
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np

from .autodiff import Tensor, default_dtype
from .exceptions import ConfigMismatch, MissingArtifact, ShapeMismatch

CHECKPOINT_MAGIC = b'CMWCKPT\x00'
CHECKPOINT_VERSION = 1


class AdamState:
    __slots__ = ('m', 'v')

    def __init__(self, shape: Tuple[int, ...], dtype):
        self.m = np.zeros(shape, dtype=dtype)
        self.v = np.zeros(shape, dtype=dtype)


class ParamStore:
    """Named trainable tensors plus their Adam moments and the shared step counter."""

    def __init__(self):
        self.params: 'OrderedDict[str, Tensor]' = OrderedDict()
        self.adam: Dict[str, AdamState] = {}
        self.step = 0

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def __len__(self) -> int:
        return len(self.params)

    @property
    def size(self) -> int:
        return int(np.sum([p.data.size for p in self.params.values()]))

    def add(self, name: str, shape: Tuple[int, ...], init: Union[str, np.ndarray] = 'xavier',
            rng: Optional[np.random.Generator] = None, fan: Optional[Tuple[int, int]] = None) -> Tensor:
        if name in self.params:
            raise ValueError(f"Duplicate parameter name {name!r}")
        if isinstance(init, np.ndarray):
            if init.shape != tuple(shape):
                raise ShapeMismatch(f"init {name}", init.shape, shape)
            values = init
        elif init == 'zeros':
            values = np.zeros(shape)
        elif init == 'xavier':
            fan_in, fan_out = fan if fan else (shape[0], shape[-1]) if len(shape) > 1 else (1, shape[0])
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            if rng is None:
                raise ValueError(f"xavier init of {name!r} needs a seeded generator")
            values = rng.uniform(-limit, limit, size=shape)
        else:
            raise ValueError(f"Unknown initializer {init!r}")
        tensor = Tensor(values, requires_grad=True, name=name)
        self.params[name] = tensor
        self.adam[name] = AdamState(tensor.shape, tensor.data.dtype)
        return tensor

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.params.items()}

    def restore(self, values: Dict[str, np.ndarray]) -> None:
        for name, array in values.items():
            target = self.params[name]
            if target.shape != array.shape:
                raise ShapeMismatch(f"restore {name}", target.shape, array.shape)
            target.data = array.astype(target.data.dtype, copy=True)

    def digest(self) -> str:
        digest = hashlib.sha256()
        for name, tensor in self.params.items():
            digest.update(name.encode('utf-8'))
            digest.update(np.ascontiguousarray(tensor.data, dtype='<f4').tobytes())
        return digest.hexdigest()


def adam_step(store: ParamStore, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update over every parameter; gradients are zeroed afterwards."""
    store.step += 1
    t = store.step
    for name, tensor in store.params.items():
        grad = tensor.grad
        if grad is None:
            continue
        state = store.adam[name]
        state.m = beta1 * state.m + (1.0 - beta1) * grad
        state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
        m_hat = state.m / (1.0 - beta1 ** t)
        v_hat = state.v / (1.0 - beta2 ** t)
        tensor.data = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(tensor.data.dtype)
    store.zero_grad()


def checkpoint_bytes(store: ParamStore) -> bytes:
    chunks = [CHECKPOINT_MAGIC, struct.pack('<II', CHECKPOINT_VERSION, len(store.params))]
    for name, tensor in store.params.items():
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<I', tensor.ndim))
        chunks.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype='<f4').tobytes())
    return b''.join(chunks)


def save_checkpoint(store: ParamStore, path) -> str:
    """Write the store and return the sha256 of the written file."""
    payload = checkpoint_bytes(store)
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def read_checkpoint(path) -> 'OrderedDict[str, np.ndarray]':
    path = Path(path)
    if not path.exists():
        raise MissingArtifact('checkpoint', str(path))
    payload = path.read_bytes()
    if not payload.startswith(CHECKPOINT_MAGIC):
        raise ConfigMismatch(f"{path} is not a checkpoint file")
    offset = len(CHECKPOINT_MAGIC)
    version, count = struct.unpack_from('<II', payload, offset)
    if version != CHECKPOINT_VERSION:
        raise ConfigMismatch(f"Unsupported checkpoint version {version}")
    offset += 8
    arrays: 'OrderedDict[str, np.ndarray]' = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack_from('<I', payload, offset)
        offset += 4
        name = payload[offset:offset + name_len].decode('utf-8')
        offset += name_len
        (rank,) = struct.unpack_from('<I', payload, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", payload, offset)
        offset += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(payload, dtype='<f4', count=size, offset=offset).reshape(dims).copy()
        offset += 4 * size
    return arrays


def load_checkpoint(path, store: Optional[ParamStore] = None) -> ParamStore:
    """Load values into ``store`` (names and shapes must agree) or into a fresh store."""
    arrays = read_checkpoint(path)
    if store is None:
        store = ParamStore()
        for name, array in arrays.items():
            store.add(name, array.shape, init=array.astype(default_dtype()))
        return store
    expected = [(name, tensor.shape) for name, tensor in store.params.items()]
    if [(name, array.shape) for name, array in arrays.items()] != expected:
        raise ConfigMismatch(f"Checkpoint {path} does not match the model's parameters")
    store.restore(arrays)
    return store
