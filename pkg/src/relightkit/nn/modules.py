"""Parameter containers and the basic layers built on the autodiff engine."""

import numpy as np

from .tensor import Tensor, conv2d


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.asarray(data))
        self.requires_grad = True


class Module:
    """Lightweight container: attributes that are Parameters or Modules are
    discovered by name, so checkpoints address tensors as dotted paths."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} "
                             f"unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {p.data.shape}")
            p.data = arr.copy()

    def param_count(self):
        return sum(p.data.size for p in self.parameters())

    def astype(self, dtype):
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
        return self


def he_init(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, pad=None, dtype=np.float32,
                 zero_init=False):
        self.stride = stride
        self.pad = (k - 1) // 2 if pad is None else pad
        if zero_init:
            w = np.zeros((cout, cin, k, k), dtype=dtype)
        else:
            w = he_init(rng, (cout, cin, k, k), cin * k * k, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)


class Linear(Module):
    def __init__(self, fin, fout, rng, dtype=np.float32, zero_init=False):
        if zero_init:
            w = np.zeros((fin, fout), dtype=dtype)
        else:
            w = he_init(rng, (fin, fout), fin, dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(fout, dtype=dtype))

    def __call__(self, x):
        return x @ self.weight + self.bias
