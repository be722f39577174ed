"""Parameter store, Adam, dropout, gradient checking and checkpoints."""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .errors import ConfigError, ContractError


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent, reproducible RNG stream derived from (seed, stream name)."""
    digest = hashlib.sha256(stream.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, key])))


class ParamStore:
    """Flat collection of named trainable tensors."""

    def __init__(self, seed: int = 0):
        self.params: Dict[str, Tensor] = {}
        self._rng = named_rng(seed, "init")

    def matrix(self, name: str, fan_in: int, fan_out: int) -> Tensor:
        """Glorot-uniform matrix parameter of shape (fan_in, fan_out)."""
        a = np.sqrt(6.0 / (fan_in + fan_out))
        data = self._rng.uniform(-a, a, size=(fan_in, fan_out))
        return self._register(name, data)

    def vector(self, name: str, size: int, init: str = "zeros") -> Tensor:
        if init == "zeros":
            data = np.zeros(size)
        else:
            a = np.sqrt(6.0 / (size + 1))
            data = self._rng.uniform(-a, a, size=size)
        return self._register(name, data)

    def scalar(self, name: str, value: float = 0.0) -> Tensor:
        return self._register(name, np.asarray(value))

    def table(self, name: str, rows: int, dim: int, init: str = "zeros") -> Tensor:
        """Embedding / bias lookup table of shape (rows, dim)."""
        if init == "zeros":
            data = np.zeros((rows, dim))
        else:
            a = np.sqrt(6.0 / (rows + dim))
            data = self._rng.uniform(-a, a, size=(rows, dim))
        return self._register(name, data)

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(data.astype(autodiff.get_default_dtype()), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __iter__(self):
        return iter(self.params.items())

    def __len__(self):
        return len(self.params)

    def n_values(self) -> int:
        return sum(t.size for t in self.params.values())

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def clip_global_norm(self, max_norm: float) -> float:
        total = np.sqrt(sum(float((t.grad ** 2).sum()) for t in self.params.values()))
        if total > max_norm:
            scale = max_norm / total
            for t in self.params.values():
                t.grad *= scale
        return total


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, store: ParamStore) -> None:
    """One bias-corrected Adam update from the accumulated grads; grads reset."""
    state.t += 1
    for name, p in store:
        if p.grad.shape != p.data.shape:
            raise ContractError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad ** 2
        m_hat = m / (1.0 - state.beta1 ** state.t)
        v_hat = v / (1.0 - state.beta2 ** state.t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    store.zero_grads()


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity in eval mode."""
    if not (0.0 <= rate < 1.0):
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    return autodiff.mul(x, Tensor(mask))


@dataclass
class GradCheckResult:
    max_rel_error: Dict[str, float]
    skipped: Dict[str, int]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.worst < tolerance


def grad_check(loss_fn: Callable[[], Tensor], store: ParamStore,
               eps: float = 1e-5, tolerance: float = 1e-4,
               params: Optional[List[str]] = None,
               fault_hook: Optional[Callable[[Dict[str, np.ndarray]], None]] = None
               ) -> GradCheckResult:
    """Compare analytic gradients with central finite differences.

    ``loss_fn`` must rebuild the full forward computation on every call
    (deterministic: dropout off). Components sitting exactly on a kink
    (e.g. a ReLU input at 0), detected by disagreeing one-sided
    differences, are excluded from the per-parameter maximum.
    ``fault_hook`` may mutate the analytic gradients before comparison;
    it exists for fault-injection tests only.
    """
    store.zero_grads()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ContractError("loss is non-finite before gradient check")
    autodiff.backward(loss)
    analytic = {name: p.grad.copy() for name, p in store}
    if fault_hook is not None:
        fault_hook(analytic)

    names = params if params is not None else [name for name, _ in store]
    max_err: Dict[str, float] = {}
    skipped: Dict[str, int] = {}
    for name in names:
        p = store[name]
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            err = _central_error(loss_fn, flat, i, orig, eps, a_flat[i], name)
            if err >= tolerance:
                # roundoff can swamp tiny gradients at the base step; a
                # larger step is still a valid central difference
                for step in (10.0 * eps, 31.6 * eps, 100.0 * eps):
                    err = min(err, _central_error(loss_fn, flat, i, orig, step,
                                                  a_flat[i], name))
                    if err < tolerance:
                        break
            if err >= tolerance and _on_kink(loss_fn, flat, i, orig, eps):
                skipped[name] = skipped.get(name, 0) + 1
                continue
            worst = max(worst, err)
        max_err[name] = worst
    return GradCheckResult(max_err, skipped)


def _central_error(loss_fn, flat, i, orig, eps, analytic, name) -> float:
    flat[i] = orig + eps
    f_plus = float(loss_fn().data)
    flat[i] = orig - eps
    f_minus = float(loss_fn().data)
    flat[i] = orig
    if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
        raise ContractError(f"non-finite loss while perturbing {name}[{i}]")
    numeric = (f_plus - f_minus) / (2.0 * eps)
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _on_kink(loss_fn, flat, i, orig, eps) -> bool:
    """One-sided differences disagreeing means the point is non-smooth."""
    f0 = float(loss_fn().data)
    flat[i] = orig + eps
    f_plus = float(loss_fn().data)
    flat[i] = orig - eps
    f_minus = float(loss_fn().data)
    flat[i] = orig
    right = (f_plus - f0) / eps
    left = (f0 - f_minus) / eps
    return abs(right - left) > 1e-3 * max(abs(right), abs(left), 1.0)


CHECKPOINT_VERSION = 1


def save_checkpoint(path, store: ParamStore, extra: Optional[dict] = None) -> None:
    """Write parameters as JSON; float64 values round-trip bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "params": {
            name: {"shape": list(t.data.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in store
        },
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path, store: ParamStore) -> dict:
    """Load parameter values into an existing store; returns the extra dict."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {payload.get('version')}")
    saved = payload["params"]
    if set(saved) != set(dict(iter(store))):
        missing = set(dict(iter(store))) - set(saved)
        surplus = set(saved) - set(dict(iter(store)))
        raise ContractError(f"checkpoint/model mismatch (missing={sorted(missing)}, surplus={sorted(surplus)})")
    for name, rec in saved.items():
        t = store[name]
        vals = np.asarray(rec["values"], dtype=t.data.dtype).reshape(rec["shape"])
        if vals.shape != t.data.shape:
            raise ContractError(f"shape mismatch for {name}: {vals.shape} vs {t.data.shape}")
        t.data = vals
        t.grad = np.zeros_like(t.data)
    return payload.get("extra", {})
