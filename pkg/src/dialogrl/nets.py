"""Dense multilayer perceptron with named output heads, written on numpy.

Supports tanh/linear/softmax/sigmoid layers, per-head mse / cross-entropy /
binary cross-entropy losses with optional element masks, RMSProp updates,
and a versioned JSON checkpoint format. Everything is float64 so gradient
checks against finite differences are meaningful.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, ShapeError, SpecError

ACTIVATIONS = ("tanh", "linear", "softmax", "sigmoid")
LOSSES = ("mse", "cross_entropy", "binary_cross_entropy")

CHECKPOINT_VERSION = 1


@dataclass
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "tanh"

    def validate(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise SpecError(f"layer dims must be positive, got {self.input_dim}x{self.output_dim}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation '{self.activation}'")
        return self

    def to_json(self):
        return {"input_dim": self.input_dim, "output_dim": self.output_dim, "activation": self.activation}

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["input_dim"]), int(obj["output_dim"]), obj["activation"]).validate()


@dataclass
class HeadSpec:
    name: str
    layers: list[LayerSpec]
    loss: str = "mse"

    def validate(self):
        if not self.layers:
            raise SpecError(f"head '{self.name}' has no layers")
        for layer in self.layers:
            layer.validate()
        if self.loss not in LOSSES:
            raise SpecError(f"unknown loss '{self.loss}' for head '{self.name}'")
        final = self.layers[-1].activation
        if self.loss == "cross_entropy" and final != "softmax":
            raise SpecError(f"head '{self.name}': cross_entropy requires a softmax output")
        if self.loss == "binary_cross_entropy" and final != "sigmoid":
            raise SpecError(f"head '{self.name}': binary_cross_entropy requires a sigmoid output")
        if self.loss == "mse" and final == "softmax":
            raise SpecError(f"head '{self.name}': mse on a softmax output is not supported")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.output_dim != b.input_dim:
                raise SpecError(f"head '{self.name}': layer dims do not chain")
        return self

    def to_json(self):
        return {"name": self.name, "layers": [l.to_json() for l in self.layers], "loss": self.loss}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["name"], [LayerSpec.from_json(l) for l in obj["layers"]], obj["loss"]).validate()


@dataclass
class MlpSpec:
    shared: list[LayerSpec]
    heads: list[HeadSpec]

    def validate(self):
        if not self.heads:
            raise SpecError("model needs at least one head")
        for layer in self.shared:
            layer.validate()
        for a, b in zip(self.shared, self.shared[1:]):
            if a.output_dim != b.input_dim:
                raise SpecError("shared layer dims do not chain")
        trunk_out = self.shared[-1].output_dim if self.shared else None
        names = set()
        for head in self.heads:
            head.validate()
            if head.name in names:
                raise SpecError(f"duplicate head name '{head.name}'")
            names.add(head.name)
            if trunk_out is not None and head.layers[0].input_dim != trunk_out:
                raise SpecError(f"head '{head.name}' does not chain onto the trunk")
        return self

    @property
    def input_dim(self) -> int:
        return self.shared[0].input_dim if self.shared else self.heads[0].layers[0].input_dim

    def to_json(self):
        return {"shared": [l.to_json() for l in self.shared], "heads": [h.to_json() for h in self.heads]}

    @classmethod
    def from_json(cls, obj):
        return cls(
            [LayerSpec.from_json(l) for l in obj.get("shared", [])],
            [HeadSpec.from_json(h) for h in obj["heads"]],
        ).validate()

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.blake2s(blob).hexdigest()[:16]


def single_head_spec(input_dim, hidden_dims, output_dim, output_activation="linear",
                     loss="mse", hidden_activation="tanh", name="out") -> MlpSpec:
    """Convenience builder for a plain one-head MLP."""
    layers = []
    prev = input_dim
    for h in hidden_dims:
        layers.append(LayerSpec(prev, h, hidden_activation))
        prev = h
    layers.append(LayerSpec(prev, output_dim, output_activation))
    return MlpSpec(shared=[], heads=[HeadSpec(name, layers, loss)]).validate()


@dataclass
class TrainBatch:
    """One minibatch: inputs plus per-head targets and optional masks."""

    inputs: np.ndarray
    targets: dict[str, np.ndarray]
    masks: dict[str, np.ndarray] = field(default_factory=dict)


def _apply_activation(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise SpecError(f"unknown activation '{kind}'")


def _activation_grad_from_output(a, kind):
    # derivative of activation expressed through its output value
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "linear":
        return np.ones_like(a)
    if kind == "sigmoid":
        return a * (1.0 - a)
    raise SpecError(f"no elementwise grad for activation '{kind}'")


class MlpModel:
    """Parameters plus RMSProp state for one MlpSpec."""

    def __init__(self, spec: MlpSpec, seed: int = 0):
        spec.validate()
        self.spec = spec
        self.step_count = 0
        rng = np.random.default_rng(seed)
        self.shared_params = [self._init_layer(l, rng) for l in spec.shared]
        self.head_params = {h.name: [self._init_layer(l, rng) for l in h.layers] for h in spec.heads}
        self.shared_acc = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.shared_params]
        self.head_acc = {
            name: [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]
            for name, layers in self.head_params.items()
        }

    @staticmethod
    def _init_layer(layer: LayerSpec, rng):
        bound = np.sqrt(6.0 / (layer.input_dim + layer.output_dim))
        w = rng.uniform(-bound, bound, size=(layer.input_dim, layer.output_dim))
        b = np.zeros(layer.output_dim)
        return [w, b]

    # ---- forward ----------------------------------------------------------

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"expected input width {self.spec.input_dim}, got {x.shape}")
        return x

    def forward(self, x) -> dict[str, np.ndarray]:
        """Pure forward pass; returns one array per head."""
        x = self._check_input(x)
        trunk, _ = self._run_stack(x, self.spec.shared, self.shared_params)
        out = {}
        for head in self.spec.heads:
            y, _ = self._run_stack(trunk, head.layers, self.head_params[head.name])
            out[head.name] = y
        return out

    @staticmethod
    def _run_stack(x, layers, params):
        acts = [x]
        for layer, (w, b) in zip(layers, params):
            z = acts[-1] @ w + b
            acts.append(_apply_activation(z, layer.activation))
        return acts[-1], acts

    # ---- loss and gradients ------------------------------------------------

    def loss(self, batch: TrainBatch) -> float:
        total, _ = self._loss_and_grads(batch, want_grads=False)
        return total

    def train_minibatch(self, batch: TrainBatch, learning_rate: float = 0.001,
                        rho: float = 0.9, eps: float = 1e-8) -> float:
        """One RMSProp step on the joint (equally weighted) head losses."""
        loss, grads = self._loss_and_grads(batch, want_grads=True)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at training step {self.step_count}")
        shared_grads, head_grads = grads
        if learning_rate != 0.0:
            for (pair, acc, grad) in zip(self.shared_params, self.shared_acc, shared_grads):
                self._rmsprop_step(pair, acc, grad, learning_rate, rho, eps)
            for name in self.head_params:
                for (pair, acc, grad) in zip(self.head_params[name], self.head_acc[name], head_grads[name]):
                    self._rmsprop_step(pair, acc, grad, learning_rate, rho, eps)
        self.step_count += 1
        return float(loss)

    @staticmethod
    def _rmsprop_step(pair, acc, grad, lr, rho, eps):
        for i in range(2):
            acc_i = acc[i]
            acc_i *= rho
            acc_i += (1.0 - rho) * grad[i] ** 2
            pair[i] -= lr * grad[i] / np.sqrt(acc_i + eps)

    def _loss_and_grads(self, batch: TrainBatch, want_grads: bool):
        x = self._check_input(batch.inputs)
        n = x.shape[0]
        _, shared_acts = self._run_stack(x, self.spec.shared, self.shared_params)
        trunk = shared_acts[-1]

        total_loss = 0.0
        head_grads = {}
        d_trunk = np.zeros_like(trunk)
        for head in self.spec.heads:
            if head.name not in batch.targets:
                head_grads[head.name] = [
                    (np.zeros_like(w), np.zeros_like(b)) for w, b in self.head_params[head.name]
                ]
                continue
            target = np.asarray(batch.targets[head.name], dtype=np.float64)
            if target.ndim == 1:
                target = target[None, :] if n == 1 and target.shape[0] != n else target[:, None]
            y, acts = self._run_stack(trunk, head.layers, self.head_params[head.name])
            if target.shape != y.shape:
                raise ShapeError(
                    f"head '{head.name}': target shape {target.shape} != output {y.shape}"
                )
            mask = batch.masks.get(head.name)
            if mask is not None:
                mask = np.asarray(mask, dtype=np.float64).reshape(target.shape)
            loss, dz = self._head_loss(head, y, acts, target, mask, n)
            total_loss += loss
            if not want_grads:
                continue
            grads, dx = self._backprop_stack(head.layers, self.head_params[head.name], acts, dz)
            head_grads[head.name] = grads
            d_trunk += dx
        if not want_grads:
            return total_loss, None
        shared_grads, _ = self._backprop_stack(self.spec.shared, self.shared_params, shared_acts, d_trunk,
                                               grad_is_dz=False)
        return total_loss, (shared_grads, head_grads)

    @staticmethod
    def _head_loss(head: HeadSpec, y, acts, target, mask, n):
        """Per-head loss and the gradient at the final pre-activation."""
        kind = head.loss
        if kind == "mse":
            diff = y - target
            if mask is not None:
                diff = diff * mask
            loss = float((diff * diff).sum() / n)
            da = 2.0 * diff / n
            dz = da * _activation_grad_from_output(y, head.layers[-1].activation)
            return loss, dz
        if kind == "cross_entropy":
            p = np.clip(y, 1e-12, None)
            contrib = -(target * np.log(p))
            if mask is not None:
                contrib = contrib * mask
            loss = float(contrib.sum() / n)
            dz = (y - target) / n  # fused softmax + CE gradient
            if mask is not None:
                dz = dz * mask.max(axis=1, keepdims=True)
            return loss, dz
        if kind == "binary_cross_entropy":
            p = np.clip(y, 1e-12, 1.0 - 1e-12)
            contrib = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
            if mask is not None:
                contrib = contrib * mask
            loss = float(contrib.sum() / n)
            dz = (y - target) / n  # fused sigmoid + BCE gradient
            if mask is not None:
                dz = dz * mask
            return loss, dz
        raise SpecError(f"unknown loss '{kind}'")

    @staticmethod
    def _backprop_stack(layers, params, acts, upstream, grad_is_dz=True):
        """Walk a layer stack backwards; returns per-layer grads and d_input."""
        grads = [None] * len(layers)
        cursor = upstream
        for i in reversed(range(len(layers))):
            w, _ = params[i]
            a_out = acts[i + 1]
            if i == len(layers) - 1 and grad_is_dz:
                dz = cursor
            else:
                dz = cursor * _activation_grad_from_output(a_out, layers[i].activation)
            a_in = acts[i]
            grads[i] = (a_in.T @ dz, dz.sum(axis=0))
            cursor = dz @ w.T
        return grads, cursor

    # ---- parameter plumbing --------------------------------------------------

    def parameter_arrays(self):
        arrays = []
        for w, b in self.shared_params:
            arrays.extend([w, b])
        for head in self.spec.heads:
            for w, b in self.head_params[head.name]:
                arrays.extend([w, b])
        return arrays

    def parameter_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.parameter_arrays()])

    def n_parameters(self) -> int:
        return int(sum(a.size for a in self.parameter_arrays()))

    def set_parameter_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.n_parameters():
            raise ShapeError(f"expected {self.n_parameters()} parameters, got {vec.size}")
        offset = 0
        for arr in self.parameter_arrays():
            chunk = vec[offset: offset + arr.size]
            arr[...] = chunk.reshape(arr.shape)
            offset += arr.size

    def copy_parameters_from(self, other: "MlpModel") -> None:
        if self.spec.digest() != other.spec.digest():
            raise SpecError("cannot copy parameters between different specs")
        self.set_parameter_vector(other.parameter_vector())

    def clone(self) -> "MlpModel":
        twin = MlpModel(self.spec, seed=0)
        twin.copy_parameters_from(self)
        twin.step_count = self.step_count
        return twin

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.parameter_arrays())

    # ---- checkpoint format -----------------------------------------------------

    def to_json(self) -> dict:
        def dump(pairs):
            return [[w.tolist(), b.tolist()] for w, b in pairs]

        return {
            "format_version": CHECKPOINT_VERSION,
            "spec": self.spec.to_json(),
            "spec_digest": self.spec.digest(),
            "step_count": self.step_count,
            "shared_params": dump(self.shared_params),
            "head_params": {name: dump(p) for name, p in self.head_params.items()},
            "shared_acc": dump(self.shared_acc),
            "head_acc": {name: dump(p) for name, p in self.head_acc.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MlpModel":
        if not isinstance(obj, dict) or "format_version" not in obj:
            raise FormatError("not a model checkpoint")
        if obj["format_version"] != CHECKPOINT_VERSION:
            raise FormatError(
                f"checkpoint version {obj['format_version']} unsupported (expected {CHECKPOINT_VERSION})"
            )
        try:
            spec = MlpSpec.from_json(obj["spec"])
            stored_digest = obj["spec_digest"]
        except KeyError as exc:
            raise FormatError(f"checkpoint missing field {exc}") from exc
        if spec.digest() != stored_digest:
            raise FormatError(
                f"spec hash mismatch: expected {spec.digest()}, checkpoint has {stored_digest}"
            )
        model = cls(spec, seed=0)

        def load(pairs, into):
            if len(pairs) != len(into):
                raise FormatError("checkpoint layer count mismatch")
            for (w, b), slot in zip(pairs, into):
                w = np.asarray(w, dtype=np.float64)
                b = np.asarray(b, dtype=np.float64)
                if w.shape != slot[0].shape or b.shape != slot[1].shape:
                    raise FormatError("checkpoint parameter shape mismatch")
                slot[0][...] = w
                slot[1][...] = b

        try:
            load(obj["shared_params"], model.shared_params)
            for name in model.head_params:
                load(obj["head_params"][name], model.head_params[name])
            load(obj["shared_acc"], model.shared_acc)
            for name in model.head_acc:
                load(obj["head_acc"][name], model.head_acc[name])
            model.step_count = int(obj["step_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed checkpoint: {exc}") from exc
        return model


def mlp_new(spec: MlpSpec, seed: int = 0) -> MlpModel:
    return MlpModel(spec, seed=seed)


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()), encoding="utf-8")


def load_model(path) -> MlpModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint {path} is not valid JSON: {exc.msg}") from exc
    return MlpModel.from_json(obj)


def numerical_gradient(model: MlpModel, batch: TrainBatch, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the batch loss wrt every parameter."""
    theta = model.parameter_vector()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        bump = np.zeros_like(theta)
        bump[i] = h
        model.set_parameter_vector(theta + bump)
        up = model.loss(batch)
        model.set_parameter_vector(theta - bump)
        down = model.loss(batch)
        grad[i] = (up - down) / (2.0 * h)
    model.set_parameter_vector(theta)
    return grad


def analytic_gradient(model: MlpModel, batch: TrainBatch) -> np.ndarray:
    """Backprop gradient flattened in parameter order (for tests)."""
    _, (shared_grads, head_grads) = model._loss_and_grads(batch, want_grads=True)
    chunks = []
    for gw, gb in shared_grads:
        chunks.extend([gw.ravel(), gb.ravel()])
    for head in model.spec.heads:
        for gw, gb in head_grads[head.name]:
            chunks.extend([gw.ravel(), gb.ravel()])
    return np.concatenate(chunks)
