import math

import numpy as np
from tqdm import tqdm

from functionality.errors import TrainingDivergedError
from functionality.logger import get_logger
from schemas.network import N_CLASSES, EpochMetrics, ModelConfig, ModelParameters, OptimizerKind, TrainSpec
from service.network_service import init_params, model_backward

logger = get_logger(__name__)


class Adam:
    def __init__(self, learning_rate: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-7):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], skip=frozenset()):
        self.t += 1
        correction = math.sqrt(1.0 - self.beta2 ** self.t) / (1.0 - self.beta1 ** self.t)
        for name in tensors:
            if name in skip:
                continue
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            tensors[name] -= self.learning_rate * correction * m / (np.sqrt(v) + self.epsilon)


class SGD:
    def __init__(self, learning_rate: float = 1e-2):
        self.learning_rate = learning_rate

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], skip=frozenset()):
        for name in tensors:
            if name not in skip:
                tensors[name] -= self.learning_rate * grads[name]


def make_optimizer(spec: TrainSpec):
    if spec.optimizer is OptimizerKind.SGD:
        return SGD(spec.learning_rate)
    return Adam(spec.learning_rate)


def iterations_per_epoch(n_samples: int, batch_size: int) -> tuple[int, int]:
    """(ceil, floor) mini-batch counts; the last partial batch is trained on."""
    return math.ceil(n_samples / batch_size), n_samples // batch_size


def inverse_frequency_weights(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    """w_c = n / (classes present * n_c); absent classes get weight 0."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes).astype(np.float64)
    present = np.count_nonzero(counts)
    return np.divide(counts.sum(), present * counts, out=np.zeros(n_classes), where=counts > 0)


def train(config: ModelConfig, x_train, y_train, spec: TrainSpec = TrainSpec(), progress: bool = True):
    """Mini-batch training from a seeded initialization.

    Returns float32 parameters and per-epoch metrics. Same seed, same data -> same weights.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    n = y_train.size
    params = init_params(config, spec.seed)
    optimizer = make_optimizer(spec)
    rng = np.random.default_rng(spec.seed)
    class_weights = inverse_frequency_weights(y_train) if spec.class_weighting else None
    frozen = {name for name in params.tensors if int(name.split(".")[0]) in set(spec.frozen_layers)}
    n_iter, n_iter_floor = iterations_per_epoch(n, spec.batch_size)
    logger.info(
        f"training {config.name}: {params.count()} parameters, {n} samples, "
        f"{n_iter} iterations/epoch ({n_iter_floor} full batches)"
    )

    history: list[EpochMetrics] = []
    for epoch in range(1, spec.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        bar = tqdm(range(n_iter), desc=f"{config.name} epoch {epoch}/{spec.epochs}", disable=not progress, leave=False)
        for iteration in bar:
            idx = order[iteration * spec.batch_size:(iteration + 1) * spec.batch_size]
            loss, grads, probs = model_backward(
                config, params, x_train[idx], y_train[idx],
                train_mode=True, dropout_seed=rng, class_weights=class_weights,
                frozen_layers=spec.frozen_layers,
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, iteration, loss)
            optimizer.step(params.tensors, grads, skip=frozen)
            loss_sum += loss * idx.size
            correct += int(np.sum(probs.argmax(axis=1) == y_train[idx]))
            bar.set_postfix(loss=f"{loss:.4f}")

        metrics = EpochMetrics(epoch=epoch, loss=loss_sum / max(n, 1), accuracy=correct / max(n, 1), iterations=n_iter)
        history.append(metrics)
        logger.info(f"{config.name} epoch {epoch}: loss {metrics.loss:.4f}, accuracy {metrics.accuracy:.4f}")

    final = ModelParameters(tensors={k: v.astype(np.float32) for k, v in params.tensors.items()})
    return final, history
