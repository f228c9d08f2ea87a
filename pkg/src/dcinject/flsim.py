"""Federated simulation: Dirichlet shards, FedAvg, FedBN personalization and
malicious clients that train on the poisoned mixture objective."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metrics import accuracy, asr_on
from .nn import PARAM_KEYS, PERSONAL_KEYS, SHARED_KEYS, ModelParams, init_params, loss_and_grad, sgd_step
from .partition import PartitionPlan
from .tensorimg import LabeledDataset, NumericalFault
from .trigger import TriggerConfig, trigger_batch

log = logging.getLogger(__name__)

PERSONALIZATION_MODES = ("none", "fedbn")
ATTACKER_PERSONAL_MODES = ("full", "clean", "frozen")
TRAIN_STREAM = 0


@dataclass(frozen=True)
class FederationConfig:
    n_clients: int = 20
    malicious_fraction: float = 0.1
    rounds: int = 50
    sample_fraction: float = 0.5
    local_steps: int = 15
    lr: float = 0.1
    batch_size: int = 32
    personalization: str = "fedbn"
    hidden_dim: int = 64
    # how malicious clients update their own personal group: "full", "clean", "frozen"
    attacker_personal: str = "full"
    trigger: TriggerConfig = field(default_factory=TriggerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 1:
            raise ValueError("n_clients must be >= 1")
        if not 0.0 <= self.malicious_fraction < 1.0:
            raise ValueError("malicious_fraction must lie in [0, 1)")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.local_steps < 0:
            raise ValueError("local_steps must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise ValueError("batch_size and hidden_dim must be positive")
        if self.attacker_personal not in ATTACKER_PERSONAL_MODES:
            raise ValueError(f"attacker_personal must be one of {ATTACKER_PERSONAL_MODES}")
        if self.personalization not in PERSONALIZATION_MODES:
            raise ValueError(f"personalization must be one of {PERSONALIZATION_MODES}")

    @property
    def n_malicious(self) -> int:
        return int(np.floor(self.malicious_fraction * self.n_clients + 1e-9))

    @property
    def clients_per_round(self) -> int:
        return max(1, int(np.floor(self.sample_fraction * self.n_clients + 1e-9)))

    @property
    def shared_keys(self) -> tuple[str, ...]:
        return SHARED_KEYS if self.personalization == "fedbn" else PARAM_KEYS


@dataclass(frozen=True)
class LocalSettings:
    """What a benign client needs to train; deliberately trigger-free."""

    local_steps: int
    lr: float
    batch_size: int


@dataclass
class ClientState:
    id: int
    malicious: bool
    local_indices: tuple[int, ...]
    personal_params: dict[str, np.ndarray] | None = None


@dataclass(frozen=True)
class LocalUpdate:
    client_id: int
    params: ModelParams
    n_samples: int
    imag_residuals: tuple[float, ...] = ()


@dataclass(frozen=True)
class RoundReport:
    round: int
    sampled: tuple[int, ...]
    clean_acc: float
    asr: float
    imag_residual: float
    secs: float

    def to_json(self, include_time: bool = True) -> dict:
        return {
            "round": self.round,
            "clean_acc": self.clean_acc,
            "asr": self.asr,
            "sampled": list(self.sampled),
            "imag_residual": self.imag_residual,
            "secs": self.secs if include_time else 0.0,
        }


@dataclass
class FederationResult:
    reports: list[RoundReport]
    global_params: ModelParams
    client_params: list[ModelParams]
    clients: list[ClientState]


def make_clients(cfg: FederationConfig, plan: PartitionPlan) -> list[ClientState]:
    if plan.n_clients != cfg.n_clients:
        raise ValueError(f"plan has {plan.n_clients} clients, config wants {cfg.n_clients}")
    m = cfg.n_malicious
    return [ClientState(i, i < m, tuple(idx)) for i, idx in enumerate(plan.assignments)]


def _sgd_loop(params, images, labels, settings: LocalSettings, rng, poison=None,
              personal_mode="full"):
    """``poison(batch_idx) -> (triggered_images, target, alpha, residuals)`` or None.

    ``personal_mode`` controls the personal group on poisoned steps: "full"
    follows the mixture gradient, "clean" the clean-loss gradient only,
    "frozen" gets no update.
    """
    n = len(labels)
    bs = min(settings.batch_size, n)
    residuals: list[float] = []
    for _ in range(settings.local_steps):
        pick = rng.choice(n, size=bs, replace=False)
        if poison is None:
            _, grads = loss_and_grad(params, images[pick], labels[pick])
        else:
            trig, target, alpha, resid = poison(pick)
            residuals.extend(resid)
            _, grads = loss_and_grad(params, images[pick], labels[pick], trig, target, alpha)
            if personal_mode == "clean":
                _, clean = loss_and_grad(params, images[pick], labels[pick])
                grads = grads.with_tensors(**clean.group(PERSONAL_KEYS))
            elif personal_mode == "frozen":
                grads = grads.with_tensors(**{k: np.zeros_like(getattr(grads, k)) for k in PERSONAL_KEYS})
        params = sgd_step(params, grads, settings.lr)
    return params, residuals


def train_benign(params: ModelParams, images, labels, settings: LocalSettings, rng):
    return _sgd_loop(params, images, labels, settings, rng)[0]


def train_malicious(
    params: ModelParams, images, labels, sample_ids, settings: LocalSettings,
    trigger: TriggerConfig, rng, personal_mode: str = "full",
):
    """Each step triggers the drawn minibatch and mixes in the target-label loss.

    ``sample_ids`` are global dataset indices; they key the per-image noise.
    """
    sample_ids = np.asarray(sample_ids)

    def poison(pick):
        trig, resid = trigger_batch(images[pick], trigger, sample_ids[pick], stream=TRAIN_STREAM)
        return trig, trigger.target_label, trigger.poison_ratio, resid.tolist()

    return _sgd_loop(params, images, labels, settings, rng, poison, personal_mode)


def client_rng(seed: int, client_id: int, round_idx: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0xC11E, client_id, round_idx])


def local_train(
    client: ClientState,
    global_params: ModelParams,
    dataset: LabeledDataset,
    cfg: FederationConfig,
    round_idx: int = 0,
) -> LocalUpdate:
    """Run ``local_steps`` SGD steps on the client's shard.

    Under FedBN the client's own normalization parameters replace the
    incoming ones before training.
    """
    if not client.local_indices:
        raise ValueError(f"client {client.id} has an empty shard")
    params = global_params
    if cfg.personalization == "fedbn" and client.personal_params is not None:
        params = params.with_tensors(**client.personal_params)
    idx = np.asarray(client.local_indices)
    images, labels = dataset.images[idx], dataset.labels[idx]
    settings = LocalSettings(cfg.local_steps, cfg.lr, cfg.batch_size)
    rng = client_rng(cfg.seed, client.id, round_idx)
    if client.malicious:
        mode = cfg.attacker_personal if cfg.personalization == "fedbn" else "full"
        params, resid = train_malicious(params, images, labels, idx, settings, cfg.trigger, rng, mode)
    else:
        params, resid = train_benign(params, images, labels, settings, rng), []
    return LocalUpdate(client.id, params, len(idx), tuple(resid))


def aggregate(updates: list[dict[str, np.ndarray]], weights) -> dict[str, np.ndarray]:
    """Weighted elementwise mean of parameter dicts (weights normalized to 1)."""
    if not updates:
        raise ValueError("nothing to aggregate")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (len(updates),) or np.any(w <= 0):
        raise ValueError("need one positive weight per update")
    w = w / w.sum()
    keys = updates[0].keys()
    out = {}
    for k in keys:
        shapes = {np.shape(u[k]) for u in updates if k in u}
        if len(shapes) != 1 or any(k not in u for u in updates):
            raise ValueError(f"shape mismatch for {k}: {shapes}")
        acc = np.zeros(np.shape(updates[0][k]))
        for wi, u in zip(w, updates):
            acc = acc + wi * np.asarray(u[k], dtype=np.float64)
        out[k] = acc
    for u in updates[1:]:
        if u.keys() != keys:
            raise ValueError("updates carry different parameter sets")
    return out


def sample_clients(cfg: FederationConfig, round_idx: int) -> tuple[int, ...]:
    rng = np.random.default_rng([cfg.seed, 0x5A3F, round_idx])
    chosen = rng.choice(cfg.n_clients, size=cfg.clients_per_round, replace=False)
    return tuple(sorted(int(c) for c in chosen))


def client_model(global_params: ModelParams, client: ClientState, cfg: FederationConfig) -> ModelParams:
    if cfg.personalization == "fedbn" and client.personal_params is not None:
        return global_params.with_tensors(**client.personal_params)
    return global_params


def _evaluate(global_params, clients, cfg, test_set, triggered_test):
    if cfg.personalization == "none":
        models = [global_params]
    else:
        models = [client_model(global_params, c, cfg) for c in clients]
    accs = [accuracy(m, test_set) for m in models]
    asrs = [asr_on(m, triggered_test, cfg.trigger.target_label) for m in models]
    return float(np.mean(accs)), float(np.mean(asrs))


def run_federation(
    cfg: FederationConfig,
    dataset: LabeledDataset,
    plan: PartitionPlan,
    test_set: LabeledDataset,
    triggered_test: np.ndarray,
    on_round: Callable[[RoundReport], None] | None = None,
    max_workers: int = 1,
) -> FederationResult:
    """Sample -> local training -> aggregate shared params -> evaluate, per round.

    Updates are combined in client-id order after all sampled clients have
    finished, so results do not depend on completion order or ``max_workers``.
    """
    clients = make_clients(cfg, plan)
    c, h, w = dataset.image_shape
    global_params = init_params(c * h * w, cfg.hidden_dim, dataset.num_classes, cfg.seed)
    if cfg.personalization == "fedbn":
        for cl in clients:
            cl.personal_params = global_params.group(PERSONAL_KEYS)
    if not 0 <= cfg.trigger.target_label < dataset.num_classes:
        raise ValueError("target_label out of range for dataset")

    reports: list[RoundReport] = []
    pool = ThreadPoolExecutor(max_workers) if max_workers > 1 else None
    try:
        for r in range(cfg.rounds):
            t0 = time.perf_counter()
            sampled = sample_clients(cfg, r)

            def work(cid, r=r):
                return local_train(clients[cid], global_params, dataset, cfg, r)

            results = list(pool.map(work, sampled)) if pool else [work(cid) for cid in sampled]
            results.sort(key=lambda u: u.client_id)

            shared = aggregate(
                [u.params.group(cfg.shared_keys) for u in results], [u.n_samples for u in results]
            )
            if not all(np.isfinite(v).all() for v in shared.values()):
                raise NumericalFault(
                    f"non-finite aggregated parameters in round {r} (clients {list(sampled)})"
                )
            global_params = global_params.with_tensors(**shared)
            if cfg.personalization == "fedbn":
                for u in results:
                    clients[u.client_id].personal_params = u.params.group(PERSONAL_KEYS)

            acc, attack = _evaluate(global_params, clients, cfg, test_set, triggered_test)
            resid = [x for u in results for x in u.imag_residuals]
            report = RoundReport(
                round=r,
                sampled=sampled,
                clean_acc=acc,
                asr=attack,
                imag_residual=float(np.mean(resid)) if resid else 0.0,
                secs=time.perf_counter() - t0,
            )
            log.debug("round %d acc=%.4f asr=%.4f", r, acc, attack)
            reports.append(report)
            if on_round is not None:
                on_round(report)
    finally:
        if pool:
            pool.shutdown()

    finals = [client_model(global_params, cl, cfg) for cl in clients]
    return FederationResult(reports, global_params, finals, clients)
