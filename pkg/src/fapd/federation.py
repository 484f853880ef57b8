"""The federated round loop: client sampling, local training with progressive
distillation, sample-weighted aggregation, server evaluation, and curriculum
feedback. Baselines (plain averaging and the two ablations) share the same
loop with individual terms gated off.

Client updates within a round share only immutable inputs and may run on a
thread pool; determinism comes from per-(round, client) named rng streams,
never from execution order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import curriculum as cur
from . import distill
from . import model as mdl
import os

from .dataset import FederatedDataset, dirichlet_partition, generate_synthetic, \
    load_dataset, sample_calibration
from .errors import InvalidInputError, NumericError
from .rng import Stream

STRATEGY_KINDS = ("fedavg", "fapd", "fapd_nadpt", "fapd_ncont")


@dataclass(frozen=True)
class Strategy:
    kind: str
    fixed_k: int | None = None  # fapd_nadpt only; defaults to D at run time

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise InvalidInputError(f"unknown strategy '{self.kind}'")

    @property
    def uses_distillation(self) -> bool:
        return self.kind != "fedavg"

    @property
    def uses_contrastive(self) -> bool:
        return self.kind in ("fapd", "fapd_nadpt")

    @property
    def uses_controller(self) -> bool:
        return self.kind in ("fapd", "fapd_ncont")


@dataclass
class FederationConfig:
    num_clients: int = 10
    clients_per_round: int = 5
    rounds: int = 100
    local_epochs: int = 10
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    weights: distill.LossWeights = field(default_factory=distill.LossWeights)
    kd_direction: str = "teacher_student"
    k0: int = 8
    delta_k: int = 5
    epsilon: float = 0.005
    window: int = 3
    alpha: float = 0.5
    seed: int = 0
    # dimensions
    input_dim: int = 16
    hidden_dim: int = 64
    teacher_dim: int = 32
    num_classes: int = 10
    # data source: synthetic parameters, or a saved dataset directory
    n_train: int = 2000
    n_test: int = 1000
    noise_sigma: float = 2.0
    dataset_path: str | None = None
    calibration_size: int | None = None  # default min(1024, n_train)
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.clients_per_round <= self.num_clients:
            raise InvalidInputError(
                f"clients_per_round={self.clients_per_round} outside [1, {self.num_clients}]"
            )
        if self.rounds < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("rounds, local_epochs, batch_size must be >= 1")
        if self.kd_direction not in ("teacher_student", "student_teacher"):
            raise InvalidInputError(f"unknown kd_direction '{self.kd_direction}'")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    k: int
    accuracy: float
    loss_total: float
    loss_ce: float
    loss_kd: float
    loss_cl: float
    consensus_triggered: bool
    clients: tuple


@dataclass
class ExperimentState:
    config: FederationConfig
    strategy: Strategy
    train: FederatedDataset
    test: FederatedDataset
    client_data: list  # FederatedDataset per client
    rotation: cur.RotationMatrix | None
    anchors: distill.ClassAnchors | None
    model: mdl.StudentModel
    curriculum: cur.CurriculumState | None
    round_index: int = 0


def client_update(global_model, client_data: FederatedDataset, P_t, anchors_k,
                  rotation, strategy: Strategy, config: FederationConfig,
                  stream: Stream):
    """Local training for one client; returns (model, n_c, loss_means).

    The incoming global parameters pass through the flat checkpoint blob so a
    networked transport could replace this call without semantic change.
    """
    n_c = len(client_data)
    if n_c == 0:
        raise InvalidInputError("client has no data")
    blob = global_model.flatten().astype("<f8").tobytes()
    local = global_model.copy()
    local.load_flat(np.frombuffer(blob, dtype="<f8").astype(np.float64))
    opt = mdl.OptimizerState.for_model(local, config.lr, config.momentum)
    w = config.weights

    sums = {"total": 0.0, "ce": 0.0, "kd": 0.0, "cl": 0.0}
    seen = 0
    for _ in range(config.local_epochs):
        order = stream.permutation(n_c)
        for start in range(0, n_c, config.batch_size):
            idx = order[start : start + config.batch_size]
            X = client_data.x[idx]
            yb = client_data.y[idx]
            B = idx.size
            H, ZS, LOGITS = mdl.forward_batch(local, X)

            ce_losses, dLOG = distill.ce_loss_batch(LOGITS, yb)
            dZS = np.zeros_like(ZS)
            kd_losses = np.zeros(B)
            cl_losses = np.zeros(B)
            if strategy.uses_distillation:
                ZSk = cur.project_features_batch(rotation, P_t, ZS)
                ZTk = cur.project_features_batch(rotation, P_t, client_data.zt[idx])
                kd_losses, dZSk_kd = distill.kd_loss_batch(
                    ZSk, ZTk, direction=config.kd_direction
                )
                dZSk = w.lambda_kd * dZSk_kd
                if strategy.uses_contrastive:
                    cl_losses, dZSk_cl = distill.infonce_loss_batch(
                        ZSk, anchors_k, yb, w.tau
                    )
                    dZSk = dZSk + w.lambda_cl * dZSk_cl
                dZS = dZSk @ P_t

            total = ce_losses + w.lambda_kd * kd_losses + w.lambda_cl * cl_losses
            if not np.all(np.isfinite(total)):
                raise NumericError("non-finite loss during local training")
            grads = mdl.backward_batch(local, X, H, ZS, dLOG / B, dZS / B)
            mdl.sgd_step(local, opt, grads)

            sums["total"] += float(total.sum())
            sums["ce"] += float(ce_losses.sum())
            sums["kd"] += float(kd_losses.sum())
            sums["cl"] += float(cl_losses.sum())
            seen += B
    means = {key: value / seen for key, value in sums.items()}
    return local, n_c, means


def aggregate(results):
    """Sample-count-weighted mean of flat parameter vectors."""
    if not results:
        raise InvalidInputError("nothing to aggregate")
    total = sum(n for _, n in results)
    if total <= 0:
        raise InvalidInputError("aggregation weights sum to zero")
    size = results[0][0].size
    out = np.zeros(size)
    for params, n in results:
        if params.size != size:
            raise InvalidInputError("parameter shape mismatch in aggregation")
        out += (n / total) * params
    return out


def evaluate(model, test: FederatedDataset) -> float:
    """Top-1 accuracy on the server test split; argmax ties go to the lowest class."""
    if len(test) == 0:
        raise InvalidInputError("empty test set")
    _, _, LOGITS = mdl.forward_batch(model, test.x)
    preds = np.argmax(LOGITS, axis=1)
    return float(np.mean(preds == test.y))


def _round_projection(state: ExperimentState):
    """(k_t, P_t, projected anchors) for this round, or (None,)*3 for fedavg."""
    strategy, config = state.strategy, state.config
    if not strategy.uses_distillation:
        return None, None, None
    if strategy.kind == "fapd_nadpt":
        k_t = strategy.fixed_k or config.teacher_dim
    else:
        k_t = state.curriculum.k
    P_t = cur.projection_for(state.rotation, k_t)
    anchors_k = None
    if strategy.uses_contrastive:
        anchors_k = (state.anchors.anchors - state.rotation.mean) @ P_t.T
    return k_t, P_t, anchors_k


def run_round(state: ExperimentState):
    """One communication round; returns (state, RoundMetrics)."""
    config, strategy = state.config, state.strategy
    t = state.round_index
    selection = Stream(config.seed, "select", t).sample_without_replacement(
        config.num_clients, config.clients_per_round
    )
    selected = tuple(sorted(int(c) for c in selection))

    k_t, P_t, anchors_k = _round_projection(state)
    jobs = [
        (cid, Stream(config.seed, "client", t, cid)) for cid in selected
    ]

    def train_one(job):
        cid, stream = job
        return client_update(state.model, state.client_data[cid], P_t, anchors_k,
                             state.rotation, strategy, config, stream)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(train_one, jobs))
    else:
        outcomes = [train_one(job) for job in jobs]

    flat = aggregate([(m.flatten(), n) for m, n, _ in outcomes])
    state.model.load_flat(flat)
    acc = evaluate(state.model, state.test)

    consensus = False
    if strategy.uses_controller:
        recorded = cur.record_accuracy(state.curriculum, acc)
        advanced = cur.advance(recorded)
        consensus = advanced.k > recorded.k
        state.curriculum = advanced

    weights = [n for _, n, _ in outcomes]
    total_n = sum(weights)
    mean_losses = {
        key: sum(n * means[key] for _, n, means in outcomes) / total_n
        for key in ("total", "ce", "kd", "cl")
    }
    metrics = RoundMetrics(
        round=t,
        # fedavg has no projection; report the full feature dimension
        k=k_t if k_t is not None else config.teacher_dim,
        accuracy=acc,
        loss_total=mean_losses["total"],
        loss_ce=mean_losses["ce"],
        loss_kd=mean_losses["kd"],
        loss_cl=mean_losses["cl"],
        consensus_triggered=consensus,
        clients=selected,
    )
    state.round_index += 1
    return state, metrics


def prepare_state(config: FederationConfig, strategy: Strategy) -> ExperimentState:
    """Load or synthesize data, partition, calibrate, and initialize the run."""
    if config.dataset_path is not None:
        train = load_dataset(os.path.join(config.dataset_path, "train"))
        test = load_dataset(os.path.join(config.dataset_path, "test"))
        if (test.num_classes, test.input_dim, test.teacher_dim) != (
            train.num_classes, train.input_dim, train.teacher_dim
        ):
            raise InvalidInputError("train/test splits disagree on dimensions")
        config = replace(
            config,
            num_classes=train.num_classes,
            input_dim=train.input_dim,
            teacher_dim=train.teacher_dim,
        )
    else:
        train, test = generate_synthetic(
            config.num_classes, config.input_dim, config.teacher_dim,
            config.n_train, config.n_test, config.noise_sigma, config.seed,
        )
    if strategy.fixed_k is not None and not 1 <= strategy.fixed_k <= config.teacher_dim:
        raise InvalidInputError(f"fixed_k={strategy.fixed_k} outside [1, {config.teacher_dim}]")

    partition = dirichlet_partition(train.y, config.num_clients, config.alpha, config.seed)
    client_data = [train.subset(idx) for idx in partition.assignments]

    rotation = None
    anchors = None
    state_curriculum = None
    if strategy.uses_distillation:
        M = config.calibration_size or min(1024, len(train))
        calib = sample_calibration(train, M, config.seed)
        rotation = cur.build_rotation(calib)
        # indices behind the same seeded draw, for anchor labels
        calib_order = Stream(config.seed, "calibration").permutation(len(train))[:M]
        if strategy.uses_contrastive:
            calib_split = train.subset(calib_order)
            if np.unique(calib_split.y).size == train.num_classes:
                anchors = distill.build_class_anchors(calib_split)
            else:  # tiny calibration splits can miss a class
                anchors = distill.build_class_anchors(train)
        if strategy.uses_controller:
            state_curriculum = cur.initial_state(
                config.k0, config.delta_k, config.epsilon, config.window,
                config.teacher_dim,
            )

    student = mdl.init_model(
        config.input_dim, config.hidden_dim, config.teacher_dim,
        config.num_classes, config.seed,
    )
    return ExperimentState(
        config=config, strategy=strategy, train=train, test=test,
        client_data=client_data, rotation=rotation, anchors=anchors,
        model=student, curriculum=state_curriculum,
    )


def run_experiment(config: FederationConfig, strategy: Strategy):
    """Full run: returns (list of RoundMetrics, final model)."""
    state = prepare_state(config, strategy)
    trace = []
    for _ in range(config.rounds):
        state, metrics = run_round(state)
        trace.append(metrics)
    return trace, state.model
