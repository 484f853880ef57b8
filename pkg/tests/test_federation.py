import dataclasses

import numpy as np
import pytest

from fapd import federation as fed
from fapd import model as mdl
from fapd.dataset import FederatedDataset
from fapd.distill import LossWeights
from fapd.errors import InvalidInputError
from fapd.rng import Stream


def small_config(**kw):
    base = dict(
        num_clients=6, clients_per_round=3, rounds=8, local_epochs=1,
        batch_size=32, lr=0.05, momentum=0.9, weights=LossWeights(),
        k0=2, delta_k=2, epsilon=0.01, window=3, alpha=0.5, seed=0,
        input_dim=8, hidden_dim=16, teacher_dim=8, num_classes=4,
        n_train=300, n_test=120, noise_sigma=2.0,
    )
    base.update(kw)
    return fed.FederationConfig(**base)


class TestAggregate:
    def test_single_client_identity(self):
        params = np.array([1.0, -2.0, 3.0])
        out = fed.aggregate([(params, 7)])
        assert np.array_equal(out, params)

    def test_symmetric_cancellation(self):
        w = np.array([0.5, -1.5])
        out = fed.aggregate([(w, 10), (-w, 10)])
        assert np.abs(out).max() < 1e-15

    def test_hand_weighted_mean(self):
        out = fed.aggregate([(np.array([0.0]), 1), (np.array([4.0]), 3)])
        assert abs(out[0] - 3.0) < 1e-12

    def test_weights_renormalized_within_cohort(self):
        rng = np.random.default_rng(0)
        parts = [(rng.normal(size=5), int(n)) for n in (3, 9, 14)]
        out = fed.aggregate(parts)
        total = sum(n for _, n in parts)
        manual = sum((n / total) * p for p, n in parts)
        assert np.abs(out - manual).max() < 1e-12

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            fed.aggregate([])
        with pytest.raises(InvalidInputError):
            fed.aggregate([(np.zeros(2), 1), (np.zeros(3), 1)])


class TestEvaluate:
    def make_test_set(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(40, 3))
        y = rng.integers(0, 3, size=40)
        return FederatedDataset(x=x, y=y, zt=np.zeros((40, 2)), num_classes=3)

    def test_all_zero_model_ties_to_class_zero(self):
        test = self.make_test_set()
        m = mdl.init_model(3, 4, 2, 3, seed=0)
        for p in m.params():
            p[...] = 0.0
        acc = fed.evaluate(m, test)
        assert acc == np.mean(test.y == 0)

    def test_matches_brute_recount(self):
        test = self.make_test_set()
        m = mdl.init_model(3, 4, 2, 3, seed=1)
        acc = fed.evaluate(m, test)
        hits = 0
        for i in range(len(test)):
            _, logits, _ = mdl.forward(m, test.x[i])
            if int(np.argmax(logits)) == test.y[i]:
                hits += 1
        assert acc == hits / len(test)

    def test_perfect_classifier(self):
        test = self.make_test_set()
        m = mdl.init_model(3, 4, 2, 3, seed=2)
        # bias-only head keyed to the label via a lookup is not expressible;
        # instead check the contract on a dataset the model classifies exactly
        _, _, LOGITS = mdl.forward_batch(m, test.x)
        forced = FederatedDataset(x=test.x, y=np.argmax(LOGITS, axis=1),
                                  zt=test.zt, num_classes=3)
        assert fed.evaluate(m, forced) == 1.0


class TestClientUpdate:
    def setup_state(self, kind="fapd", **kw):
        config = small_config(**kw)
        strategy = fed.Strategy(kind)
        return fed.prepare_state(config, strategy)

    def test_zero_lr_keeps_global_model(self):
        state = self.setup_state(lr=0.0)
        k_t, P_t, anchors_k = fed._round_projection(state)
        local, n_c, _ = fed.client_update(
            state.model, state.client_data[0], P_t, anchors_k,
            state.rotation, state.strategy, state.config, Stream(0, "t"),
        )
        assert np.array_equal(local.flatten(), state.model.flatten())
        assert n_c == len(state.client_data[0])

    def test_fedavg_gates_out_distillation_terms(self):
        state = self.setup_state(kind="fedavg")
        _, n_c, means = fed.client_update(
            state.model, state.client_data[1], None, None, None,
            state.strategy, state.config, Stream(0, "t"),
        )
        assert means["kd"] == 0.0 and means["cl"] == 0.0
        assert means["total"] == means["ce"]

    def test_bit_identical_reruns(self):
        state = self.setup_state()
        _, P_t, anchors_k = fed._round_projection(state)
        args = (state.model, state.client_data[2], P_t, anchors_k,
                state.rotation, state.strategy, state.config)
        a, _, ma = fed.client_update(*args, Stream(4, "s"))
        b, _, mb = fed.client_update(*args, Stream(4, "s"))
        assert np.array_equal(a.flatten(), b.flatten())
        assert ma == mb

    def test_empty_client_rejected(self):
        state = self.setup_state()
        empty = state.train.subset([])
        with pytest.raises(InvalidInputError):
            fed.client_update(state.model, empty, None, None, None,
                              fed.Strategy("fedavg"), state.config, Stream(0, "t"))


class TestRounds:
    def test_selection_size_and_distinctness(self):
        config = small_config(num_clients=10, clients_per_round=5)
        trace, _ = fed.run_experiment(config, fed.Strategy("fedavg"))
        for m in trace:
            assert len(m.clients) == 5
            assert len(set(m.clients)) == 5
            assert all(0 <= c < 10 for c in m.clients)

    def test_trace_length(self):
        trace, _ = fed.run_experiment(small_config(rounds=5), fed.Strategy("fapd"))
        assert len(trace) == 5

    def test_fixed_k_strategy_never_moves(self):
        trace, _ = fed.run_experiment(
            small_config(), fed.Strategy("fapd_nadpt", fixed_k=3)
        )
        assert all(m.k == 3 for m in trace)
        assert not any(m.consensus_triggered for m in trace)

    def test_fixed_k_defaults_to_full_dim(self):
        trace, _ = fed.run_experiment(small_config(rounds=2), fed.Strategy("fapd_nadpt"))
        assert all(m.k == 8 for m in trace)

    def test_k_trace_monotone_and_bounded(self):
        trace, _ = fed.run_experiment(small_config(rounds=12), fed.Strategy("fapd"))
        ks = [m.k for m in trace]
        assert all(a <= b for a, b in zip(ks, ks[1:]))
        assert ks[0] == 2 and ks[-1] <= 8

    def test_consensus_flag_matches_k_jumps(self):
        trace, _ = fed.run_experiment(small_config(rounds=12), fed.Strategy("fapd"))
        for prev, nxt in zip(trace, trace[1:]):
            assert (nxt.k > prev.k) == prev.consensus_triggered

    def test_fedavg_has_no_consensus_or_distill_losses(self):
        trace, _ = fed.run_experiment(small_config(), fed.Strategy("fedavg"))
        assert all(m.loss_kd == 0.0 and m.loss_cl == 0.0 for m in trace)
        assert not any(m.consensus_triggered for m in trace)

    def test_ncont_has_zero_contrastive_loss(self):
        trace, _ = fed.run_experiment(small_config(), fed.Strategy("fapd_ncont"))
        assert all(m.loss_cl == 0.0 for m in trace)
        assert any(m.loss_kd > 0.0 for m in trace)


class TestDeterminism:
    def test_identical_traces_same_seed(self):
        cfg = small_config()
        t1, m1 = fed.run_experiment(cfg, fed.Strategy("fapd"))
        t2, m2 = fed.run_experiment(dataclasses.replace(cfg), fed.Strategy("fapd"))
        assert t1 == t2
        assert np.array_equal(m1.flatten(), m2.flatten())

    def test_worker_count_does_not_change_results(self):
        t1, m1 = fed.run_experiment(small_config(workers=1), fed.Strategy("fapd"))
        t4, m4 = fed.run_experiment(small_config(workers=4), fed.Strategy("fapd"))
        assert t1 == t4
        assert np.array_equal(m1.flatten(), m4.flatten())

    def test_seed_changes_trace(self):
        t1, _ = fed.run_experiment(small_config(seed=0), fed.Strategy("fapd"))
        t2, _ = fed.run_experiment(small_config(seed=1), fed.Strategy("fapd"))
        assert t1 != t2
