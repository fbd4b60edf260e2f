import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from trofi import analysis, dataset as ds, envs, policy
from trofi.analysis import AffineTransform, AnalysisConfig
from trofi.dataset import Trajectory, Transition
from trofi.errors import PreconditionError
from trofi.nn import Rng


@pytest.fixture(scope="module")
def lineworld():
    return envs.get_env("lineworld")


@pytest.fixture(scope="module")
def medium(lineworld):
    return ds.generate_dataset(lineworld, "medium", 2000, 0)


@pytest.fixture(scope="module")
def expert(lineworld):
    return ds.generate_dataset(lineworld, "expert", 2000, 0)


def traj_with_rewards(rewards):
    trans = [Transition(np.array([float(t)]), np.zeros(1), np.array([float(t)]),
                        float(r), 0, t)
             for t, r in enumerate(rewards)]
    return Trajectory(0, trans, float(np.sum(rewards)))


def discounted_oracle(rewards, gamma):
    """Direct O(T^2) tail sums."""
    return [sum(gamma ** (k - t) * rewards[k] for k in range(t, len(rewards)))
            for t in range(len(rewards))]


class TestDiscountedReturns:
    def test_hand_case(self):
        out = analysis.discounted_return_series(traj_with_rewards([1, 1, 1]), 0.5)
        npt.assert_allclose(out, [1.75, 1.5, 1.0])

    def test_gamma_zero(self):
        out = analysis.discounted_return_series(traj_with_rewards([3, -2, 5]), 0.0)
        npt.assert_allclose(out, [3, -2, 5])

    def test_all_zero(self):
        out = analysis.discounted_return_series(traj_with_rewards([0, 0, 0]), 0.9)
        npt.assert_array_equal(out, 0.0)

    def test_matches_quadratic_oracle(self):
        gen = Rng(0).generator()
        rewards = gen.normal(size=40)
        fast = analysis.discounted_return_series(traj_with_rewards(rewards), 0.97)
        npt.assert_allclose(fast, discounted_oracle(rewards, 0.97), atol=1e-9)

    def test_unlabeled_rejected(self):
        traj = traj_with_rewards([1.0])
        traj.transitions[0].reward = None
        with pytest.raises(PreconditionError):
            analysis.discounted_return_series(traj, 0.9)


class TestPearson:
    def test_hand_case(self):
        npt.assert_allclose(analysis.pearson_correlation([1, 2, 3, 4],
                                                         [1, 3, 2, 4]), 0.8)

    def test_perfect_linear(self):
        xs = np.array([0.3, 1.7, -2.0, 5.5])
        npt.assert_allclose(analysis.pearson_correlation(xs, 2 * xs + 3), 1.0,
                            atol=1e-12)

    def test_negation(self):
        xs = np.array([1.0, 2.0, 5.0])
        npt.assert_allclose(analysis.pearson_correlation(xs, -xs), -1.0,
                            atol=1e-12)

    def test_constant_rejected(self):
        with pytest.raises(PreconditionError):
            analysis.pearson_correlation([1, 1, 1], [1, 2, 3])

    def test_matches_two_pass_oracle(self):
        gen = Rng(1).generator()
        xs, ys = gen.normal(size=30), gen.normal(size=30)
        mx, my = xs.mean(), ys.mean()
        oracle = (((xs - mx) * (ys - my)).sum()
                  / np.sqrt(((xs - mx) ** 2).sum() * ((ys - my) ** 2).sum()))
        npt.assert_allclose(analysis.pearson_correlation(xs, ys), oracle,
                            atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(scale=st.floats(0.01, 100.0), offset=st.floats(-50, 50))
    def test_positive_affine_invariance(self, scale, offset):
        gen = Rng(2).generator()
        xs, ys = gen.normal(size=12), gen.normal(size=12)
        base = analysis.pearson_correlation(xs, ys)
        moved = analysis.pearson_correlation(scale * xs + offset, ys)
        npt.assert_allclose(moved, base, atol=1e-9)


class TestValueReturnCorrelation:
    def test_oracle_and_negated_critic(self, medium):
        cfg = AnalysisConfig(gamma=0.9)
        table = {}
        for traj in ds.split_trajectories(medium):
            series = analysis.discounted_return_series(traj, cfg.gamma)
            for t, g in zip(traj.transitions, series):
                table[(t.episode_id, t.step_index)] = g
        lookup = {tuple(np.round(t.state, 12)): table[(t.episode_id, t.step_index)]
                  for t in medium.transitions}

        def oracle(states, actions):
            return np.array([lookup[tuple(np.round(s, 12))] for s in states])

        mean, skipped = analysis.value_return_correlation(oracle, medium, cfg)
        npt.assert_allclose(mean, 1.0, atol=1e-9)
        mean_neg, _ = analysis.value_return_correlation(
            lambda s, a: -oracle(s, a), medium, cfg)
        npt.assert_allclose(mean_neg, -1.0, atol=1e-9)

    def test_constant_critic_all_skipped(self, medium):
        cfg = AnalysisConfig()
        with pytest.raises(PreconditionError):
            analysis.value_return_correlation(
                lambda s, a: np.zeros(len(s)), medium, cfg)

    def test_unlabeled_rejected(self, medium):
        with pytest.raises(PreconditionError):
            analysis.value_return_correlation(
                lambda s, a: np.zeros(len(s)), ds.strip_rewards(medium),
                AnalysisConfig())


class TestGoodness:
    def test_peaked_critic_scores_one(self, expert):
        def peaked(states, actions):
            data_actions = expert_actions_for(expert, states)
            return -np.linalg.norm(actions - data_actions, axis=1)

        # peaked at the logged action: every random action loses
        cfg = AnalysisConfig(k_random_actions=16, n_states=64)
        g = analysis.goodness(QFromExpert(expert), expert, cfg, Rng(3).generator())
        assert g == 1.0

    def test_constant_critic_scores_zero(self, expert):
        cfg = AnalysisConfig(k_random_actions=16, n_states=64)
        g = analysis.goodness(lambda s, a: np.zeros(len(s)), expert, cfg,
                              Rng(4).generator())
        assert g == 0.0

    def test_inverted_critic_scores_zero(self, expert):
        cfg = AnalysisConfig(k_random_actions=16, n_states=64)
        g = analysis.goodness(QFromExpertInverted(expert), expert, cfg,
                              Rng(5).generator())
        assert g == 0.0

    def test_matches_enumeration_oracle(self, expert):
        # Q depends only on the action: Q = -(a - 0.2)^2. The exact goodness
        # for (s, a*) is the uniform measure of {a: Q(a) < Q(a*)}, computed
        # here by a fine grid.
        def q(states, actions):
            return -(actions[:, 0] - 0.2) ** 2

        cfg = AnalysisConfig(k_random_actions=32, n_states=128, seed=0)
        sampled = analysis.goodness(q, expert, cfg, Rng(6).generator())

        grid = np.linspace(-1, 1, 20001)[:, None]
        expected = []
        idx = Rng(6).generator().choice(len(expert), size=128, replace=False)
        for a_star in expert.actions()[idx]:
            q_star = -(a_star[0] - 0.2) ** 2
            expected.append(np.mean(-(grid[:, 0] - 0.2) ** 2 < q_star))
        p = float(np.mean(expected))
        sigma = np.sqrt(p * (1 - p) / (128 * 32))
        assert abs(sampled - p) <= 3 * sigma + 1e-9

    def test_empty_dataset_rejected(self, expert):
        empty = ds.OfflineDataset("lineworld", "expert", [], labeled=True)
        with pytest.raises(PreconditionError):
            analysis.goodness(lambda s, a: np.zeros(len(s)), empty,
                              AnalysisConfig(), Rng(0).generator())


def expert_actions_for(dataset, states):
    lookup = {tuple(np.round(t.state, 12)): t.action for t in dataset.transitions}
    return np.stack([lookup[tuple(np.round(s, 12))] for s in states])


class QFromExpert:
    """Critic peaked exactly at the dataset action for each state."""

    def __init__(self, dataset):
        self.dataset = dataset

    def __call__(self, states, actions):
        star = expert_actions_for(self.dataset, states)
        return -np.linalg.norm(actions - star, axis=1)


class QFromExpertInverted(QFromExpert):
    def __call__(self, states, actions):
        return -super().__call__(states, actions)


class TestTransformRewards:
    def test_identity(self, medium):
        out = analysis.transform_rewards(medium, AffineTransform(1.0, 0.0))
        npt.assert_array_equal(out.rewards(), medium.rewards())

    def test_scale_and_offset(self):
        data = ds.OfflineDataset("lineworld", "medium", [
            Transition(np.zeros(1), np.zeros(1), np.zeros(1), 0.5, 0, 0),
        ], labeled=True)
        out = analysis.transform_rewards(data, AffineTransform(2.0, 0.0))
        assert out.rewards()[0] == 1.0

    def test_positive_scale_preserves_return_ordering(self, medium):
        out = analysis.transform_rewards(medium, AffineTransform(3.7, -2.0))
        base = np.argsort([t.episodic_return for t in ds.split_trajectories(medium)])
        moved = np.argsort([t.episodic_return for t in ds.split_trajectories(out)])
        npt.assert_array_equal(base, moved)


class TestFitAffine:
    def test_exact_recovery(self, medium):
        target = analysis.transform_rewards(medium, AffineTransform(2.0, 1.0))
        fit = analysis.fit_affine_to_model(medium, target)
        npt.assert_allclose([fit.scale, fit.offset], [2.0, 1.0], atol=1e-9)

    def test_identity_recovery(self, medium):
        fit = analysis.fit_affine_to_model(medium, medium)
        npt.assert_allclose([fit.scale, fit.offset], [1.0, 0.0], atol=1e-9)

    def test_noisy_recovery(self, medium):
        gen = Rng(7).generator()
        noisy = ds.with_rewards(medium, 3.0 * medium.rewards() - 0.5
                                + gen.uniform(-0.01, 0.01, size=len(medium)))
        fit = analysis.fit_affine_to_model(medium, noisy)
        assert abs(fit.scale - 3.0) < 0.05
        assert abs(fit.offset + 0.5) < 0.05

    def test_constant_gt_rejected(self, medium):
        flat = policy.substitute_rewards(medium, "constant_zero")
        with pytest.raises(PreconditionError):
            analysis.fit_affine_to_model(flat, medium)


@pytest.fixture(scope="module")
def trained_agent(medium):
    cfg = policy.PolicyConfig(hidden_sizes=[16, 16], batch_size=32,
                              updates=300, seed=0)
    agent, _ = policy.train_policy(medium, cfg)
    return agent


class TestBuildReport:
    @pytest.fixture
    def agent(self, trained_agent):
        return trained_agent

    def test_fields_in_range(self, agent, lineworld, medium, expert):
        cfg = AnalysisConfig(gamma=0.99, n_states=64, k_random_actions=8)
        report = analysis.build_report(agent, lineworld, medium, expert, cfg,
                                       reward_source="ground_truth",
                                       eval_episodes=10)
        assert -1.0 <= report.pearson_on_train <= 1.0
        assert -1.0 <= report.pearson_on_expert <= 1.0
        assert 0.0 <= report.goodness_on_expert <= 1.0
        assert report.reward_source == "ground_truth"

    def test_deterministic(self, agent, lineworld, medium, expert):
        cfg = AnalysisConfig(gamma=0.99, n_states=64, k_random_actions=8)
        a = analysis.build_report(agent, lineworld, medium, expert, cfg,
                                  reward_source="gt", eval_episodes=10)
        b = analysis.build_report(agent, lineworld, medium, expert, cfg,
                                  reward_source="gt", eval_episodes=10)
        assert a == b

    def test_report_round_trips_to_json(self, agent, lineworld, medium, expert,
                                        tmp_path):
        import json
        cfg = AnalysisConfig(gamma=0.99, n_states=32, k_random_actions=4)
        report = analysis.build_report(agent, lineworld, medium, expert, cfg,
                                       reward_source="gt", eval_episodes=5)
        path = tmp_path / "report.json"
        analysis.save_report(report, path, provenance={"agent": "abc"})
        blob = json.loads(path.read_text())
        assert blob["reward_source"] == "gt"
        assert blob["provenance"]["agent"] == "abc"
        assert "performance" in blob
