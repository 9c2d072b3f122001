"""DDPM schedule, forward marginals, training step, sampling and inpainting."""
import numpy as np
import pytest

from stitchlab import datagen, diffusion, models, train
from stitchlab.diffusion import DiffusionSchedule, InpaintMask, goal_mask, q_sample, start_mask

SCHED = DiffusionSchedule()


class StubModel:
    """Model-presenting stub with a fixed denoise function (no parameters)."""

    def __init__(self, fn, dtype=np.float64):
        self.fn = fn
        self.params = {}
        self.ema = {}
        self.spec = type("S", (), {"kind": "stub"})()
        self.time_table = np.zeros((SCHED.T_diff, 1))
        self.dtype = np.dtype(dtype)
        self.half_rf = None

    def forward(self, x, t):
        from stitchlab.autodiff import Tensor

        out = self.fn(x.data if hasattr(x, "data") else x, t)
        return Tensor(out)

    def ema_view(self):
        return self

    def astype(self, dtype):
        return self


class TestSchedule:
    def test_invariants(self):
        assert np.all(SCHED.betas > 0) and np.all(SCHED.betas < 1)
        assert np.all(np.diff(SCHED.betas) > 0)
        assert np.all(np.diff(SCHED.alpha_bar) < 0)
        assert SCHED.alpha_bar[0] == pytest.approx(1.0, abs=2e-4)
        assert SCHED.T_diff == 100

    def test_bad_t_rejected(self):
        with pytest.raises(ValueError):
            q_sample(SCHED, np.zeros((2, 8)), 100, np.zeros((2, 8)))
        with pytest.raises(ValueError):
            q_sample(SCHED, np.zeros((2, 8)), -1, np.zeros((2, 8)))


class TestQSample:
    def test_t0_close_to_x0(self):
        rng = np.random.default_rng(0)
        x0 = rng.uniform(-1, 1, (4, 2, 16))
        eps = rng.standard_normal(x0.shape)
        xt = q_sample(SCHED, x0, 0, eps)
        assert np.abs(xt - x0).max() < 0.05

    def test_t_last_close_to_noise(self):
        rng = np.random.default_rng(1)
        x0 = rng.uniform(-1, 1, (4, 2, 16))
        eps = rng.standard_normal(x0.shape)
        xt = q_sample(SCHED, x0, SCHED.T_diff - 1, eps)
        assert np.sqrt(SCHED.alpha_bar[-1]) < 0.35  # x0 weight mostly gone
        assert np.abs(xt - np.sqrt(1 - SCHED.alpha_bar[-1]) * eps).max() < 0.4

    @pytest.mark.parametrize("t", [0, 50, 99])
    def test_monte_carlo_moments(self, t):
        # Oracle: closed-form mean/var of the forward marginal.
        rng = np.random.default_rng(2)
        n = 20000
        x0 = 0.4
        eps = rng.standard_normal(n)
        xt = q_sample(SCHED, np.full(n, x0), t, eps)
        want_mean = np.sqrt(SCHED.alpha_bar[t]) * x0
        want_var = 1 - SCHED.alpha_bar[t]
        assert xt.mean() == pytest.approx(want_mean, abs=3e-2)
        assert xt.var() == pytest.approx(want_var, rel=3e-2)

    def test_per_item_t_vector(self):
        x0 = np.ones((3, 2, 8))
        eps = np.zeros_like(x0)
        xt = q_sample(SCHED, x0, np.array([0, 50, 99]), eps)
        for i, t in enumerate([0, 50, 99]):
            np.testing.assert_allclose(xt[i], np.sqrt(SCHED.alpha_bar[t]), rtol=1e-12)


class TestTrainStep:
    def test_identity_stub_loss_matches_replayed_oracle(self):
        # A stub returning its input makes the loss mean||clip(x_t)-x0||^2;
        # the oracle replays the exact RNG stream independently.
        rng = np.random.default_rng(3)
        batch = np.random.default_rng(9).uniform(-1, 1, (8, 2, 16))
        stub = StubModel(lambda x, t: x)
        from stitchlab.optim import OptimState

        loss = diffusion.train_step(stub, batch, rng, OptimState(), SCHED, 0, 10, 0.999)
        rng2 = np.random.default_rng(3)
        t = rng2.integers(SCHED.T_diff, size=8)
        eps = rng2.standard_normal(batch.shape)
        xt = q_sample(SCHED, batch, t, eps)
        want = float(np.mean((np.clip(xt, -1.1, 1.1) - batch) ** 2))
        assert loss == pytest.approx(want, rel=1e-12)

    def test_perfect_oracle_zero_loss(self):
        batch = np.random.default_rng(4).uniform(-0.9, 0.9, (4, 2, 16))
        stub = StubModel(lambda x, t: np.broadcast_to(batch, x.shape).copy())
        from stitchlab.optim import OptimState

        loss = diffusion.train_step(stub, batch, np.random.default_rng(0), OptimState(), SCHED, 0, 10, 0.999)
        assert loss == 0.0

    def test_fixed_seed_reproduces_loss_sequence(self):
        spec = models.EqNetSpec(depth=3, channels=6, ker=2)
        batch = np.random.default_rng(5).uniform(-1, 1, (4, 2, 16))

        def run():
            m = models.build(spec, seed=1)
            from stitchlab.optim import OptimState

            rng = np.random.default_rng(11)
            opt = OptimState()
            return [
                diffusion.train_step(m, batch, rng, opt, SCHED, s, 20, 0.999) for s in range(6)
            ]

        assert run() == run()

    def test_divergence_raises_and_checkpoints(self, tmp_path):
        spec = models.EqNetSpec(depth=2, channels=4, ker=1)
        m = models.build(spec, seed=0)
        m.params["in.w"].data[:] = np.nan
        ds = datagen.Dataset(
            trajectories=[
                datagen.Trajectory(
                    states=np.zeros((16, 2)), actions=np.zeros((16, 2)), valid_length=16
                )
            ],
            horizon=16,
            norm=datagen.NormMap(lo=np.array([0.0, 0.0]), hi=np.array([1.0, 1.0])),
            seed=0,
            kind="unconditional",
            step_bound=1.0,
        )
        cfg = train.TrainConfig(steps=3, batch=2, seed=0, ckpt_every=0)
        with pytest.raises(diffusion.TrainingDiverged):
            train.fit(m, ds, cfg, SCHED, out_dir=tmp_path)
        assert (tmp_path / "diverged.npz").exists()


class TestMasks:
    def test_goal_mask_masked_position_count(self):
        m = goal_mask(np.array([-1, -1]), np.array([1, 1]), H=128, repeats=25)
        assert int(m.mask.any(axis=0).sum()) == 26

    def test_zero_repeats_start_only(self):
        m = goal_mask(np.array([-1, -1]), np.array([1, 1]), H=128, repeats=0)
        assert int(m.mask.any(axis=0).sum()) == 1 and m.mask[:, 0].all()

    def test_nonfinite_targets_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            InpaintMask(mask=np.ones((2, 4), dtype=bool), values=np.full((2, 4), np.nan))

    def test_bad_repeats_rejected(self):
        with pytest.raises(ValueError):
            goal_mask(np.zeros(2), np.zeros(2), H=16, repeats=16)


class TestSampler:
    def test_mask_exact_at_output(self):
        stub = StubModel(lambda x, t: np.clip(x, -1, 1) * 0.5)
        mask = start_mask(np.array([-0.25, 0.75]), H=32)
        out = diffusion.sample(stub, SCHED, 5, np.random.default_rng(0), mask=mask, horizon=32)
        for i in range(5):
            assert out[i, 0, 0] == -0.25 and out[i, 1, 0] == 0.75

    def test_goal_mask_exact_at_output(self):
        stub = StubModel(lambda x, t: np.zeros_like(x))
        gm = goal_mask(np.array([-0.5, -0.5]), np.array([0.5, 0.25]), H=64, repeats=10)
        out = diffusion.sample(stub, SCHED, 3, np.random.default_rng(1), mask=gm, horizon=64)
        np.testing.assert_array_equal(out[:, 0, -10:], np.full((3, 10), 0.5))
        np.testing.assert_array_equal(out[:, 1, -10:], np.full((3, 10), 0.25))
        np.testing.assert_array_equal(out[:, :, 0], np.tile([-0.5, -0.5], (3, 1)))

    def test_determinism_and_chunk_invariance(self):
        stub = StubModel(lambda x, t: np.tanh(x))
        a = diffusion.sample(stub, SCHED, 7, np.random.default_rng(42), horizon=16, chunk=3)
        b = diffusion.sample(stub, SCHED, 7, np.random.default_rng(42), horizon=16, chunk=7)
        np.testing.assert_array_equal(a, b)

    def test_per_sample_mask_values(self):
        stub = StubModel(lambda x, t: np.zeros_like(x))
        base = start_mask(np.zeros(2), H=16)
        values = base.values[None].repeat(4, axis=0)
        values[:, :, 0] = np.linspace(-1, 1, 8).reshape(4, 2)
        m = InpaintMask(mask=base.mask, values=values)
        out = diffusion.sample(stub, SCHED, 4, np.random.default_rng(2), mask=m, horizon=16)
        np.testing.assert_array_equal(out[:, :, 0], values[:, :, 0])

    def test_temperature_zero_memorizer_stays_near_training(self):
        # Tiny Eq-Net trained on two short trajectories: with no injected
        # noise, samples land near one of the two training rows.
        rng = np.random.default_rng(6)
        t1 = np.stack([np.linspace(-0.8, 0.8, 32), np.full(32, -0.5)])
        t2 = np.stack([np.full(32, 0.2), np.linspace(0.7, -0.7, 32)])
        batchpool = np.stack([t1, t2])
        spec = models.EqNetSpec(depth=4, channels=12, ker=2)
        m = models.build(spec, seed=0, dtype=np.float32)
        from stitchlab.optim import OptimState

        opt = OptimState(base_lr=3e-3)
        for s in range(700):
            batch = batchpool[rng.integers(2, size=8)]
            diffusion.train_step(m, batch, rng, opt, SCHED, s, 700, ema_rate=0.99)
        out = diffusion.sample(
            m.ema_view(), SCHED, 6, np.random.default_rng(3), temperature=0.0, horizon=32
        )
        for i in range(6):
            d1 = np.abs(out[i] - t1).mean()
            d2 = np.abs(out[i] - t2).mean()
            assert min(d1, d2) < 0.15

    def test_negative_temperature_rejected(self):
        stub = StubModel(lambda x, t: x)
        with pytest.raises(ValueError):
            diffusion.sample(stub, SCHED, 1, np.random.default_rng(0), temperature=-0.1, horizon=8)
