"""Optimizer, loss, schedule, config plumbing, and the training loop."""

import os

import numpy as np
import pytest

from gwmixer import (
    MixMode,
    ScheduleConfig,
    TrainConfig,
    adam_step,
    build_model,
    cross_entropy_loss,
    evaluate,
    fixed_samples,
    grad_check,
    init_train_state,
    load_checkpoint,
    lr_at,
    metrics_csv,
    model_backward,
    model_forward,
    task_stream,
    token_accuracy,
    train_loop,
)
from gwmixer.spectral import SpectrumCache
from gwmixer.training import FD_FLOOR, VAL_BATCHES, VAL_INTERVAL, StepRecord


class TestSchedule:
    def test_peak_at_warmup_boundary(self):
        cfg = ScheduleConfig()
        assert lr_at(cfg, 4000) == 5e-4

    def test_linear_warmup_value(self):
        assert lr_at(ScheduleConfig(), 2000) == 2.5e-4

    def test_inverse_sqrt_decay_value(self):
        # sqrt(4000/16000) = 0.5 exactly
        assert lr_at(ScheduleConfig(), 16000) == 2.5e-4

    def test_continuous_at_boundary(self):
        cfg = ScheduleConfig(base_lr=3e-4, warmup_steps=777)
        warm = cfg.base_lr * cfg.warmup_steps / cfg.warmup_steps
        decay = cfg.base_lr * np.sqrt(cfg.warmup_steps / cfg.warmup_steps)
        assert abs(warm - decay) <= 1e-15
        assert lr_at(cfg, cfg.warmup_steps) == pytest.approx(cfg.base_lr, abs=1e-15)

    def test_monotone_shape(self):
        cfg = ScheduleConfig(base_lr=1e-3, warmup_steps=100)
        ramp = [lr_at(cfg, s) for s in range(1, 101)]
        tail = [lr_at(cfg, s) for s in range(100, 400)]
        assert all(b > a for a, b in zip(ramp, ramp[1:]))
        assert all(b < a for a, b in zip(tail, tail[1:]))

    def test_step_zero_rejected(self):
        with pytest.raises(ValueError):
            lr_at(ScheduleConfig(), 0)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        params = {"w": np.array([0.0, 0.0])}
        state = init_train_state(params)
        state.grads["w"][:] = [1.0, -2.0]
        adam_step(state, lr=0.01)
        # bias correction makes the first update lr * sign(g) (up to eps)
        assert params["w"] == pytest.approx([-0.01, 0.01], rel=1e-6)
        assert state.step == 1
        assert np.all(state.grads["w"] == 0.0)

    def test_matches_reference_trace(self):
        rng = np.random.default_rng(0)
        p0 = rng.standard_normal(5)
        params = {"w": p0.copy()}
        state = init_train_state(params)

        ref = p0.copy()
        m = np.zeros(5)
        v = np.zeros(5)
        lr, b1, b2, eps = 0.02, 0.9, 0.999, 1e-8
        for t in range(1, 8):
            g = np.sin(t + np.arange(5.0))
            state.grads["w"][:] = g
            adam_step(state, lr)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            ref = ref - lr * mhat / (np.sqrt(vhat) + eps)
            assert params["w"] == pytest.approx(ref, abs=1e-12), t

    def test_nonfinite_grad_names_tensor(self):
        params = {"a": np.zeros(2), "bad": np.zeros(2)}
        state = init_train_state(params)
        state.grads["bad"][0] = np.nan
        with pytest.raises(ValueError, match="bad"):
            adam_step(state, lr=0.01)

    def test_updates_params_in_place(self):
        arr = np.ones(3)
        state = init_train_state({"w": arr})
        state.grads["w"][:] = 1.0
        adam_step(state, lr=0.5)
        assert arr[0] != 1.0  # the caller's array moved


class TestCrossEntropy:
    def test_uniform_logits_give_log_vocab(self):
        logits = np.zeros((5, 11))
        targets = np.arange(5) % 11
        mask = np.ones(5, dtype=bool)
        loss, _ = cross_entropy_loss(logits, targets, mask)
        assert loss == pytest.approx(np.log(11), abs=1e-15)

    def test_confident_logits_near_zero_loss(self):
        logits = np.zeros((4, 7))
        targets = np.array([1, 3, 0, 6])
        logits[np.arange(4), targets] = 50.0
        loss, _ = cross_entropy_loss(logits, targets, np.ones(4, dtype=bool))
        assert loss <= 1e-20

    def test_large_logits_stable(self):
        logits = np.full((3, 5), 1e4)
        loss, grad = cross_entropy_loss(logits, [0, 1, 2], np.ones(3, dtype=bool))
        assert np.isfinite(loss)
        assert np.all(np.isfinite(grad))
        assert loss == pytest.approx(np.log(5), abs=1e-12)

    def test_grad_formula(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((6, 9))
        targets = rng.integers(9, size=6)
        mask = np.array([1, 0, 1, 1, 0, 1], dtype=bool)
        _, grad = cross_entropy_loss(logits, targets, mask)
        ez = np.exp(logits - logits.max(axis=1, keepdims=True))
        soft = ez / ez.sum(axis=1, keepdims=True)
        expected = soft.copy()
        expected[np.arange(6), targets] -= 1.0
        expected *= mask[:, None] / mask.sum()
        assert np.allclose(grad, expected, atol=1e-15)
        assert np.all(grad[~mask] == 0.0)

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(3)
        logits = rng.standard_normal((4, 6))
        targets = rng.integers(6, size=4)
        mask = np.array([True, True, False, True])
        _, grad = cross_entropy_loss(logits, targets, mask)
        eps = 1e-6
        for idx in np.ndindex(logits.shape):
            up = logits.copy()
            up[idx] += eps
            dn = logits.copy()
            dn[idx] -= eps
            lu, _ = cross_entropy_loss(up, targets, mask)
            ld, _ = cross_entropy_loss(dn, targets, mask)
            assert grad[idx] == pytest.approx((lu - ld) / (2 * eps), abs=1e-6)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="mask"):
            cross_entropy_loss(np.zeros((3, 4)), [0, 1, 2], np.zeros(3, dtype=bool))

    def test_target_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="range"):
            cross_entropy_loss(np.zeros((2, 4)), [0, 4], np.ones(2, dtype=bool))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            cross_entropy_loss(np.zeros((3, 4)), [0, 1], np.ones(3, dtype=bool))


class TestTokenAccuracy:
    def test_counts_only_scored_positions(self):
        logits = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 1.0], [9.0, 0.0]])
        targets = np.array([1, 1, 1, 0])
        mask = np.array([True, True, False, True])
        # scored: hit, miss, hit -> 2/3
        assert token_accuracy(logits, targets, mask) == pytest.approx(2 / 3)


class TestTrainConfig:
    def test_round_trip(self):
        cfg = TrainConfig(d=8, k=1, steps=7, task="reverse", mask_rate=0.4)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="bogus"):
            TrainConfig.from_dict({"d": 8, "bogus": 1})

    def test_mix_mode_mapping(self):
        assert TrainConfig(mode="exact").mix_mode() == MixMode.exact()
        assert TrainConfig(mode="truncated", trunc_m=5).mix_mode() == MixMode.truncated(5)
        assert TrainConfig(mode="chebyshev", cheb_order=9).mix_mode() == MixMode.chebyshev(9)
        with pytest.raises(ValueError, match="mode"):
            TrainConfig(mode="nearest").mix_mode()

    def test_task_spec_wiring(self):
        spec = TrainConfig(task="masked_recovery", n=24, vocab=40, mask_rate=0.5).task_spec()
        assert (spec.kind, spec.n, spec.vocab, spec.mask_rate) == ("masked_recovery", 24, 40, 0.5)
        assert spec.graph_source == "chain"
        spec2 = TrainConfig(conllu="trees.conllu").task_spec()
        assert spec2.graph_source == "conllu"
        assert spec2.conllu_path == "trees.conllu"


class TestMetricsCsv:
    def test_format(self):
        rows = [StepRecord(1, 0.5, 2.5e-4, 1.25), StepRecord(2, 1 / 3, 5e-4, 0.75)]
        text = metrics_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "step,loss,lr,grad_norm"
        assert lines[1] == "1,0.5,0.00025000000000000001,1.25"
        assert lines[2].startswith("2,0.33333333333333331,")
        assert text.endswith("\n")

    def test_constants_pinned(self):
        assert VAL_INTERVAL == 250
        assert VAL_BATCHES == 16


def smoke_config(**over):
    base = dict(d=16, k=2, layers=1, ffn_mult=2, vocab=16, task="copy",
                n=12, steps=400, seed=0, lr=2e-3, warmup=50)
    base.update(over)
    return TrainConfig(**base)


def build_for(cfg, seed=None):
    return build_model(cfg.d, cfg.k, cfg.layers, cfg.ffn_mult, cfg.vocab,
                       seed=cfg.seed if seed is None else seed)


class TestTrainLoop:
    def test_copy_smoke_loss_decreases(self):
        cfg = smoke_config()
        result = train_loop(build_for(cfg), cfg)
        losses = np.array([r.loss for r in result.records])
        ma = np.convolve(losses, np.ones(20) / 20, mode="valid")
        running_min = np.minimum.accumulate(ma)
        # smoothed loss never climbs meaningfully above its best-so-far,
        # and ends an order of magnitude below where it started
        assert np.max(ma - running_min) <= 0.05 * ma[0]
        assert ma[-1] < 0.1 * ma[0]
        assert result.final_val_loss is not None

    def test_deterministic_artifacts(self, tmp_path):
        cfg = smoke_config(steps=30, d=8, k=1, n=8)
        a = tmp_path / "a"
        b = tmp_path / "b"
        train_loop(build_for(cfg), cfg, out_dir=str(a))
        train_loop(build_for(cfg), cfg, out_dir=str(b))
        for name in ("checkpoint.json", "metrics.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_records_follow_schedule(self):
        cfg = smoke_config(steps=60, warmup=40, d=8, k=1, n=8)
        result = train_loop(build_for(cfg), cfg)
        sched = ScheduleConfig(cfg.lr, cfg.warmup)
        assert [r.step for r in result.records] == list(range(1, 61))
        for r in result.records:
            assert r.lr == lr_at(sched, r.step)
            assert r.grad_norm >= 0.0

    def test_early_stopping_on_flat_validation(self):
        # lr=0 freezes the model, so validation never improves after the
        # first round and patience=1 stops at the second
        cfg = TrainConfig(d=8, k=1, layers=1, ffn_mult=2, vocab=8, task="copy",
                          n=6, steps=2000, seed=0, lr=0.0, patience=1)
        result = train_loop(build_for(cfg), cfg)
        assert result.stopped_early
        assert len(result.records) == 2 * VAL_INTERVAL
        assert len(result.val_history) == 2
        assert result.val_history[0][1] == result.val_history[1][1]

    def test_nonfinite_loss_aborts_keeping_checkpoint(self, tmp_path):
        cfg = TrainConfig(d=8, k=1, layers=1, ffn_mult=2, vocab=8, task="copy",
                          n=6, steps=5, seed=0)
        model = build_for(cfg)
        model.embed[:] = 1e160
        model.readout[:] = 1e160  # logits overflow -> nan loss at step 1
        out = tmp_path / "run"
        with np.errstate(all="ignore"):
            with pytest.raises(ValueError, match="non-finite loss"):
                train_loop(model, cfg, out_dir=str(out))
        config, params = load_checkpoint(out / "checkpoint.json")
        assert config["d"] == 8
        assert np.all(np.isfinite(params["embed"]))

    def test_accum_averages_gradients(self):
        cfg = smoke_config(steps=1, accum=2, d=8, k=1, n=8)
        result = train_loop(build_for(cfg), cfg)

        # replay the two samples the loop consumed against frozen params
        twin = build_for(cfg)
        spec = cfg.task_spec()
        stream = task_stream(spec, cfg.seed, "train")
        cache = SpectrumCache()
        total = None
        for _ in range(2):
            s = next(stream)
            logits, tape = model_forward(twin, s.graph, s.tokens,
                                         cfg.mix_mode(), cache)
            _, gl = cross_entropy_loss(logits, s.targets, s.mask)
            grads = model_backward(twin, tape, gl)
            if total is None:
                total = {k: v.copy() for k, v in grads.items()}
            else:
                for k in total:
                    total[k] += grads[k]
        norm = float(np.sqrt(sum(((g / 2) ** 2).sum() for g in total.values())))
        assert result.records[0].grad_norm == pytest.approx(norm, rel=1e-12)

    def test_writes_metrics_file(self, tmp_path):
        cfg = smoke_config(steps=12, d=8, k=1, n=8)
        out = tmp_path / "run"
        result = train_loop(build_for(cfg), cfg, out_dir=str(out))
        text = (out / "metrics.csv").read_text()
        assert text == metrics_csv(result.records)
        assert len(text.splitlines()) == 13
        assert os.path.exists(out / "checkpoint.json")


class TestEvaluate:
    def test_matches_manual_loop(self):
        cfg = smoke_config(steps=1, d=8, k=1, n=8)
        model = build_for(cfg)
        samples = fixed_samples(cfg.task_spec(), 7, 5, "eval")
        cache = SpectrumCache()
        loss, acc = evaluate(model, samples, cfg.mix_mode(), cache)

        losses = []
        hit = tot = 0
        for s in samples:
            logits, _ = model_forward(model, s.graph, s.tokens, cfg.mix_mode(), cache)
            l, _ = cross_entropy_loss(logits, s.targets, s.mask)
            losses.append(l)
            pred = np.argmax(logits, axis=1)
            hit += int((pred[s.mask] == s.targets[s.mask]).sum())
            tot += int(s.mask.sum())
        assert loss == pytest.approx(float(np.mean(losses)), rel=1e-15)
        assert acc == pytest.approx(hit / tot, rel=1e-15)


class TestGradCheck:
    @pytest.mark.parametrize("selector", ["filter", "mix", "layer", "model"])
    def test_selectors_pass(self, selector):
        report = grad_check(selector=selector, seed=0)
        assert report.passed, f"{selector}: {report.max_rel_err:.3e}"
        assert report.max_rel_err <= 1e-4
        assert report.selector == selector
        assert all(e.max_rel_err >= 0.0 for e in report.entries)

    def test_corrupted_gradient_detected(self):
        def negate(grads):
            return {k: -np.asarray(v) for k, v in grads.items()}

        report = grad_check(selector="filter", seed=0, corrupt=negate)
        assert not report.passed
        # sign flip gives |(-g) - g| / mean(|g|) = 2 wherever |g| >> floor
        assert report.max_rel_err == pytest.approx(2.0, abs=1e-4)

    def test_unknown_selector_rejected(self):
        with pytest.raises(ValueError, match="selector"):
            grad_check(selector="everything")

    def test_floor_constant(self):
        assert FD_FLOOR == 1e-6
