"""Optimization: Noam-style schedule, Adam, masked cross entropy, the
training loop, and a finite-difference gradient checker.

Everything is deterministic for a fixed config and seed: the task
streams, initialization, and float serialization are all pinned, so two
identical runs produce byte-identical checkpoints and metric traces.
"""

import os
from dataclasses import dataclass, fields

import numpy as np

from .blocks import (
    WaveletModel,
    build_model,
    checkpoint_text,
    model_backward,
    model_forward,
    model_params,
)
from .filterbank import MixMode, build_filter_bank, filter_eval, filter_eval_grad, wavelet_mix, wavelet_mix_backward
from .graphs import build_chain_graph, normalized_laplacian, symmetrize
from .serialize import fmt_float
from .spectral import SpectrumCache, eigendecompose
from .tasks import TaskSpec, fixed_samples, task_stream

VAL_INTERVAL = 250
VAL_BATCHES = 16


@dataclass(frozen=True)
class ScheduleConfig:
    base_lr: float = 5e-4
    warmup_steps: int = 4000


def lr_at(cfg: ScheduleConfig, step: int) -> float:
    """Linear warmup to base_lr, then inverse square-root decay. Continuous
    at the warmup boundary; steps start at 1."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if step <= cfg.warmup_steps:
        return cfg.base_lr * step / cfg.warmup_steps
    return cfg.base_lr * np.sqrt(cfg.warmup_steps / step)


@dataclass
class TrainState:
    """Flat named tensors plus Adam moments. params aliases live model
    arrays; adam_step updates them in place."""

    params: dict
    grads: dict
    adam_m: dict
    adam_v: dict
    step: int = 0
    rng_seed: int = 0


def init_train_state(params: dict, seed: int = 0) -> TrainState:
    return TrainState(
        params=params,
        grads={k: np.zeros_like(v) for k, v in params.items()},
        adam_m={k: np.zeros_like(v) for k, v in params.items()},
        adam_v={k: np.zeros_like(v) for k, v in params.items()},
        step=0,
        rng_seed=seed,
    )


def adam_step(state: TrainState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> TrainState:
    """Standard Adam with bias correction. Increments step, zeroes grads.
    Non-finite gradients abort, naming the offending tensor."""
    for name, g in state.grads.items():
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter {name!r}")
    t = state.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in state.params.items():
        g = state.grads[name]
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        g[...] = 0.0
    state.step = t
    return state


def cross_entropy_loss(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray):
    """Mean negative log likelihood over scored positions (mask True).

    Returns (loss, grad_logits); the gradient is (softmax - onehot)/count
    on scored rows and zero elsewhere. Max-subtraction keeps the softmax
    stable for large logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],) or mask.shape != targets.shape:
        raise ValueError(
            f"shape mismatch: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}"
        )
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= logits.shape[1]:
        raise ValueError("target id out of range")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mask scores no positions")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    rows = np.arange(len(targets))
    loss = -float(logp[rows, targets][mask].sum()) / count
    grad = ez / denom
    grad[rows, targets] -= 1.0
    grad *= mask[:, None] / count
    return loss, grad


def token_accuracy(logits: np.ndarray, targets: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of scored positions where argmax(logits) hits the target."""
    pred = np.argmax(logits, axis=1)
    mask = np.asarray(mask, dtype=bool)
    return float((pred[mask] == targets[mask]).mean())


@dataclass
class TrainConfig:
    d: int = 32
    k: int = 4
    layers: int = 2
    ffn_mult: int = 4
    vocab: int = 32
    task: str = "copy"
    n: int = 16
    steps: int = 2000
    seed: int = 0
    lr: float = 5e-4
    warmup: int = 4000
    mode: str = "exact"
    cheb_order: int = 16
    trunc_m: int = 16
    accum: int = 1
    patience: int = 10
    mask_rate: float = 0.25
    conllu: str | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def mix_mode(self) -> MixMode:
        if self.mode == "exact":
            return MixMode.exact()
        if self.mode == "truncated":
            return MixMode.truncated(self.trunc_m)
        if self.mode == "chebyshev":
            return MixMode.chebyshev(self.cheb_order)
        raise ValueError(f"unknown mode {self.mode!r}")

    def task_spec(self) -> TaskSpec:
        source = "conllu" if self.conllu else "chain"
        return TaskSpec(self.task, self.n, self.vocab, self.mask_rate, source, self.conllu)


@dataclass
class StepRecord:
    step: int
    loss: float
    lr: float
    grad_norm: float


@dataclass
class TrainResult:
    model: WaveletModel
    records: list
    val_history: list  # (step, val_loss)
    final_val_loss: float | None
    stopped_early: bool


def metrics_csv(records) -> str:
    lines = ["step,loss,lr,grad_norm"]
    for r in records:
        lines.append(f"{r.step},{fmt_float(r.loss)},{fmt_float(r.lr)},{fmt_float(r.grad_norm)}")
    return "\n".join(lines) + "\n"


def evaluate(model: WaveletModel, samples, mode: MixMode,
             cache: SpectrumCache | None = None):
    """Mean loss and token accuracy over a list of TaskSamples."""
    losses = []
    correct = 0
    total = 0
    for s in samples:
        logits, _ = model_forward(model, s.graph, s.tokens, mode, cache)
        loss, _ = cross_entropy_loss(logits, s.targets, s.mask)
        losses.append(loss)
        pred = np.argmax(logits, axis=1)
        correct += int((pred[s.mask] == s.targets[s.mask]).sum())
        total += int(s.mask.sum())
    return float(np.mean(losses)), correct / total


def train_loop(model: WaveletModel, cfg: TrainConfig, out_dir: str | None = None,
               cache: SpectrumCache | None = None) -> TrainResult:
    """Run cfg.steps optimizer steps, each averaging cfg.accum samples.

    Validates (and checkpoints, when out_dir is set) every VAL_INTERVAL
    steps and at the end; stops early after cfg.patience validation
    rounds without improvement. A non-finite loss aborts with the last
    checkpoint left on disk.
    """
    cache = cache if cache is not None else SpectrumCache()
    spec = cfg.task_spec()
    mode = cfg.mix_mode()
    stream = task_stream(spec, cfg.seed, "train")
    val_set = fixed_samples(spec, cfg.seed, VAL_BATCHES, "val")
    state = init_train_state(model_params(model), cfg.seed)
    schedule = ScheduleConfig(cfg.lr, cfg.warmup)

    def write_checkpoint():
        if out_dir is not None:
            save_path = os.path.join(out_dir, "checkpoint.json")
            text = checkpoint_text(cfg.to_dict(), state.params)
            with open(save_path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    write_checkpoint()

    records = []
    val_history = []
    best_val = np.inf
    stale = 0
    stopped_early = False
    for step in range(1, cfg.steps + 1):
        total_loss = 0.0
        for _ in range(cfg.accum):
            sample = next(stream)
            logits, tape = model_forward(model, sample.graph, sample.tokens, mode, cache)
            loss, grad_logits = cross_entropy_loss(logits, sample.targets, sample.mask)
            total_loss += loss
            grads = model_backward(model, tape, grad_logits)
            for name in state.grads:
                state.grads[name] += grads[name]
        mean_loss = total_loss / cfg.accum
        if not np.isfinite(mean_loss):
            raise ValueError(f"non-finite loss {mean_loss!r} at step {step}; aborting")
        if cfg.accum > 1:
            for g in state.grads.values():
                g /= cfg.accum
        grad_norm = float(np.sqrt(sum(float((g * g).sum()) for g in state.grads.values())))
        lr = lr_at(schedule, step)
        adam_step(state, lr)
        records.append(StepRecord(step, mean_loss, lr, grad_norm))
        if step % VAL_INTERVAL == 0 or step == cfg.steps:
            val_loss, _ = evaluate(model, val_set, mode, cache)
            val_history.append((step, val_loss))
            write_checkpoint()
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    stopped_early = True
                    break
    if out_dir is not None:
        with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(metrics_csv(records))
        write_checkpoint()
    final_val = val_history[-1][1] if val_history else None
    return TrainResult(model, records, val_history, final_val, stopped_early)


# ---------------------------------------------------------------------------
# finite-difference gradient checking

FD_FLOOR = 1e-6  # relative-error denominator floor; FD noise sits well below


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float


@dataclass
class GradCheckReport:
    selector: str
    tol: float
    entries: list
    passed: bool

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)


def _rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(0.5 * (np.abs(analytic) + np.abs(numeric)), FD_FLOOR)
    return np.abs(analytic - numeric) / denom


def _fd_check(params: dict, loss_fn, analytic: dict, step: float) -> list:
    entries = []
    for name, p in params.items():
        num = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_n = num.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = loss_fn()
            flat_p[i] = orig - step
            down = loss_fn()
            flat_p[i] = orig
            flat_n[i] = (up - down) / (2.0 * step)
        err = _rel_errors(np.asarray(analytic[name], dtype=np.float64), num)
        entries.append(GradCheckEntry(name, float(err.max()) if err.size else 0.0))
    return entries


def grad_check(selector: str = "model", seed: int = 0, step: float = 1e-5,
               tol: float = 1e-4, corrupt=None) -> GradCheckReport:
    """Compare hand-written gradients against central differences.

    Selectors: "filter" (weighted filter values), "mix" (0.5 ||Y||^2 of
    wavelet_mix), "layer" (0.5 ||y||^2 of one layer), "model" (cross
    entropy of the full model, the acceptance configuration). `corrupt`
    is a test hook applied to the analytic gradient dict before
    comparison.
    """
    rng = np.random.default_rng(seed)
    if selector == "filter":
        bank = build_filter_bank(1, 1, seed=seed)
        f = bank.filters[0]
        lam = rng.uniform(0.0, 2.0, 12)
        wts = rng.standard_normal(12)
        params = {"w1": f.w1, "b1": f.b1, "w2": f.w2, "b2": f.b2}

        def loss_fn():
            return float(wts @ filter_eval(f, lam))

        _, g = filter_eval_grad(f, lam)
        analytic = {k: np.asarray(wts @ g[k]) for k in params}
    elif selector in ("mix", "layer"):
        n, d, k = 6, 4, 2
        graph = symmetrize(build_chain_graph(n))
        lap = normalized_laplacian(graph)
        eig = eigendecompose(lap)
        x = rng.standard_normal((n, d))
        mode = MixMode.exact()
        if selector == "mix":
            bank = build_filter_bank(k, d, seed=seed)
            params = _bank_params(bank)

            def loss_fn():
                y = wavelet_mix(bank, eig, x, mode)
                return 0.5 * float((y * y).sum())

            y = wavelet_mix(bank, eig, x, mode)
            mg = wavelet_mix_backward(bank, eig, x, mode, y)
            analytic = _bank_grads(mg)
        else:
            from .blocks import build_feed_forward, layer_backward, layer_forward, WaveletLayer

            bank = build_filter_bank(k, d, seed=seed)
            layer = WaveletLayer(bank, build_feed_forward(d, 4, rng))
            params = _bank_params(layer.bank)
            for nm in ("w1", "b1", "w2", "b2"):
                params[f"ffn.{nm}"] = getattr(layer.ffn, nm)

            def loss_fn():
                y, _ = layer_forward(layer, eig, lap, x, mode)
                return 0.5 * float((y * y).sum())

            y, tape = layer_forward(layer, eig, lap, x, mode)
            lg = layer_backward(layer, eig, tape, y)
            analytic = _bank_grads(lg.mix)
            for nm in ("w1", "b1", "w2", "b2"):
                analytic[f"ffn.{nm}"] = lg.ffn[nm]
    elif selector == "model":
        # acceptance configuration: n=6, d=8, K=2, 2 layers, vocab 11
        from .tasks import gen_task_batch

        spec = TaskSpec("copy", 6, 11)
        sample = gen_task_batch(spec, seed)
        model = build_model(d=8, k=2, layers=2, ffn_mult=4, vocab=11, seed=seed)
        cache = SpectrumCache()
        mode = MixMode.exact()
        params = model_params(model)

        def loss_fn():
            logits, _ = model_forward(model, sample.graph, sample.tokens, mode, cache)
            loss, _ = cross_entropy_loss(logits, sample.targets, sample.mask)
            return loss

        logits, tape = model_forward(model, sample.graph, sample.tokens, mode, cache)
        _, grad_logits = cross_entropy_loss(logits, sample.targets, sample.mask)
        analytic = model_backward(model, tape, grad_logits)
    else:
        raise ValueError(f"unknown selector {selector!r}")

    if corrupt is not None:
        analytic = corrupt(analytic)
    entries = _fd_check(params, loss_fn, analytic, step)
    worst = max((e.max_rel_err for e in entries), default=0.0)
    return GradCheckReport(selector, tol, entries, worst <= tol)


def _bank_params(bank) -> dict:
    params = {}
    for i, f in enumerate(bank.filters):
        for nm in ("w1", "b1", "w2", "b2"):
            params[f"filters.{i}.{nm}"] = getattr(f, nm)
    params["alpha"] = bank.alpha
    return params


def _bank_grads(mg) -> dict:
    grads = {}
    for i, fg in enumerate(mg.filters):
        for nm in ("w1", "b1", "w2", "b2"):
            grads[f"filters.{i}.{nm}"] = fg[nm]
    grads["alpha"] = mg.alpha
    return grads
