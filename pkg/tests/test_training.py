import numpy as np
import pytest

from amplifier.autodiff import Parameter, Tape
from amplifier.baselines import DLinearForecaster, EATWrapper, LinearForecaster
from amplifier.data import SeriesFrame, windows
from amplifier.model import AmplifierConfig, AmplifierModel
from amplifier.training import (FORMAT_VERSION, Adam, Checkpoint, CheckpointError,
                                NumericalError, TrainConfig, evaluate, load_checkpoint, mae,
                                mse, mse_loss, predict, save_checkpoint, train,
                                write_history)


def frame_of(values):
    values = np.atleast_2d(values)
    return SeriesFrame([str(i) for i in range(values.shape[1])], values,
                       [f"c{i}" for i in range(values.shape[0])])


def sine_frame(n=400, channels=2, seed=0):
    t = np.arange(n)
    rng = np.random.default_rng(seed)
    rows = [np.sin(2 * np.pi * t / 16 + rng.uniform(0, 6)) + 0.5 * np.cos(2 * np.pi * t / 8)
            for _ in range(channels)]
    return frame_of(np.array(rows))


# --- metrics ----------------------------------------------------------------------

def test_metric_examples():
    a = np.random.default_rng(0).normal(size=(3, 4))
    assert mse(a, a) == 0 and mae(a, a) == 0
    assert mse(a + 2, a) == pytest.approx(4) and mae(a + 2, a) == pytest.approx(2)


def test_metrics_match_scalar_loop():
    rng = np.random.default_rng(1)
    p, t = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 5))
    sq = ab = 0.0
    for x, y in zip(p.ravel(), t.ravel()):
        sq += (x - y) ** 2
        ab += abs(x - y)
    assert mse(p, t) == pytest.approx(sq / p.size, abs=1e-12)
    assert mae(p, t) == pytest.approx(ab / p.size, abs=1e-12)


def test_metric_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError, match="shape"):
        mae(np.zeros((2, 3)), np.zeros((3, 2)))


# --- adam -------------------------------------------------------------------------

def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def test_adam_zero_gradient_keeps_params():
    p = Parameter(np.array([1.0, -2.0]), "p")
    opt = Adam([p], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert opt.t == 1


def test_adam_first_step_closed_form():
    p = Parameter(np.array([0.0]), "p")
    p.grad = np.array([1.0])
    Adam([p], lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8).step()
    # m_hat = 1, v_hat = 1  ->  update = -lr / (1 + eps)
    assert p.data[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_groups_independent():
    a, b = Parameter(np.ones(3), "a"), Parameter(np.ones(3), "b")
    opt = Adam([a, b], lr=0.01)
    for step in range(5):
        g = np.array([0.3, -1.0, 2.0]) * (step + 1)
        a.grad, b.grad = g.copy(), g.copy()
        opt.step()
    np.testing.assert_array_equal(a.data, b.data)


def test_adam_step_changes_exactly_nonzero_gradient_entries():
    p = Parameter(np.ones(4), "p")
    p.grad = np.array([0.5, 0.0, -1.0, 0.0])
    Adam([p]).step()
    changed = p.data != 1.0
    np.testing.assert_array_equal(changed, [True, False, True, False])


# --- training loop ----------------------------------------------------------------

MODELS = {
    "amplifier": lambda s: AmplifierModel(AmplifierConfig(2, 16, 8, ffn_hidden=16), seed=s),
    "linear": lambda s: LinearForecaster(2, 16, 8, seed=s),
    "dlinear": lambda s: DLinearForecaster(2, 16, 8, seed=s),
    "eat": lambda s: EATWrapper(LinearForecaster(2, 16, 8, seed=s), seed=s),
}


@pytest.mark.parametrize("kind", sorted(MODELS))
def test_loss_decreases_on_fixed_batch(kind):
    for seed in range(10):
        model = MODELS[kind](seed)
        batch = next(windows(sine_frame(seed=seed), 16, 8, 32, shuffle_seed=seed))
        opt = Adam(model.parameters(), lr=1e-3)
        losses = []
        for _ in range(6):
            with Tape() as tape:
                loss = mse_loss(model(batch.inputs), batch.targets)
                tape.backward(loss, model.parameters())
            losses.append(float(loss.data))
            opt.step()
        assert all(b < a for a, b in zip(losses, losses[1:])), (kind, seed, losses)


def test_linear_baseline_fits_linear_task():
    # a pure sinusoid is exactly linearly predictable from its own window
    t = np.arange(600)
    f = frame_of(np.sin(2 * np.pi * t / 12) + 0.3 * np.sin(2 * np.pi * t / 5))
    model = LinearForecaster(1, 24, 6, seed=0, normalize=False)
    result = train(model, f.rows(0, 500), f.rows(476, 600),
                   TrainConfig(lr=1e-2, max_epochs=40, patience=40, seed=0))
    assert result.history[-1]["train_mse"] < 1e-3


def test_same_seed_same_history():
    f = sine_frame()
    cfg = TrainConfig(max_epochs=3, seed=4)
    runs = [train(MODELS["amplifier"](4), f.rows(0, 300), f.rows(276, 400), cfg).history
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_patience_counts_validation_evaluations():
    f = sine_frame()
    calls = []

    def stuck(model):
        calls.append(1)
        return {"mse": 1.0, "mae": 1.0}

    result = train(MODELS["linear"](0), f.rows(0, 300), f.rows(276, 400),
                   TrainConfig(max_epochs=20, patience=1), validate=stuck)
    # epoch 0 sets the best, epoch 1 fails to improve and stops
    assert len(calls) == 2 and len(result.history) == 2 and result.best.epoch == 0


def test_returns_best_not_last():
    f = sine_frame()
    scores = iter([0.5, 0.2, 0.9, 0.8, 0.7])
    snapshots = []

    def scripted(model):
        snapshots.append({p.name: p.data.copy() for p in model.parameters()})
        v = next(scores)
        return {"mse": v, "mae": v}

    model = MODELS["linear"](1)
    result = train(model, f.rows(0, 300), f.rows(276, 400),
                   TrainConfig(max_epochs=5, patience=3), validate=scripted)
    assert result.best.epoch == 1 and result.best.best_val_loss == 0.2
    for name, p in model.named_parameters().items():
        np.testing.assert_array_equal(p.data, snapshots[1][name])


def test_validation_does_not_mutate_state():
    model = MODELS["amplifier"](2)
    before = {p.name: p.data.copy() for p in model.parameters()}
    evaluate(model, sine_frame())
    predict(model, sine_frame())
    for name, p in model.named_parameters().items():
        np.testing.assert_array_equal(p.data, before[name])


def test_non_finite_loss_aborts_with_coordinates():
    f = sine_frame()
    model = MODELS["linear"](0)
    model.linear.weight.data[0, 0] = np.inf
    with pytest.raises(NumericalError) as err:
        train(model, f.rows(0, 300), f.rows(276, 400), TrainConfig(max_epochs=2))
    assert err.value.epoch == 0 and err.value.batch == 0
    assert "epoch 0, batch 0" in str(err.value)


def test_history_csv(tmp_path):
    rows = [{"epoch": 0, "train_mse": 0.5, "val_mse": 0.25, "val_mae": 0.125}]
    write_history(rows, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text() == "epoch,train_mse,val_mse,val_mae\n0,0.5,0.25,0.125\n"


# --- checkpoints ------------------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(MODELS))
def test_checkpoint_round_trip_bit_exact(kind, tmp_path):
    model = MODELS[kind](3)
    for p in model.parameters():
        p.data = p.data + np.random.default_rng(0).normal(size=p.data.shape) * 1e-3
    x = np.random.default_rng(1).normal(size=(4, 2, 16))
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, best_val_loss=0.125, epoch=7)
    loaded = load_checkpoint(path)
    np.testing.assert_array_equal(loaded(x).data, model(x).data)
    ckpt = Checkpoint.load(path)
    assert (ckpt.best_val_loss, ckpt.epoch, ckpt.format_version) == (0.125, 7, FORMAT_VERSION)


def test_checkpoint_manifest_byte_accounting(tmp_path):
    import json
    model = MODELS["amplifier"](0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    version, header, payload = raw.split(b"\n", 2)
    assert int(version) == FORMAT_VERSION
    meta = json.loads(header)
    offset = 0
    for entry, p in zip(meta["params"], model.parameters()):
        assert entry["name"] == p.name and tuple(entry["shape"]) == p.data.shape
        assert entry["offset"] == offset and entry["nbytes"] == p.data.size * 8
        chunk = np.frombuffer(payload[offset:offset + entry["nbytes"]], dtype="<f8")
        np.testing.assert_array_equal(chunk, p.data.ravel())
        offset += entry["nbytes"]
    assert offset == len(payload) == meta["payload_bytes"]


def test_truncated_checkpoint_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(MODELS["linear"](0), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(MODELS["linear"](0), path)
    raw = path.read_bytes()
    path.write_bytes(b"99" + raw[raw.index(b"\n"):])
    with pytest.raises(CheckpointError, match="format 99"):
        load_checkpoint(path)


def test_corrupt_manifest_rejected(tmp_path):
    import json
    path = tmp_path / "m.ckpt"
    save_checkpoint(MODELS["linear"](0), path)
    version, header, payload = path.read_bytes().split(b"\n", 2)
    meta = json.loads(header)
    meta["params"][1]["offset"] += 8
    path.write_bytes(version + b"\n" + json.dumps(meta).encode() + b"\n" + payload)
    with pytest.raises(CheckpointError, match="inconsistent"):
        load_checkpoint(path)


def test_shape_mismatch_against_config_rejected(tmp_path):
    model = MODELS["linear"](0)
    ckpt = Checkpoint.from_model(model)
    ckpt.init_args = dict(ckpt.init_args, horizon=5)
    ckpt.save(tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(tmp_path / "m.ckpt")
