"""Configuration, data preparation, training loop, checkpoints, reports and the CLI."""
import numpy as np
import pytest

from eventsimplex.events import generate_3g, generate_multig, write_events
from eventsimplex.harness.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from eventsimplex.harness.cli import main, parse_grid
from eventsimplex.harness.config import TrainConfig
from eventsimplex.harness.data import make_windows, prepare
from eventsimplex.harness.demo import inter_class_region, make_gaussians, mean_entropy, train_demo
from eventsimplex.harness.gradchecks import TOLERANCE, run_gradchecks
from eventsimplex.harness.report import emit_plot_data, evaluate, plot_columns, read_table
from eventsimplex.harness.train import EarlyStopping, grid_search, train

TINY = dict(hidden=4, epochs=2, batch=32, window=8)


@pytest.fixture(scope="module")
def data3g():
    return prepare([generate_3g(150, seed=1)])


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(model="wgp-ln", lr=0.1 + 0.2, n_points=7, quad_nodes=None)
        cfg.save(tmp_path / "c.txt")
        assert TrainConfig.load(tmp_path / "c.txt") == cfg

    @pytest.mark.parametrize("bad", [dict(model="lstm"), dict(lr=0.0), dict(patience=0), dict(l2=-1.0)])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            TrainConfig(**bad)

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            TrainConfig.from_kv({"hiden": "3"})

    def test_grid_parsing(self):
        assert parse_grid("hidden=8,16; lr=0.01") == {"hidden": [8, 16], "lr": [0.01]}
        with pytest.raises(ValueError):
            parse_grid("depth=2")


class TestData:
    def test_split_sizes_and_transform_range(self, data3g):
        assert [len(p[0].classes) for p in (data3g.train, data3g.validation, data3g.test)] == [90, 30, 30]
        g = data3g.train[0].gaps[1:]
        assert g.min() == pytest.approx(0.0, abs=1e-9) and g.max() == pytest.approx(1.0, abs=1e-9)

    def test_windows(self, data3g):
        src = make_windows(data3g.train, 8)
        assert len(src) == 89
        # the third transition sees two real history events, left-padded
        np.testing.assert_array_equal(src.mask[1], [0] * 6 + [1, 1])
        assert src.target_class[1] == data3g.train[0].classes[2]
        np.testing.assert_array_equal(src.mask[50], np.ones(8))


class TestEarlyStopping:
    def test_patience_arithmetic(self):
        # best at epoch 3 with patience 5 -> stop after epoch 8
        stopper = EarlyStopping(5)
        values = [5.0, 4.0, 3.0, 3.0, 3.5, 4.0, 3.2, 3.1, 2.0]
        stopped_at = next(e for e, v in enumerate(values, start=1) if stopper.update(e, v))
        assert stopped_at == 8 and stopper.best_epoch == 3

    def test_training_stops_and_restores_best(self, data3g):
        result = train(TrainConfig(**{**TINY, "epochs": 30, "patience": 1, "lr": 0.3}), data3g)
        assert result.epochs_run < 30
        assert result.best_val_loss == min(r.val_loss for r in result.history)


class TestTraining:
    @pytest.mark.parametrize("model", ["wgp-ln", "fd-dir", "fd-dir-pp"])
    def test_deterministic(self, data3g, model):
        cfg = TrainConfig(model=model, **TINY)
        a, b = train(cfg, data3g), train(cfg, data3g)
        assert [r.val_loss for r in a.history] == [r.val_loss for r in b.history]
        for k in a.checkpoint.params:
            assert np.array_equal(a.checkpoint.params[k], b.checkpoint.params[k])

    def test_loss_decreases(self, data3g):
        result = train(TrainConfig(hidden=8, epochs=6, batch=8, lr=1e-2, window=8, patience=10), data3g)
        assert result.history[-1].train_loss < result.history[0].train_loss

    def test_sweep_runs_every_cell_and_seed(self, data3g):
        result = grid_search(TrainConfig(**{**TINY, "epochs": 1}), {"hidden": [2, 4], "lr": [1e-3, 1e-2]},
                             data3g, seeds=2)
        assert len(result.rows) == 8
        assert {r["seed"] for r in result.rows} == {0, 1}
        best_cell = max(result.summary(), key=lambda s: s["mean_val_accuracy"])["cell"]
        assert tuple(result.selected.items()) == best_cell


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path, data3g):
        ckpt = train(TrainConfig(model="wgp-ln", **TINY), data3g).checkpoint
        save_checkpoint(ckpt, tmp_path / "m.ckpt")
        back = load_checkpoint(tmp_path / "m.ckpt")
        assert back.config == ckpt.config and back.n_classes == 3
        assert back.transform == ckpt.transform and back.meta == ckpt.meta
        for k, v in ckpt.params.items():
            assert np.array_equal(back.params[k], v)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ckpt").write_bytes(b"NOTACKPT....")
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(tmp_path / "x.ckpt")


@pytest.fixture(scope="module")
def ckpt(data3g):
    return train(TrainConfig(**TINY), data3g).checkpoint


class TestReports:
    def test_evaluate_ranges(self, ckpt):
        report = evaluate(ckpt, [generate_3g(150, seed=1)])
        assert 0 <= report.accuracy <= 1 and 0 <= report.time_error <= 1.2 and report.n_events == 29

    def test_class_mismatch(self, ckpt):
        seq = generate_multig(50, seed=0)
        bigger = type(seq)("x", np.r_[seq.classes, 4], np.r_[seq.times, seq.times[-1] + 1])
        with pytest.raises(ValueError, match="classes"):
            evaluate(ckpt, [bigger])

    @pytest.mark.parametrize("model", ["wgp-ln", "fd-dir"])
    def test_plot_rows(self, data3g, model):
        ckpt = ckpt_of(data3g, model)
        grid = np.linspace(0, 1.5, 31)
        table = emit_plot_data(ckpt, [0, 2, 1], [0.0, 0.3, 0.5], grid, samples=200)
        assert table.shape == (31, len(plot_columns(model, 3)))
        np.testing.assert_allclose(table[:, 1:4].sum(1), 1.0, atol=1e-12)
        np.testing.assert_allclose(table[:, 4:7].sum(1), 1.0, atol=1e-12)


def ckpt_of(data, model):
    return train(TrainConfig(model=model, **TINY), data).checkpoint


class TestGradchecks:
    def test_all_below_tolerance(self):
        errors = run_gradchecks(0)
        assert set(errors) >= {"uce_dirichlet", "uce_taylor", "pp_loss", "gru", "neighborhood"}
        assert max(errors.values()) < TOLERANCE


class TestDemo:
    def test_data_and_training(self):
        x, y = make_gaussians("overlapping", n=300, seed=0)
        assert x.shape == (300, 2) and set(np.unique(y)) == {0, 1, 2}
        net = train_demo(x, y, "uce", 1e-2, seed=0, epochs=5)
        h = mean_entropy(net, inter_class_region(20))
        assert 0 <= h <= np.log(3)


class TestCLI:
    def test_generate(self, tmp_path, capsys):
        assert main(["generate", "3g", "--n", "1000", "--seed", "3", "--out", str(tmp_path / "e.csv")]) == 0
        assert len((tmp_path / "e.csv").read_text().splitlines()) == 1000

    def test_generate_graph_writes_spec(self, tmp_path):
        assert main(["generate", "graph", "--n", "50", "--out", str(tmp_path / "g.csv")]) == 0
        assert (tmp_path / "g.graph.txt").exists()

    def test_pipeline(self, tmp_path, capsys):
        events = tmp_path / "e.csv"
        write_events(events, [generate_3g(150, seed=2)])
        ckpt, log = tmp_path / "m.ckpt", tmp_path / "train.log"
        assert main(["train", "--data", str(events), "--out", str(ckpt), "--log", str(log), "--hidden", "4",
                     "--epochs", "2", "--window", "8"]) == 0
        assert log.read_text().startswith("epoch=1 train_loss=")
        assert main(["evaluate", "--checkpoint", str(ckpt), "--data", str(events),
                     "--out", str(tmp_path / "r.txt")]) == 0
        assert (tmp_path / "r.csv").exists()
        assert main(["detect-anomalies", "--checkpoint", str(ckpt), "--data", str(events),
                     "--out", str(tmp_path / "a.txt"), "--samples", "50"]) == 0
        assert (tmp_path / "a.roc.png").exists()
        assert main(["plot-data", "--checkpoint", str(ckpt), "--data", str(events), "--out", str(tmp_path / "p.csv"),
                     "--prefix", "10", "--points", "31", "--simplex-at", "0.9", "--resolution", "6"]) == 0
        cols, table = read_table(tmp_path / "p.csv")
        assert cols == plot_columns("fd-dir", 3) and table.shape == (31, 10)
        assert (tmp_path / "p.png").exists()
        simplex = sorted(p.name for p in tmp_path.glob("p*simplex*"))
        assert simplex == ["p_simplex_t0_900.csv", "p_simplex_t0_900.png"]

    def test_config_file_and_override(self, tmp_path):
        events = tmp_path / "e.csv"
        write_events(events, [generate_3g(100, seed=2)])
        TrainConfig(hidden=3, epochs=1, window=4, lr=0.5).save(tmp_path / "c.txt")
        assert main(["train", "--data", str(events), "--config", str(tmp_path / "c.txt"), "--lr", "0.01",
                     "--out", str(tmp_path / "m.ckpt")]) == 0
        cfg = load_checkpoint(tmp_path / "m.ckpt").config
        assert cfg.hidden == 3 and cfg.lr == 0.01

    def test_errors_exit_nonzero(self, tmp_path, capsys):
        assert main(["evaluate", "--checkpoint", str(tmp_path / "missing"), "--data", "x"]) == 1
        assert "error" in capsys.readouterr().err
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 2

    def test_gradcheck_command(self, capsys):
        assert main(["gradcheck"]) == 0
        assert "FAIL" not in capsys.readouterr().out
