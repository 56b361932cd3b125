import math

import numpy as np
import pytest

from oamdetect.cli import main
from oamdetect.dataset import LabelScheme, SampleSet
from oamdetect.errors import DomainError, ParseError, StageError
from oamdetect.experiment import (
    ExperimentConfig,
    load_config,
    parse_config_text,
    phase_field,
    run_experiment,
    sweep,
)
from oamdetect.metrics import confusion_matrix, error_histogram, evaluate, linear_regression

SMALL = dict(train_d_count=3, train_alpha_count=6, test_per_class=8, bpnn_max_epochs=15)


def labelled(classes, n_classes):
    cls = np.asarray(classes)
    n = len(cls)
    scheme = LabelScheme.single_mode(range(n_classes))
    return SampleSet(np.arange(n, dtype=float)[:, None], cls.astype(float), cls,
                     np.full(n, 300.0), np.zeros(n), scheme)


class Constant:
    name = "const"

    def __init__(self, c):
        self.c = c

    def predict(self, x):
        return np.full(len(x), self.c)


class Oracle:
    name = "oracle"

    def __init__(self, classes):
        self.classes = np.asarray(classes)

    def predict(self, x):
        return self.classes[x[:, 0].astype(int)]


class TestMetrics:
    def test_perfect_predictor(self):
        cls = [0, 1, 2, 2, 1, 0, 2]
        rep = evaluate(Oracle(cls), labelled(cls, 3))
        assert rep.accuracy == 1.0
        assert np.array_equal(rep.confusion, np.diag([2, 2, 3]))
        assert np.all(rep.recall == 1.0)

    def test_constant_predictor(self):
        cls = [0, 0, 1, 2, 2, 2]
        rep = evaluate(Constant(2), labelled(cls, 3))
        assert rep.accuracy == pytest.approx(0.5)
        assert rep.confusion[:, 2].tolist() == [2, 1, 3]
        assert rep.recall.tolist() == [0.0, 0.0, 1.0]

    def test_confusion_identities(self):
        rng = np.random.default_rng(0)
        t, p = rng.integers(0, 4, 500), rng.integers(0, 4, 500)
        cm = confusion_matrix(t, p, 4)
        assert cm.sum() == 500
        assert cm.sum(axis=1).tolist() == np.bincount(t, minlength=4).tolist()
        assert cm.sum(axis=0).tolist() == np.bincount(p, minlength=4).tolist()
        assert np.trace(cm) == int(np.sum(t == p))

    def test_regression_exact_line(self):
        x = np.linspace(1, 4, 20)
        fit = linear_regression(x, 2 * x - 1)
        assert fit["slope"] == pytest.approx(2.0)
        assert fit["intercept"] == pytest.approx(-1.0)
        assert fit["r2"] == pytest.approx(1.0)

    def test_histogram_clips_into_end_bins(self):
        edges, counts = error_histogram([-100.0, 0.0, 100.0], 6.0, bins=3)
        assert counts.tolist() == [1, 1, 1]
        assert edges[0] == -6.0 and edges[-1] == 6.0

    def test_report_dict_has_no_timing(self):
        rep = evaluate(Constant(0), labelled([0, 1], 2))
        assert "test_time" not in rep.to_dict()

    def test_empty_test_set(self):
        with pytest.raises(DomainError):
            evaluate(Constant(0), labelled([], 2))


class TestConfig:
    def test_parse_text(self):
        pairs = parse_config_text("# comment\nscenario = multi-mode\nr_rx = 2.5  # inline\nembed = true\n")
        assert pairs == {"scenario": "multi-mode", "r_rx": 2.5, "embed": True}

    def test_bad_line_reports_position(self):
        with pytest.raises(ParseError, match="cfg.txt:2:"):
            parse_config_text("seed = 1\nnonsense\n", "cfg.txt")

    def test_load_applies_scenario_defaults(self, tmp_path):
        (tmp_path / "c.txt").write_text("scenario = multi-mode\nseed = 4\n")
        cfg = load_config(str(tmp_path / "c.txt"), {"knn_k": "3"})
        assert cfg.n_tx == 6 and cfg.seed == 4 and cfg.knn_k == 3

    @pytest.mark.parametrize("pairs", [{"bogus": 1}, {"seed": "x"}, {"embed": "3"}])
    def test_rejects_bad_values(self, pairs):
        with pytest.raises(DomainError):
            load_config(None, pairs)

    def test_grid_counts(self):
        cfg = ExperimentConfig()
        assert len(cfg.train_distances()) == 25 and cfg.train_distances()[-1] == 342.0
        assert len(cfg.train_alphas()) == 100


class TestExperiment:
    def test_reports_byte_identical_across_runs(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            cfg = ExperimentConfig.for_scenario("multi-mode", output_dir=str(tmp_path / name), **SMALL)
            run_experiment(cfg)
            outs.append(tmp_path / name)
        files = sorted(p.relative_to(outs[0]) for p in (outs[0] / "reports").iterdir())
        assert files
        for rel in files:
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()

    def test_failure_is_stage_tagged(self, tmp_path):
        cfg = ExperimentConfig(output_dir=str(tmp_path), train_d_start=1.0, **SMALL)
        with pytest.raises(StageError, match=r"^\[dataset\]"):
            run_experiment(cfg)

    def test_sweep_ordering_and_single_point(self):
        cfg = ExperimentConfig.for_scenario("single-mode", classifiers=["knn"], **SMALL)
        rows = sweep(cfg, "alpha", [10.0, 2.0, 5.0], n_per_class=3)
        assert [r["value"] for r in rows] == [2.0, 5.0, 10.0]
        one = sweep(cfg, "distance", [400.0], n_per_class=3)
        assert len(one) == 1 and 0.0 <= one[0]["accuracy"] <= 1.0

    def test_sweep_rejects_bad_axis(self):
        with pytest.raises(DomainError):
            sweep(ExperimentConfig(**SMALL), "frequency", [1.0])

    def test_phase_field_shape_and_range(self):
        rows = phase_field(ExperimentConfig(), [2], 5.0, points=7)
        assert rows.shape == (49, 4)
        assert np.all(np.abs(rows[:, 2]) <= math.pi) and np.all(rows[:, 3] > 0)


class TestCli:
    def test_experiment_smoke(self, tmp_path, capsys):
        args = ["experiment", "--out", str(tmp_path / "r"), "--seed", "1", "--set"]
        args += [f"{k}={v}" for k, v in SMALL.items()]
        assert main(args) == 0
        assert (tmp_path / "r" / "reports" / "summary.json").exists()
        assert "KNN" in capsys.readouterr().out

    def test_train_then_eval(self, tmp_path):
        sets = ["--set"] + [f"{k}={v}" for k, v in SMALL.items()]
        model = str(tmp_path / "svm.json")
        assert main(["train", "svm", "--model", model, *sets]) == 0
        assert main(["eval", model, "--report", str(tmp_path / "rep.json"), *sets]) == 0
        assert (tmp_path / "rep.json").exists()

    def test_bad_key_exits_nonzero(self, capsys):
        assert main(["experiment", "--set", "bogus=1"]) == 1
        assert "[config]" in capsys.readouterr().err

    def test_missing_model_exits_nonzero(self, tmp_path, capsys):
        assert main(["eval", str(tmp_path / "none.json")]) == 1
        assert "[load]" in capsys.readouterr().err
