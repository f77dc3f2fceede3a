import json
import os
import shutil

import numpy as np
import pytest
import yaml

from entrood.cli import main
from entrood.data_io import write_idx
from entrood.errors import ConfigError, DataError, ExperimentError, NumericalError
from entrood.experiment import (ExperimentConfig, config_from_dict, emit_sweep_plots, expand_sweep, load_config,
                                load_report, parse_config, run_experiment, write_report)


class Parameters:
    output_path = os.path.join("tests/experiment_test")
    flagship_path = os.path.join("configs/flagship.yaml")

    minimal = """
seed: 1
in_dist: {kind: isotropic-gaussian, dim: 2}
model: {kind: exact}
"""

    small = dict(
        id="small",
        seed=5,
        in_dist=dict(kind="isotropic-gaussian", dim=2, variance=16.0),
        out_dist=dict(kind="isotropic-gaussian", dim=2),
        model=dict(kind="gaussian-mle"),
        reference=dict(kind="exact", distribution=dict(kind="isotropic-gaussian", dim=2, variance=4.0)),
        detectors=[dict(name="likelihood"), dict(name="likelihood-ratio"),
                   dict(name="typicality", batch_size=16, n_bootstrap=200)],
        samples=dict(n_train=2000, n_eval=1000, n_pairs=5000, n_ledger=5000),
        outputs=dict(plots=True),
    )

    output_files = ["report.json", "timing.json", "metrics.csv", "ledgers.csv", "contrast.csv",
                    "scores_loglik_in.csv", "scores_likelihood_out.csv", "scores_likelihood-ratio_in.csv",
                    "scores_typicality_out.csv", "loglik_histograms.svg", "bound_vs_dim.svg", "roc_curves.svg"]

    truth_path = os.path.join("tests/ground_truth/flagship")
    golden_files = ["report.json", "metrics.csv", "ledgers.csv", "contrast.csv", "scores_likelihood-ratio_out.csv",
                    "loglik_histograms.svg", "bound_vs_dim.svg", "roc_curves.svg"]

    mnist_path = os.environ.get("ENTROOD_MNIST_DIR", "tests/data")
    fashion_path = os.environ.get("ENTROOD_FASHION_DIR", os.path.join(mnist_path, "fashion"))


def out(*names):
    return os.path.join(Parameters.output_path, *names)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def idx_file(folder, name):
    for candidate in (name + ".gz", name):
        if os.path.exists(os.path.join(folder, candidate)):
            return os.path.join(folder, candidate)
    return None


def real_images_available():
    return all(idx_file(folder, name) for folder, name in ((Parameters.fashion_path, "train-images-idx3-ubyte"),
                                                           (Parameters.fashion_path, "t10k-images-idx3-ubyte"),
                                                           (Parameters.mnist_path, "t10k-images-idx3-ubyte")))


def write_config(name, d):
    path = out(name)
    with open(path, "w") as f:
        yaml.safe_dump(d, f)
    return path


class TestConfig:

    def test_minimal(self):

        cfg = parse_config(Parameters.minimal)
        assert cfg.seed == 1
        assert cfg.id == "experiment"
        assert cfg.out_dist == cfg.in_dist
        assert [d["name"] for d in cfg.detectors] == ["likelihood"]
        assert cfg.samples["n_pairs"] == 100000
        assert cfg.outputs["formats"] == ["json", "csv"]
        assert not cfg.is_images

    def test_echo(self):

        cfg = load_config(Parameters.flagship_path)
        assert config_from_dict(cfg.to_dict()) == cfg
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.reference["distribution"]["variance"] == 4.0

    def test_missing_seed(self):

        with pytest.raises(ConfigError) as err:
            parse_config("in_dist: {kind: isotropic-gaussian, dim: 2}\nmodel: {kind: exact}\n")
        assert "seed required" in err.value.errors
        assert err.value.exit_code == 2

    def test_collects_errors(self):

        text = """
seed: -3
in_dist: {kind: isotropic-gaussian, dim: 2}
out_dist: {kind: isotropic-gaussian, dim: 3}
model: {kind: compressor-proxy}
detectors: [{name: likelihood-ratio}, {name: energy}]
samples: {n_eval: 0}
colour: blue
"""
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        errors = "\n".join(err.value.errors)
        assert "seed:" in errors
        assert "out_dist: dimension" in errors
        assert "only be used as reference" in errors
        assert "needs a reference model" in errors
        assert "unknown detector 'energy'" in errors
        assert "samples.n_eval" in errors
        assert "colour: unknown field" in errors
        assert len(err.value.errors) >= 7

    def test_invalid_yaml(self):

        with pytest.raises(ConfigError, match="invalid YAML"):
            parse_config("seed: [1, 2\n")
        with pytest.raises(ConfigError):
            parse_config("- just\n- a list\n")
        with pytest.raises(ConfigError):
            load_config(out("missing.yaml"))

    def test_models(self):

        d = yaml.safe_load(Parameters.minimal)
        d["model"] = dict(kind="gmm-em", k=0)
        with pytest.raises(ConfigError, match="positive integer"):
            config_from_dict(d)
        d["model"] = dict(kind="histogram")
        with pytest.raises(ConfigError, match="bins_per_dim"):
            config_from_dict(d)
        d["model"] = dict(kind="gmm-em", k=2, tol=1e-6)
        assert config_from_dict(d).model["k"] == 2

    def test_images(self):

        d = dict(seed=1, model=dict(kind="exact"),
                 in_dist=dict(kind="images", train=dict(path="a"), test=dict(path="b", dims=[28])))
        with pytest.raises(ConfigError) as err:
            config_from_dict(d)
        errors = "\n".join(err.value.errors)
        assert "exact models need a known data law" in errors
        assert "dims: expected [rows, cols]" in errors

    def test_sweep_dim(self):

        cfg = load_config(Parameters.flagship_path)
        configs = expand_sweep(cfg, "dim", [2, 4])
        assert [c.id for c in configs] == ["flagship-dim2", "flagship-dim4"]
        assert configs[1].in_dist["dim"] == 4
        assert configs[1].out_dist["dim"] == 4
        assert configs[1].reference["distribution"]["dim"] == 4
        assert cfg.in_dist["dim"] == 16

    def test_sweep_path(self):

        cfg = load_config(Parameters.flagship_path)
        configs = expand_sweep(cfg, "out_dist.variance", [0.5, 2.0])
        assert [c.out_dist["variance"] for c in configs] == [0.5, 2.0]
        assert configs[0].id == "flagship-variance0.5"

        with pytest.raises(ConfigError):
            expand_sweep(cfg, "seed.value", [1])
        with pytest.raises(ConfigError):
            expand_sweep(cfg, "samples.n_eval", [0])


class TestExperiment:
    BUILD_TRUTH = False

    @classmethod
    def setup_method(cls):

        if os.path.exists(Parameters.output_path):
            shutil.rmtree(Parameters.output_path)
        os.mkdir(Parameters.output_path)

    @classmethod
    def teardown_method(cls):

        shutil.rmtree(Parameters.output_path)

    def test_flagship(self):

        cfg = load_config(Parameters.flagship_path)
        report = run_experiment(cfg, out_dir=out("flagship"))

        assert report.dim == 16
        assert report.ledger_out.avg_log_likelihood.value > report.ledger_in.avg_log_likelihood.value
        assert report.contrast.chebyshev_bound == pytest.approx(0.857, abs=0.01)
        assert report.contrast_exact["chebyshev_bound"] == pytest.approx(0.857222, abs=1e-6)
        assert report.detectors["likelihood-ratio"].auroc > report.detectors["likelihood"].auroc
        assert report.detectors["likelihood-ratio"].auroc >= 0.6
        assert report.detectors["likelihood"].auroc <= 0.4
        assert report.typicality["batch_size"] == 64
        assert abs(report.ledger_in.residual) <= 4 * report.ledger_in.avg_log_likelihood.std_error

        with open(out("flagship", "report.json")) as f:
            written = json.load(f)
        assert written["config"] == cfg.to_dict()
        assert written["ledger_in"]["kl_term"]["method"] == "analytic"
        assert "wall_clock_s" not in written

    def test_outputs(self):

        cfg = config_from_dict(Parameters.small)
        run_experiment(cfg, out_dir=out("a"))
        for name in Parameters.output_files:
            assert os.path.exists(out("a", name)), name

        with open(out("a", "metrics.csv")) as f:
            lines = f.read().splitlines()
        assert lines[0] == "auroc,fpr_at_95_tpr,n_in,n_out,detector_id"
        assert [line.split(",")[-1] for line in lines[1:]] == ["likelihood", "likelihood-ratio", "typicality"]

    def test_reproducible(self):

        cfg = config_from_dict(Parameters.small)
        run_experiment(cfg, out_dir=out("a"))
        run_experiment(cfg, out_dir=out("b"), workers=4)
        for name in Parameters.output_files:
            if name == "timing.json":
                continue
            assert read_bytes(out("a", name)) == read_bytes(out("b", name)), name

    def test_flagship_reruns(self):

        cfg = load_config(Parameters.flagship_path)
        run_experiment(cfg, out_dir=out("a"))

        with open(out("a", "report.json")) as f:
            written = json.load(f)
        for side in ("ledger_in", "ledger_out"):
            ledger = written[side]
            assert ledger["avg_log_likelihood"]["value"] == pytest.approx(
                -(ledger["kl_term"]["value"] + ledger["entropy_term"]["value"]) + ledger["residual"], abs=1e-12)

        # the echoed config alone reproduces every output
        run_experiment(config_from_dict(written["config"]), out_dir=out("b"), workers=4)
        for name in Parameters.golden_files:
            assert read_bytes(out("a", name)) == read_bytes(out("b", name)), name

        if self.BUILD_TRUTH:
            os.makedirs(Parameters.truth_path, exist_ok=True)
            for name in Parameters.golden_files:
                shutil.copyfile(out("a", name), os.path.join(Parameters.truth_path, name))
        for name in Parameters.golden_files:
            golden = os.path.join(Parameters.truth_path, name)
            if os.path.exists(golden):
                assert read_bytes(out("a", name)) == read_bytes(golden), name

    @pytest.mark.skipif(not real_images_available(), reason="MNIST and Fashion-MNIST IDX files not found")
    def test_fashion_vs_mnist_direction(self):

        d = yaml.safe_load(read_bytes("configs/fashion_vs_mnist.yaml"))
        d["in_dist"]["train"]["path"] = idx_file(Parameters.fashion_path, "train-images-idx3-ubyte")
        d["in_dist"]["test"]["path"] = idx_file(Parameters.fashion_path, "t10k-images-idx3-ubyte")
        d["out_dist"]["test"]["path"] = idx_file(Parameters.mnist_path, "t10k-images-idx3-ubyte")
        d.update(reference=None, detectors=[dict(name="likelihood")])

        report = run_experiment(config_from_dict(d), write=False)
        assert report.bits_per_dim["out"] < report.bits_per_dim["in"]
        assert report.detectors["likelihood"].auroc < 0.5

    def test_formats(self):

        cfg = config_from_dict(dict(Parameters.small, outputs=dict(plots=False)))
        run_experiment(cfg, out_dir=out("json"), formats=["json"])
        assert os.path.exists(out("json", "report.json"))
        assert not os.path.exists(out("json", "metrics.csv"))
        assert not os.path.exists(out("json", "roc_curves.svg"))

        report = run_experiment(cfg, write=False)
        assert report.scores["loglik"][0].scores.shape == (1000,)
        assert not os.path.exists(cfg.outputs["dir"])

    def test_load_report(self):

        cfg = config_from_dict(Parameters.small)
        report = run_experiment(cfg, out_dir=out("a"))
        loaded = load_report(out("a"))
        assert loaded.config == report.config
        assert loaded.contrast == report.contrast
        assert loaded.ledger_out == report.ledger_out
        for name, metrics in report.detectors.items():
            assert loaded.detectors[name].auroc == pytest.approx(metrics.auroc, abs=1e-6)
        assert len(loaded.scores["typicality"][0]) == 1000 // 16

    def test_unwritable_out_dir(self):

        cfg = config_from_dict(dict(Parameters.small, outputs=dict(plots=False)))
        report = run_experiment(cfg, write=False)
        with open(out("blocker"), "w") as f:
            f.write("not a directory")

        with pytest.raises(DataError):
            write_report(report, out("blocker", "report"))
        with pytest.raises(ExperimentError) as info:
            run_experiment(cfg, out_dir=out("blocker", "report"))
        assert info.value.stage == "outputs"
        assert info.value.exit_code == 3

    def test_sweep_plot(self):

        cfg = config_from_dict(dict(Parameters.small, outputs=dict(plots=False)))
        reports = [run_experiment(c, write=False) for c in expand_sweep(cfg, "dim", [4, 2])]
        path = emit_sweep_plots(reports, out("sweep"))
        assert path.endswith("bound_vs_dim.svg")
        assert read_bytes(path) == read_bytes(emit_sweep_plots(reports[::-1], out("sweep2")))

    def test_stage_errors(self):

        d = dict(Parameters.small, model=dict(kind="histogram", bins_per_dim=4),
                 in_dist=dict(kind="isotropic-gaussian", dim=4), out_dist=dict(kind="isotropic-gaussian", dim=4),
                 reference=None, detectors=[dict(name="likelihood")])
        with pytest.raises(ExperimentError) as err:
            run_experiment(config_from_dict(d), write=False)
        assert err.value.stage == "fit"
        assert err.value.exit_code == 3

        assert ExperimentError("fit", NumericalError("collapsed")).exit_code == 4

    def test_images(self):

        rng = np.random.default_rng(0)
        dark = rng.integers(0, 64, size=(60, 16))
        light = rng.integers(128, 256, size=(30, 16))
        for name, images in (("train", dark[:40]), ("test", dark[40:]), ("out", light)):
            write_idx(images, (4, 4), out("{}-idx3-ubyte.gz".format(name)))

        d = dict(
            seed=2,
            in_dist=dict(kind="images", train=dict(path=out("train-idx3-ubyte.gz"), dims=[4, 4]),
                         test=dict(path=out("test-idx3-ubyte.gz"), dims=[4, 4])),
            out_dist=dict(kind="images", test=dict(path=out("out-idx3-ubyte.gz"), dims=[4, 4])),
            model=dict(kind="pixel-categorical", alpha=1.0),
            reference=dict(kind="compressor-proxy", codec="png", image_shape=[4, 4]),
            detectors=[dict(name="likelihood"), dict(name="likelihood-ratio"), dict(name="typicality", batch_size=4)],
            samples=dict(n_train=40, n_eval=20),
        )
        report = run_experiment(config_from_dict(d), out_dir=out("images"))
        assert report.dim == 16
        assert report.ledger_in.kl_term is None
        assert report.bits_per_dim["out"] > report.bits_per_dim["in"]
        assert report.detectors["likelihood"].auroc >= 0.99
        assert report.contrast.n_pairs == 20
        assert os.path.exists(out("images", "report.json"))


class TestCLI:

    @classmethod
    def setup_method(cls):

        if os.path.exists(Parameters.output_path):
            shutil.rmtree(Parameters.output_path)
        os.mkdir(Parameters.output_path)

    @classmethod
    def teardown_method(cls):

        shutil.rmtree(Parameters.output_path)

    def test_validate(self, capsys):

        assert main(["validate", Parameters.flagship_path]) == 0
        assert "flagship: valid" in capsys.readouterr().out

        path = write_config("bad.yaml", dict(in_dist=dict(kind="isotropic-gaussian", dim=2), model=dict(kind="exact")))
        assert main(["validate", path]) == 2
        assert "seed required" in capsys.readouterr().err

    def test_run(self, capsys):

        path = write_config("small.yaml", Parameters.small)
        assert main(["run", path, "--out-dir", out("run"), "--format", "csv", "--workers", "2"]) == 0
        assert "likelihood-ratio" in capsys.readouterr().out
        assert os.path.exists(out("run", "metrics.csv"))
        assert not os.path.exists(out("run", "report.json"))

    def test_run_exit_codes(self):

        assert main(["run", out("missing.yaml")]) == 2

        d = dict(seed=1, model=dict(kind="pixel-categorical"),
                 in_dist=dict(kind="images", train=dict(path=out("none.gz")), test=dict(path=out("none.gz"))))
        assert main(["run", write_config("images.yaml", d), "--out-dir", out("images")]) == 3

    def test_sweep_and_plot(self):

        path = write_config("small.yaml", dict(Parameters.small, outputs=dict(plots=False)))
        assert main(["sweep", path, "--param", "dim=2,4", "--out-dir", out("sweep")]) == 0
        assert os.path.exists(out("sweep", "small-dim2", "report.json"))
        assert os.path.exists(out("sweep", "small-dim4", "report.json"))
        assert os.path.exists(out("sweep", "bound_vs_dim.svg"))

        assert main(["plot", out("sweep", "small-dim2")]) == 0
        assert os.path.exists(out("sweep", "small-dim2", "roc_curves.svg"))
        with open(out("blocker"), "w") as f:
            f.write("not a directory")
        assert main(["plot", out("sweep", "small-dim2"), "--out-dir", out("blocker", "plots")]) == 3

        assert main(["sweep", path, "--param", "dim"]) == 2
