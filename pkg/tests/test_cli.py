# standard library
from json import load
from pathlib import Path


# dependencies
import numpy as np
import pandas as pd
from plainpml.cli import main
from plainpml.dataset import load_dataset, make_clean, save_dataset
from plainpml.experiment import ExperimentConfig
from plainpml.network import load_params
from pytest import fixture, mark, raises
from tomlkit import parse


# test data
fast = ["--folds", "2", "--epochs", "2", "--steps", "5", "--k", "5", "--batch-size", "8"]
errors = [
    # (extra arguments of cv, expected exit code)
    (["--k", "0"], 1),
    (["--threshold", "1.5"], 1),
    (["--eta", "10", "--gamma", "5", "--steps", "100", "--no-normalize"], 3),
]


@fixture
def clean(tmp_path: Path) -> Path:
    path = tmp_path / "clean.txt"
    save_dataset(make_clean(40, 6, 5, seed=0), path)
    return path


def read_results(path: Path) -> dict:
    with open(path / "results.json") as file:
        return load(file)


# test functions
def test_synth(clean: Path, tmp_path: Path) -> None:
    args = ["synth", str(clean), str(tmp_path / "a.txt"), "--r", "1", "--seed", "0"]
    assert main(args) == 0

    args[2] = str(tmp_path / "b.txt")
    assert main(args) == 0

    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    corrupted = load_dataset(tmp_path / "a.txt")
    assert corrupted.truth is not None
    gained = corrupted.candidates.sum(axis=1) - corrupted.truth.sum(axis=1)
    assert (gained[corrupted.truth.sum(axis=1) < 5] == 1).all()


def test_cv(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    assert main(["cv", str(clean), "--out", str(out), "--r", "1", "--dump-graphs", *fast]) == 0

    results = read_results(out)
    run = results["runs"]["plain"]
    assert results["truncated"] is False
    assert len(results["fold_hash"]) == 1
    assert len(run["folds"]) == 2
    expected = np.mean([fold["ranking_loss"] for fold in run["folds"]])
    assert abs(run["mean"]["ranking_loss"] - expected) < 1e-12
    assert (out / "curves.csv").exists()
    assert (out / "results.nc").exists()
    assert (out / "graphs" / "instance_graph_0.txt").exists()

    echo = ExperimentConfig.from_dict(results["config"])
    assert echo.k == 5
    assert echo.r == 1


def test_cv_config_file(clean: Path, tmp_path: Path) -> None:
    config = tmp_path / "run.toml"
    config.write_text(f'dataset = "{clean}"\nk = 20\nepochs = 1\nfolds = 2\nsteps = 2\n')
    out = tmp_path / "out"

    assert main(["cv", "--config", str(config), "--out", str(out), "--k", "5"]) == 0
    assert read_results(out)["config"]["k"] == 5
    assert read_results(out)["config"]["epochs"] == 1


def test_ablate(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    assert main(["ablate", str(clean), "--out", str(out), "--seeds", "0,1", *fast]) == 0

    table = pd.read_csv(out / "ablation.csv")
    assert table["run"].tolist() == ["plain", "dnn", "no_label_sim", "no_instance_sim"]
    assert {"average_precision_mean", "ranking_loss_std"} <= set(table.columns)
    assert len(read_results(out)["fold_hash"]) == 2
    assert len(read_results(out)["runs"]) == 8


def test_losses(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    assert main(["losses", str(clean), "--out", str(out), *fast]) == 0

    table = pd.read_csv(out / "losses.csv")
    assert table["run"].tolist() == ["mse", "mae", "bce", "pmse"]
    assert (table["epochs_to_95"] >= 1).all()


def test_losses_zero_epochs(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    assert main(["losses", str(clean), "--out", str(out), "--folds", "2", "--epochs", "0"]) == 0

    table = pd.read_csv(out / "losses.csv")
    assert table["run"].tolist() == ["mse", "mae", "bce", "pmse"]
    assert table["epochs_to_95"].isna().all()


def test_cv_objective_curve(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    args = ["cv", str(clean), "--out", str(out), "--folds", "2", "--epochs", "10", "--k", "5"]
    extra = ["--loss", "pmse", "--no-normalize", "--full-batch", "--weight-decay", "0.0"]
    assert main([*args, *extra, "--steps", "5", "--track-objective"]) == 0

    curves = pd.read_csv(out / "curves.csv")
    assert np.isfinite(curves["objective"]).all()
    assert np.isfinite(curves["objective_before"]).all()

    for _, frame in curves.groupby("fold"):
        objectives = frame.sort_values("epoch")["objective"].to_numpy()
        assert (np.diff(objectives) <= 1e-10).all()


def test_sweep(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    args = ["sweep", str(clean), "--out", str(out), "--param", "k", "--values", "3,5", *fast]
    assert main(args) == 0

    table = pd.read_csv(out / "sweep.csv")
    assert table["run"].tolist() == ["k=3", "k=5"]


def test_timing_sizes(tmp_path: Path) -> None:
    args = ["timing", "--out", str(tmp_path), "--sizes", "60,120", "--dim", "5", "--labels", "4"]
    assert main([*args, "--k", "5", "--steps", "2"]) == 0

    table = pd.read_csv(tmp_path / "timing.csv")
    assert table["n"].tolist() == [60, 120]
    assert (table[["graph_build_s", "propagation_epoch_s", "training_epoch_s"]] > 0).all().all()


def test_grid(clean: Path, tmp_path: Path) -> None:
    args = ["grid", str(clean), "--out", str(tmp_path), "--r", "1"]
    assert main([*args, "--k", "5", "--epochs", "1", "--steps", "2"]) == 0

    assert len(pd.read_csv(tmp_path / "grid.csv")) == 27
    best = parse((tmp_path / "best.toml").read_text()).unwrap()
    assert best["alpha"] in (0.001, 0.01, 0.1)
    assert best["eta"] in (0.1, 1.0, 10.0)


def test_train(clean: Path, tmp_path: Path) -> None:
    args = ["train", str(clean), "--out", str(tmp_path), "--r", "1", "--test", str(clean)]
    assert main([*args, "--k", "5", "--epochs", "2", "--steps", "5"]) == 0

    assert load_params(tmp_path / "checkpoint.npz").dims == (6, 64, 64, 5)
    assert len(pd.read_csv(tmp_path / "curves.csv")) == 2


@mark.parametrize("extra, code", errors)
def test_cv_errors(clean: Path, tmp_path: Path, extra: list[str], code: int) -> None:
    out = tmp_path / "out"
    args = ["cv", str(clean), "--out", str(out), "--folds", "2", "--epochs", "1", "--k", "5"]
    assert main([*args, *extra]) == code


def test_cv_truncated(clean: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    args = ["cv", str(clean), "--out", str(out), "--folds", "2", "--epochs", "1", "--k", "5"]
    assert main([*args, "--eta", "10", "--gamma", "5", "--steps", "100", "--no-normalize"]) == 3
    assert read_results(out)["truncated"] is True


def test_data_errors(tmp_path: Path) -> None:
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 2\n0,5|0 0:1.0\n")

    assert main(["cv", str(tmp_path / "missing.txt")]) == 2
    assert main(["cv", str(bad)]) == 2


def test_usage_errors() -> None:
    with raises(SystemExit) as error:
        main(["fit"])

    assert error.value.code == 1

    with raises(SystemExit) as error:
        main(["cv"])

    assert error.value.code == 1
