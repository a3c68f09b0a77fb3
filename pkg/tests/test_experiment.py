# standard library
from dataclasses import replace
from pathlib import Path


# dependencies
import numpy as np
from numpy.testing import assert_allclose
from plainpml.dataset import Dataset, make_clean, make_folds
from plainpml.experiment import (
    ExperimentConfig,
    complexity_fit,
    epochs_to_fraction,
    measure_timing,
    run_cv,
    run_grid,
    to_reports,
)
from plainpml.io import load_reports, save_reports
from plainpml.network import LossKind
from plainpml.propagation import DivergenceError
from plainpml.trainer import VariantKind
from pytest import fixture, mark, raises


# test data
invalid = [
    # (config key, invalid value)
    ("k", 0),
    ("rho", 0.0),
    ("alpha", -0.1),
    ("gamma", 0.0),
    ("lr", 0.0),
    ("folds", 1),
    ("r", 0),
    ("threshold", 1.0),
    ("jobs", 0),
]
fractions = [
    # (learning curve, expected epoch)
    ([0.1, 0.5, 0.96, 1.0], 3),
    ([1.0, 1.0], 1),
    ([0.2, 0.4, 0.6, 0.8], 4),
]


@fixture(scope="module")
def dataset() -> Dataset:
    return make_clean(40, 6, 5, seed=0)


@fixture
def config() -> ExperimentConfig:
    return ExperimentConfig(k=5, steps=5, epochs=2, batch_size=8, folds=2, r=1)


# test functions
def test_config_defaults() -> None:
    config = ExperimentConfig()

    assert config.k == 10
    assert config.rho == 3.0
    assert config.lr == 0.01
    assert config.weight_decay == 5e-5
    assert config.loss is LossKind.BCE
    assert config.folds == 10
    assert config.steps_for(593) == 200
    assert config.steps_for(133_441) == 50
    assert replace(config, steps=7).steps_for(133_441) == 7


@mark.parametrize("key, value", invalid)
def test_config_invalid(key: str, value: float) -> None:
    with raises(ValueError):
        ExperimentConfig.from_dict({key: value})


def test_config_unknown_key() -> None:
    with raises(ValueError, match="Unknown"):
        ExperimentConfig.from_dict({"kk": 10})


def test_config_to_dict(config: ExperimentConfig) -> None:
    mapping = config.to_dict()

    assert mapping["variant"] == "plain"
    assert mapping["loss"] == "bce"
    assert ExperimentConfig.from_dict(mapping) == config


def test_config_from_toml(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text('dataset = "data.txt"\nk = 20\nvariant = "dnn"\nalpha = 0.1\n')
    config = ExperimentConfig.from_toml(path, k=5, beta=None)

    assert config.dataset == "data.txt"
    assert config.k == 5
    assert config.variant is VariantKind.DNN_ONLY
    assert config.alpha == 0.1
    assert config.beta == ExperimentConfig().beta


def test_train_config(config: ExperimentConfig) -> None:
    cfg = config.train_config(100)

    assert cfg.propagation.steps == 5
    assert cfg.optimizer.learning_rate == config.lr
    assert cfg.optimizer.weight_decay == config.weight_decay
    assert cfg.epochs == 2
    assert not cfg.track_objective

    cfg = replace(config, full_batch=True, track_objective=True).train_config(100)
    assert cfg.full_batch
    assert cfg.track_objective


def test_run_cv(dataset: Dataset, config: ExperimentConfig) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    [result] = run_cv(dataset, {"plain": config}, plan)

    assert result.name == "plain"
    assert len(result.reports) == 2
    assert len(result.histories) == 2
    assert result.mean["average_precision"] == np.mean(result.values("average_precision"))
    assert result.std["ranking_loss"] == np.std(result.values("ranking_loss"))
    assert all(seconds >= 0 for seconds in result.timing.values())
    assert set(result.curves()["fold"]) == {0, 1}
    assert sum(r.n_evaluated + r.n_skipped for r in result.reports) == dataset.meta.n


def test_run_cv_shared_folds(dataset: Dataset, config: ExperimentConfig) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    configs = {v.value: replace(config, variant=v) for v in VariantKind}
    results = run_cv(dataset, configs, plan)

    assert [result.name for result in results] == [v.value for v in VariantKind]
    assert all(len(result.reports) == 2 for result in results)


def test_run_cv_deterministic(dataset: Dataset, config: ExperimentConfig) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    [first] = run_cv(dataset, {"plain": config}, plan)
    [second] = run_cv(dataset, {"plain": replace(config, jobs=2)}, plan)

    assert first.reports == second.reports


def test_run_cv_resample(dataset: Dataset, config: ExperimentConfig) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    [result] = run_cv(dataset, {"plain": replace(config, resample_per_fold=True)}, plan)
    assert len(result.reports) == 2


def test_run_cv_dump_graphs(dataset: Dataset, config: ExperimentConfig, tmp_path: Path) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    run_cv(dataset, {"plain": config}, plan, dump_dir=tmp_path)

    for fold in range(2):
        assert (tmp_path / f"instance_graph_{fold}.txt").exists()
        assert (tmp_path / f"label_graph_{fold}.txt").exists()


def test_run_cv_partial(dataset: Dataset, config: ExperimentConfig) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    configs = {
        "dnn": replace(config, variant=VariantKind.DNN_ONLY),
        "plain": replace(config, eta=10.0, gamma=5.0, steps=100, normalize=False),
    }

    with raises(DivergenceError) as error:
        run_cv(dataset, configs, plan)

    partial = getattr(error.value, "partial")
    assert len(partial[0].reports) == 2
    assert len(partial[1].reports) == 0


def test_to_reports(dataset: Dataset, config: ExperimentConfig, tmp_path: Path) -> None:
    plan = make_folds(dataset.meta, config.folds, config.seed)
    results = run_cv(dataset, {"plain": config, "dnn": replace(config, variant="dnn")}, plan)
    results[1].reports.pop()
    reports = to_reports(results, replace(config, dataset="toy.txt"))

    assert reports.sizes["variant"] == 2
    assert reports.sizes["fold"] == 2
    assert np.isnan(reports["average_precision"].sel(variant="dnn", fold=1))
    assert reports.attrs["dataset"] == "toy.txt"

    save_reports(reports, tmp_path / "results.nc")
    loaded = load_reports(tmp_path / "results.nc")
    assert_allclose(loaded["ranking_loss"], reports["ranking_loss"])


def test_run_grid(dataset: Dataset, config: ExperimentConfig) -> None:
    best, table = run_grid(dataset, config, alphas=[0.01, 0.1], betas=[0.01], etas=[1.0, 10.0])

    assert len(table) == 4
    assert best.alpha in (0.01, 0.1)
    assert best.eta in (1.0, 10.0)
    assert table["average_precision"].max() == table.loc[
        (table["alpha"] == best.alpha) & (table["eta"] == best.eta), "average_precision"
    ].iloc[0]


def test_measure_timing(dataset: Dataset, config: ExperimentConfig) -> None:
    timing = measure_timing(dataset, config)

    assert timing["n"] == 40
    assert timing["L"] == 5
    assert timing["graph_build_s"] > 0
    assert timing["propagation_epoch_s"] > 0
    assert timing["training_epoch_s"] > 0


def test_complexity_fit() -> None:
    sizes = [1000, 2000, 4000, 8000]
    n = np.array(sizes, dtype=float)
    seconds = 3e-9 * n * (6**2 + n * 11) + 0.01
    slope, intercept, r2 = complexity_fit(sizes, seconds, L=6, k=10)

    assert_allclose(slope, 3e-9)
    assert_allclose(intercept, 0.01, atol=1e-6)
    assert_allclose(r2, 1.0)


@mark.parametrize("curve, expected", fractions)
def test_epochs_to_fraction(curve: list[float], expected: int) -> None:
    assert epochs_to_fraction(curve) == expected
