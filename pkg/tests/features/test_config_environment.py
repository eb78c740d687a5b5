"""
Environment settings, XPER_THREADS override and study defaults
"""
import pytest

from components.coalition import CoalitionValueTable
from components.errors import ConfigurationError, GuardRailError
from components.metrics import get_metric
from components.studies import SCENARIOS, StudyConfig
from components.xper_exact import check_guard_rail
from config.data_config import ArtifactPaths
from config.environment import EnvironmentConfig


@pytest.mark.smoke
def test_dev_environment_defaults(environment_config):
    assert environment_config.environment == "dev"
    assert environment_config.max_exact_features == 15
    assert environment_config.label_threshold == 0.5
    assert environment_config.wls.sampling == "uniform"
    assert environment_config.chunk_rows > 0


def test_every_scenario_has_defaults(environment_config):
    assert environment_config.scenarios == sorted(SCENARIOS)


def test_threads_override_from_environment(environment_config, monkeypatch):
    monkeypatch.setenv("XPER_THREADS", "3")
    assert environment_config.threads == 3


@pytest.mark.parametrize("raw", ["zero", "0", "-2"])
def test_invalid_threads_override(environment_config, monkeypatch, raw):
    monkeypatch.setenv("XPER_THREADS", raw)
    with pytest.raises(ConfigurationError, match="XPER_THREADS"):
        environment_config.threads


def test_coalition_table_uses_engine_settings(engine_settings, small_regression):
    sample, model = small_regression
    table = CoalitionValueTable(sample, model, get_metric("mse"))

    assert table.chunk_rows == engine_settings.chunk_rows
    assert table.threads == engine_settings.threads


def test_guard_rail_follows_environment_limit(environment_config, mocker):
    engine = environment_config.engine.model_copy(update={"max_exact_features": 2})
    mocker.patch.object(environment_config, "settings",
                        environment_config.settings.model_copy(update={"engine": engine}))

    with pytest.raises(GuardRailError, match="limit q=2"):
        check_guard_rail(3, allow_large_q=False)
    check_guard_rail(2, allow_large_q=False)


def test_unknown_environment_file():
    with pytest.raises(FileNotFoundError):
        EnvironmentConfig("no-such-environment")


def test_unknown_scenario_defaults(environment_config):
    with pytest.raises(ConfigurationError, match="not found"):
        environment_config.get_study_defaults("nope")


def test_study_config_overrides_and_keeps_defaults():
    config = StudyConfig.for_scenario("probit_baseline", replications=5, seed=None)

    assert config.replications == 5
    assert config.seed == 20230419
    assert config.beta == [0.05, 0.5, 0.5, 0.0]


def test_study_config_rejects_bad_values():
    with pytest.raises(ConfigurationError, match="replications"):
        StudyConfig.for_scenario("probit_baseline", replications=0)


def test_study_config_checks_beta_length():
    with pytest.raises(ConfigurationError, match="intercept"):
        StudyConfig.for_scenario("probit_baseline", beta=[0.5, 0.5])


def test_no_shift_control_reuses_training_variances():
    config = StudyConfig.for_scenario("overfit_shift").no_shift_control()
    assert config.shift_cov_diag == config.cov_diag


def test_artifact_paths(tmp_path):
    paths = ArtifactPaths(output_dir=tmp_path / "out")

    assert paths.get_file_path("draws", "probit_baseline").name == "probit_baseline_draws.csv"
    assert paths.ensure_dir().is_dir()
    with pytest.raises(ValueError, match="Unknown artifact kind"):
        paths.get_file_path("plot", "probit_baseline")
