import json
from datetime import datetime

import numpy as np
import pytest
from dateutil.tz import tzutc

from app.core.config import resolve_jobs
from app.core.exceptions import ArtifactError, ConfigError, SupportError
from app.core.workers import parallel_map
from app.main import main
from app.models.sector import SectorGrid
from app.schemas.experiment import ExperimentConfig, InitialDataConfig, RunRecord, Suite, SuiteOutcome
from app.schemas.report import CheckResult, HypothesisItem, HypothesisReport, ItemStatus, Verdict
from app.services.experiment_service import ExperimentService, _guarded, bump
from app.storage.run_store import CHECKS_CSV, EXPECTED, REPORT, RunStore

SMOKE = """
name = "smoke-test"
suite = "identity-tests"

[profile]
d = 3
rho0 = 1.0

[grid]
n = 256
r_max = 20.0

[identity_tests]
expansion_depth = 1
derivative_order = 2
adjoint_n = 64
"""


def write_config(tmp_path, text, name="experiment.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_config(tmp_path):
    config = ExperimentService.load_config(write_config(tmp_path, SMOKE))
    assert config.suite == Suite.IDENTITY_TESTS
    assert config.params.adjoint_n == 64
    assert config.params.z_imag == pytest.approx(0.4)


def test_foreign_section_is_rejected(tmp_path):
    path = write_config(tmp_path, SMOKE + "\n[huygens]\ntimes = [3.0]\n")
    with pytest.raises(ConfigError, match="does not belong"):
        ExperimentService.load_config(path)


def test_unknown_key_is_reported_with_its_path(tmp_path):
    path = write_config(tmp_path, SMOKE.replace("r_max = 20.0", "r_max = 20.0\nbogus = 1"))
    with pytest.raises(ConfigError, match="grid.bogus") as excinfo:
        ExperimentService.load_config(path)
    assert excinfo.value.exit_code == 2


def test_syntax_errors_and_missing_files(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentService.load_config(write_config(tmp_path, "name = \n"))
    with pytest.raises(ConfigError, match="not found"):
        ExperimentService.load_config(tmp_path / "absent.toml")


def test_experiment_id_is_canonical():
    first = ExperimentService.experiment_id({"a": 1, "b": [1.5, 2]})
    second = ExperimentService.experiment_id({"b": [1.5, 2], "a": 1})
    assert first == second
    assert len(first) == 12 and int(first, 16) >= 0
    assert ExperimentService.experiment_id({"a": 2, "b": [1.5, 2]}) != first


def test_resolve_fills_dependent_defaults():
    config = ExperimentConfig(name="compare", suite=Suite.PROFILE_COMPARE, profile={"d": 5})
    resolved = ExperimentService.resolve(config)
    assert resolved.params.delta == pytest.approx(8.0)
    assert resolved.params.radius == pytest.approx(1.0)
    assert config.params.delta is None
    payload = ExperimentService.resolved_payload(resolved)
    assert "profile_compare" in payload and "huygens" not in payload
    assert "output_dir" in payload
    section = payload["profile_compare"]
    assert section["t_lo"] == pytest.approx(8.0)
    assert section["dt"] == pytest.approx(120.0 / 4097 / 2)


def test_resolve_records_decay_step_and_weight():
    config = ExperimentConfig(name="decay", suite=Suite.DECAY_RUN, profile={"d": 4}, grid={"n": 99, "r_max": 50.0})
    payload = ExperimentService.resolved_payload(ExperimentService.resolve(config))
    section = payload["decay_run"]
    assert section["dt"] == pytest.approx(0.25)
    assert section["delta"] == pytest.approx(7.0)
    assert section["radius"] == pytest.approx(1.0)


def test_resolve_records_theta_index_per_sigma():
    config = ExperimentConfig(name="theta", suite=Suite.THETA_SCAN, profile={"d": 3, "rho0": 1.0})
    resolved = ExperimentService.resolve(config)
    rho = resolved.params.rho
    assert rho == pytest.approx(config.profile.rho1)
    payload = ExperimentService.resolved_payload(resolved)
    assert payload["theta_scan"]["s"] == {
        "0": pytest.approx(rho / 2),
        "1": pytest.approx((1 + rho) / 2),
        "2": pytest.approx(1 + rho / 2),
    }

    pinned = ExperimentConfig(name="theta", suite=Suite.THETA_SCAN, profile={"d": 3},
                              theta_scan={"sigmas": [0, 1], "s": {"1": 0.9}})
    assert ExperimentService.resolve(pinned).params.s[1] == pytest.approx(0.9)
    uniform = ExperimentConfig(name="theta", suite=Suite.THETA_SCAN, profile={"d": 3}, theta_scan={"s": 1.0})
    assert ExperimentService.resolve(uniform).params.s == {0: 1.0, 1: 1.0, 2: 1.0}


def test_spelled_out_defaults_share_the_experiment_id():
    implicit = ExperimentConfig(name="compare", suite=Suite.PROFILE_COMPARE, profile={"d": 3})
    explicit = ExperimentConfig(name="compare", suite=Suite.PROFILE_COMPARE, profile={"d": 3},
                                profile_compare={"delta": 6.0, "radius": 1.0, "t_lo": 8.0, "dt": 60.0 / 4097})
    ids = [ExperimentService.experiment_id(ExperimentService.resolved_payload(ExperimentService.resolve(c)))
           for c in (implicit, explicit)]
    assert ids[0] == ids[1]


def test_plot_flag_does_not_change_the_experiment_id():
    config = ExperimentService.resolve(ExperimentConfig(name="coeffs", suite=Suite.COEFFS))
    plain = ExperimentService.resolved_payload(config)
    plotted = ExperimentService.resolved_payload(config.model_copy(update={"plots": True}))
    assert plotted["plots"] is True
    assert ExperimentService.experiment_id(plain) == ExperimentService.experiment_id(plotted)


def test_bump_data():
    grid = SectorGrid(d=3, ell=0, r_max=10.0, n=200)
    f, g = bump(grid, InitialDataConfig(support=1.0, f_amp=2.0))
    assert np.all(f[grid.nodes >= 1.0] == 0)
    assert f.max() == pytest.approx(2.0, rel=1e-2)
    assert not np.any(g)


def test_failed_items_become_inconclusive():
    def broken():
        raise SupportError("data reach r_max")

    outcome = _guarded(("broken-item", broken))
    assert outcome.failures == ["broken-item"]
    assert outcome.checks[0].verdict == Verdict.INCONCLUSIVE


def test_failed_hypothesis_item_counts_as_violation():
    report = HypothesisReport(z_real=0.1, z_imag=0.01, upsilon=10.0, items=[
        HypothesisItem(name="H1", status=ItemStatus.PASS),
        HypothesisItem(name="H5", status=ItemStatus.FAIL),
        HypothesisItem(name="H3c", status=ItemStatus.SKIPPED),
    ])
    outcome = SuiteOutcome(hypotheses=[report])
    assert outcome.verdicts() == [Verdict.CONSISTENT, Verdict.VIOLATION]


def test_run_record_exit_code():
    record = RunRecord(experiment_id="0" * 12, name="x", suite=Suite.COEFFS, timestamp=datetime.now(tzutc()),
                       artifacts=[], verdict=Verdict.VIOLATION)
    assert record.exit_code == 1
    assert record.model_copy(update={"verdict": Verdict.INCONCLUSIVE}).exit_code == 0


def test_run_store_roundtrip(tmp_path):
    store = RunStore(tmp_path)
    outcome = SuiteOutcome(checks=[CheckResult(name="c", value=1e-14, threshold=1e-10, verdict=Verdict.CONSISTENT)])
    record = RunRecord(experiment_id="abcdef012345", name="x", suite=Suite.IDENTITY_TESTS,
                       timestamp=datetime.now(tzutc()), artifacts=list(EXPECTED), verdict=Verdict.CONSISTENT)
    store.write_resolved_config({"name": "x"})
    store.write_summary("abcdef012345", "identity-tests", outcome, Verdict.CONSISTENT)
    store.write_tables("abcdef012345", outcome)
    store.write_record(record)
    summary, loaded, loaded_record = store.load()
    assert summary["verdict"] == "CONSISTENT"
    assert loaded == outcome
    assert loaded_record.experiment_id == "abcdef012345"
    rows = (tmp_path / CHECKS_CSV).read_text(encoding="utf-8").splitlines()
    assert rows[1] == "abcdef012345,c,1e-14,1e-10,CONSISTENT,"


def test_missing_artifacts(tmp_path):
    with pytest.raises(ArtifactError) as excinfo:
        RunStore(tmp_path).load()
    assert excinfo.value.exit_code == 3
    assert "summary.json" in str(excinfo.value)


def test_cli_run_and_report(tmp_path, capsys):
    config = write_config(tmp_path, SMOKE)
    out = tmp_path / "run"
    assert main(["run", str(config), "--out", str(out), "--jobs", "2"]) == 0
    assert all((out / name).is_file() for name in EXPECTED)
    record = json.loads((out / "run_record.json").read_text(encoding="utf-8"))
    assert record["verdict"] == "CONSISTENT"
    assert record["failures"] == 0

    assert main(["report", str(out)]) == 0
    assert (out / REPORT).is_file()
    assert "checks.csv" in capsys.readouterr().out


def test_identical_configs_share_summary_bytes(tmp_path):
    config = write_config(tmp_path, SMOKE)
    first, _ = ExperimentService.run(config, out=tmp_path / "a")
    second, _ = ExperimentService.run(config, out=tmp_path / "b")
    assert first.experiment_id == second.experiment_id
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_cli_exit_codes(tmp_path):
    bad = write_config(tmp_path, SMOKE.replace('suite = "identity-tests"', 'suite = "bogus"'), "bad.toml")
    assert main(["run", str(bad), "--out", str(tmp_path / "bad")]) == 2
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == 3


def test_worker_pool():
    assert parallel_map(lambda x: x * x, range(10), jobs=4) == [x * x for x in range(10)]
    assert resolve_jobs(0) == 1
    assert resolve_jobs(3) == 3
