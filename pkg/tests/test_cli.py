import json
import subprocess
import sys

import pytest

from fvlab.cli import EXIT_ASSERT, EXIT_OK, EXIT_USAGE, main, read_config_file, UsageError


def run_json(args, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main(args + ["--format", "json", "--out", str(out)])
    assert code == EXIT_OK
    return json.loads(out.read_text())


def test_constants_report(tmp_path):
    doc = run_json(["constants", "--a", "1", "--beta", "3", "--gamma", "0.5", "--epsilon", "0.5",
                    "--n-particles", "2"], tmp_path)
    assert doc["results"]["summary"]["M"] == pytest.approx(2.08008, abs=1e-5)
    assert doc["manifest"]["config"]["experiment"] == "constants"
    assert doc["manifest"]["version"]


def test_sign_test_agrees(tmp_path):
    s = run_json(["sign-test", "--nu", "-1", "--replicas", "100000"], tmp_path)["results"]["summary"]
    assert s["agree"] and s["mc_mean_log_alpha_sq"] < 0


def test_sign_test_at_zero(tmp_path):
    s = run_json(["sign-test", "--nu", "0", "--replicas", "100000"], tmp_path)["results"]["summary"]
    assert abs(s["mc_mean_log_alpha_sq"]) < 3 * s["se"] and s["agree"]


def test_sign_test_rejects_nu_three(capsys):
    assert main(["sign-test", "--nu", "3"]) == EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and "nu < 2" in err[0]


def test_unknown_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["extinct", "--bogus"])
    assert exc.value.code == EXIT_USAGE


@pytest.mark.parametrize("args", [
    ["extinct", "--law", "bessel", "--beta", "3"],
    ["extinct", "--law", "reflected", "--nu", "-1"],
    ["extinct", "--mode", "scaling", "--n-particles", "3"],
    ["extinct", "--replicas", "0"],
    ["fw-check", "--a", "1", "--gamma", "0.5", "--delta", "0.9"],
    ["constants", "--gamma", "1.5"],
    ["hitting-law", "--nu", "2"],
    ["sign-test", "--seed", "-4"],
])
def test_bad_values_exit_two(args):
    assert main(args) == EXIT_USAGE


def test_extinct_bessel(tmp_path):
    doc = run_json(["extinct", "--law", "bessel", "--nu", "-4", "--n-particles", "2", "--replicas", "50"], tmp_path)
    assert doc["results"]["summary"]["extinct_fraction"] == 1.0
    assert len(doc["results"]["rows"]) == 50


def test_extinct_bessel_critical(tmp_path):
    doc = run_json(["extinct", "--nu", "0.5", "--n-particles", "4", "--replicas", "20", "--horizon", "5"], tmp_path)
    assert doc["results"]["summary"]["extinct_fraction"] == 0.0


def test_coupling_and_assert(tmp_path):
    code = main(["coupling", "--nu", "0.5", "--n-particles", "4", "--horizon", "5", "--replicas", "10",
                 "--assert", "--out", str(tmp_path / "c.json")])
    assert code == EXIT_OK


def test_assert_failure_exit_code(tmp_path):
    # 100% extinction cannot hold for nu >= 0 at a short horizon
    code = main(["extinct", "--law", "bessel", "--nu", "-0.5", "--replicas", "5", "--horizon", "0.01",
                 "--assert", "--out", str(tmp_path / "x.json")])
    assert code == EXIT_ASSERT


def test_density_check(tmp_path):
    s = run_json(["density-check", "--nu", "-1", "--replicas", "10000"], tmp_path)["results"]["summary"]
    assert s["ks_paths_vs_exact_p"] > 0.01


def test_csv_output_has_manifest_header(tmp_path):
    out = tmp_path / "e.csv"
    assert main(["extinct", "--nu", "-4", "--replicas", "5", "--format", "csv", "--out", str(out)]) == 0
    text = out.read_bytes().decode()
    lines = text.split("\n")
    assert lines[0].startswith("# manifest: ") and lines[1].startswith("# summary: ")
    assert lines[2] == "replica,extinct,tau_inf,n_events"
    assert "\r" not in text


def test_byte_identical_reruns(tmp_path):
    args = ["extinct", "--nu", "-1", "--replicas", "20", "--seed", "77"]
    for fmt in ("csv", "json"):
        a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
        assert main(args + ["--format", fmt, "--out", str(a)]) == 0
        assert main(args + ["--format", fmt, "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_workers_do_not_change_results(tmp_path):
    args = ["extinct", "--nu", "-1", "--replicas", "12", "--seed", "5"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nnu = -4\nreplicas = 7   # trailing\nn-particles = 2\n", encoding="utf-8")
    doc = run_json(["extinct", "--config", str(cfg), "--replicas", "3"], tmp_path)
    c = doc["manifest"]["config"]
    assert c["nu"] == -4.0 and c["replicas"] == 3


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config_file(str(bad))
    bad.write_text("nu -1\n")
    with pytest.raises(UsageError):
        read_config_file(str(bad))
    assert main(["constants", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE


def test_dump_paths(tmp_path):
    d = tmp_path / "paths"
    assert main(["hitting-law", "--nu", "-4", "--replicas", "3", "--dump-paths", str(d),
                 "--out", str(tmp_path / "h.json")]) == 0
    files = sorted(p.name for p in d.iterdir())
    assert files == ["path_000000.csv", "path_000001.csv", "path_000002.csv"]
    assert (d / files[0]).read_text().startswith("time,value\n")


def test_console_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "fvlab.cli", "constants", "--format", "csv"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("# manifest: ")
