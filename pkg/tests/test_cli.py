import json

import pytest

from homlab import experiments
from homlab.cli import EXIT_ERROR, EXIT_FAIL, EXIT_PASS, main, report_summary
from homlab.config import ConfigError, dumps_toml, load

def fast_opnorm(run_extra="", tail=""):
    return ("[lattice]\nR = [16.0]\nhalf = [256]\n"
            "[run]\nj = [1, 2, 3, 4]\niters = 20\ntol = 1e-3\n" + run_extra + tail)


def write(path, text):
    path.write_text(text)
    return path


def test_group_check_heisenberg(tmp_path):
    out = tmp_path / "gc"
    cfg = write(tmp_path / "gc.toml", 'kind = "group-check"\n[group]\nbuiltin = "heisenberg"\n[run]\npoints = 2000\n')
    assert main(["group-check", "--config", str(cfg), "--out", str(out)]) == EXIT_PASS
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "PASS" and man["kind"] == "group-check"
    assert "report.json" in man["files"] and not list(out.glob("*.partial"))


def test_zero_kernel_opnorm(tmp_path):
    cfg = write(tmp_path / "z.toml", fast_opnorm(tail='[kernel]\nomega = "0"\n'))
    out = tmp_path / "z"
    assert main(["opnorm", "--config", str(cfg), "--out", str(out)]) == EXIT_PASS
    rep = json.loads((out / "report.json").read_text())
    assert all(r["value"] == 0.0 for r in rep["tables"]["norms"])


def test_invalid_config_names_field(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", '[lattice]\nR = "wide"\nhalf = [64]\n')
    assert main(["opnorm", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    assert "lattice.R" in capsys.readouterr().err
    cfg2 = write(tmp_path / "kind.toml", 'kind = "dini"\n')
    assert main(["opnorm", "--config", str(cfg2), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    cfg3 = write(tmp_path / "parse.toml", "[lattice\n")
    assert main(["opnorm", "--config", str(cfg3), "--out", str(tmp_path / "o")]) == EXIT_ERROR
    with pytest.raises(ConfigError):
        experiments.run("no-such-kind")


def test_summary_statuses(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    text, code = report_summary(empty)
    assert code == EXIT_PASS and len(text.splitlines()) == 1

    root = tmp_path / "runs"
    cfg = write(tmp_path / "f.toml", fast_opnorm())
    assert main(["opnorm", "--config", str(cfg), "--out", str(root / "a")]) == EXIT_PASS
    text, code = report_summary(root)
    lines = text.splitlines()
    assert code == EXIT_PASS and len(lines) == 2 and lines[1].endswith("PASS")

    # a failing run: demand an impossible fit quality
    bad = write(tmp_path / "b.toml", fast_opnorm("min_r2 = 1.5\n"))
    assert main(["opnorm", "--config", str(bad), "--out", str(root / "b")]) == EXIT_FAIL
    assert report_summary(root)[1] == EXIT_FAIL
    assert main(["summary", "--dir", str(root)]) == EXIT_FAIL

    (root / "c").mkdir()
    (root / "c" / "report.json.partial").write_text("{}")
    text, code = report_summary(root)
    assert code == EXIT_ERROR and "CORRUPT" in text
    (root / "d").mkdir()
    (root / "d" / "manifest.json").write_text("not json")
    assert report_summary(root)[1] != EXIT_PASS


def test_defaults_roundtrip(tmp_path, capsys):
    for kind in experiments.REGISTRY:
        p = write(tmp_path / f"{kind}.toml", dumps_toml(experiments.defaults(kind)))
        assert load(p) == json.loads(json.dumps(experiments.defaults(kind)).replace("Infinity", "1e999"))
    assert main(["defaults", "sharpness"]) == EXIT_PASS
    assert "[run]" in capsys.readouterr().out


def test_same_seed_same_report(tmp_path):
    cfg = write(tmp_path / "f.toml", fast_opnorm("materialized = false\n"))
    for t, d in ((1, "one"), (2, "two")):
        assert main(["opnorm", "--config", str(cfg), "--threads", str(t), "--out", str(tmp_path / d)]) == EXIT_PASS
    a = (tmp_path / "one" / "report.json").read_bytes()
    b = (tmp_path / "two" / "report.json").read_bytes()
    assert a == b
