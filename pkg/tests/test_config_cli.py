import textwrap
from pathlib import Path

import pytest

from carnotflow.cli import main
from carnotflow.config import ConfigError, parse

LAMBDA = """
frame = "heisenberg1"
seed = 7

[check]
suites = ["lambda-max"]
cases = 20

[tolerance]
lambda_max = {tol}
"""

CUSTOM = """
frame = "custom"
dim = 2

[[field]]
terms = [[1, [0, 0], 1.0]]

[[field]]
terms = [[1, [1, 0], 1.0], [2, [0, 0], 1.0]]
"""


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse('frame = "heisenberg1"\ncolour = 1\n')
    with pytest.raises(ConfigError, match="unknown key"):
        parse('frame = "heisenberg1"\n[grid]\nbounds=[[0,1],[0,1],[0,1]]\nnodes=5\nspacing=1\n')


@pytest.mark.parametrize("text", [
    'frame = "heisenberg1"\nepsilon = 0\n',
    'frame = "heisenberg1"\nepsilon = 1.5\n',
    'frame = "euclidean"\n',
    'frame = "heisenberg1"\ndim = 2\n',
    'frame = "heisenberg1"\nseed = -1\n',
    'frame = "torus"\n',
    'frame = "heisenberg1"\n[[field]]\nterms=[]\n',
    "not toml = = 1",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_custom_frame_parses():
    with pytest.warns(UserWarning, match="not Carnot-type"):
        cfg = parse(CUSTOM)
        f = cfg.base_frame()
    assert f.dim == 2 and f.rank == 2


def test_seed_override_keeps_rest():
    cfg = parse(LAMBDA.format(tol=1e-5))
    assert cfg.with_seed(3).seed == 3 and cfg.with_seed(3).check == cfg.check


def test_exit_codes(tmp_path):
    ok = _write(tmp_path, LAMBDA.format(tol=1e-5), "ok.toml")
    bad = _write(tmp_path, LAMBDA.format(tol=1e-300), "bad.toml")
    assert main(["check", "--config", ok, "--out", str(tmp_path / "a")]) == 0
    assert main(["check", "--config", bad, "--out", str(tmp_path / "b")]) == 2
    assert main(["check", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "c")]) == 1
    assert main(["check", "--config", ok]) == 1
    assert main(["check", "--config", ok, "--out", str(tmp_path / "d"), "--threads", "0"]) == 1
    assert main(["frobnicate", "--config", ok, "--out", str(tmp_path / "e")]) == 1


def test_lock_file_blocks_second_run(tmp_path):
    cfg = _write(tmp_path, LAMBDA.format(tol=1e-5))
    out = tmp_path / "run"
    out.mkdir()
    (out / ".lock").write_text("1")
    assert main(["check", "--config", cfg, "--out", str(out)]) == 1
    (out / ".lock").unlink()
    assert main(["check", "--config", cfg, "--out", str(out)]) == 0
    assert not (out / ".lock").exists()


def _csvs(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_reruns_and_threads_are_byte_identical(tmp_path):
    cfg = _write(tmp_path, LAMBDA.format(tol=1e-5))
    for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        assert main(["check", "--config", cfg, "--out", str(tmp_path / name), "--threads", threads]) == 0
    a, b, c = (_csvs(tmp_path / n) for n in "abc")
    assert a and a == b == c
    digest = lambda n: [l for l in (tmp_path / n / "manifest").read_text().splitlines() if l.startswith("files_digest")]
    assert digest("a") == digest("c")


def test_seed_flag_changes_cases(tmp_path):
    cfg = _write(tmp_path, LAMBDA.format(tol=1e-5))
    main(["check", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["check", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "8"])
    assert _csvs(tmp_path / "a") != _csvs(tmp_path / "b")
    assert "seed = 8" in (tmp_path / "b" / "manifest").read_text()


def test_manifest_records_config_and_files(tmp_path):
    cfg = _write(tmp_path, LAMBDA.format(tol=1e-5))
    main(["check", "--config", cfg, "--out", str(tmp_path / "a")])
    text = (tmp_path / "a" / "manifest").read_text()
    assert "[config]" in text and 'frame = "heisenberg1"' in text
    for name in _csvs(tmp_path / "a"):
        assert name in text
