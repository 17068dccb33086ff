"""End-to-end acceptance runs through the command-line harness.

Each criterion runs its configuration(s) from ``configs/`` and prints one
PASS/FAIL line. The determinism criterion reruns every earlier
configuration with eight worker threads and compares CSV bytes with the
single-threaded outputs, which are cached for the session.
"""

from pathlib import Path

import pytest

from carnotflow.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

CRITERIA = {
    1: ("euclidean shrinking circle", [("pde", "crit1_euclidean_circle")]),
    2: ("heisenberg cylinder epsilon-independence", [("sweep", "crit2_heisenberg_cylinder")]),
    3: ("stationary plane", [("pde", "crit3_stationary_plane")]),
    4: ("Levy-area law", [("simulate", "crit4_levy_area")]),
    5: ("weak order", [("sweep", "crit5_weak_order_euclidean"), ("sweep", "crit5_weak_order_heisenberg")]),
    6: ("hamiltonian oracle", [("check", "crit6_hamiltonian")]),
    7: ("lambda_max derivative", [("check", "crit7_lambda_max")]),
    8: ("value-function lemmas", [("check", "crit8_value_lemmas")]),
    9: ("PDE vs control values", [("compare", "crit9_compare")]),
}


def _run(command, name, out, threads):
    return main([command, "--config", str(CONFIGS / f"{name}.toml"), "--out", str(out), "--threads", str(threads)])


@pytest.fixture(scope="session")
def single_threaded(tmp_path_factory):
    """Lazily computed ``{config name: (exit code, out dir)}`` at one thread."""
    root = tmp_path_factory.mktemp("acceptance")
    cache = {}

    def get(command, name):
        if name not in cache:
            out = root / name
            cache[name] = (_run(command, name, out, 1), out)
        return cache[name]

    return get


def _report(capsys, number, title, ok, detail=""):
    with capsys.disabled():
        print(f"\ncriterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}{detail}")


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, single_threaded, capsys):
    title, runs = CRITERIA[number]
    codes = [single_threaded(cmd, name)[0] for cmd, name in runs]
    ok = all(c == 0 for c in codes)
    _report(capsys, number, title, ok, "" if ok else f" (exit codes {codes})")
    assert ok


def _csv_bytes(d: Path):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def test_criterion_10_determinism(single_threaded, tmp_path, capsys):
    mismatched = []
    for _, runs in CRITERIA.values():
        for cmd, name in runs:
            _, ref = single_threaded(cmd, name)
            out = tmp_path / name
            _run(cmd, name, out, 8)
            a, b = _csv_bytes(ref), _csv_bytes(out)
            if not a or a != b:
                mismatched.append(name)
    ok = not mismatched
    _report(capsys, 10, "byte-identical CSVs at 1 and 8 threads", ok, "" if ok else f" (differs: {mismatched})")
    assert ok
