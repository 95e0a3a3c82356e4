import json
import math
import os
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowdown import cli
from slowdown.config import ConfigError, RunConfig, load
from slowdown.plotting import FIGURES, plot_script, render
from slowdown.report import read_csv, write_csv

configs = st.builds(
    RunConfig,
    alpha=st.floats(0.12, 0.245),
    mu=st.floats(0.05, 0.49),
    seed=st.integers(0, 2 ** 40),
    mode=st.sampled_from(["approx", "exact"]),
    samples=st.integers(1, 10 ** 9),
    eps=st.floats(1e-6, 10.0),
    n_min=st.floats(1.0, 100.0),
    n_max=st.floats(200.0, 1e9),
    exploratory=st.booleans(),
    output=st.text("abcxyz_/", min_size=1, max_size=12),
)


@settings(max_examples=100, deadline=None)
@given(configs)
def test_config_text_round_trip(cfg):
    assert RunConfig.parse(cfg.emit()) == cfg


def test_parse_comments_and_coercion():
    cfg = RunConfig.parse("# header\nsamples = 1e6  # scientific\nexploratory = yes\n\n")
    assert cfg.samples == 1_000_000 and isinstance(cfg.samples, int)
    assert cfg.exploratory is True


@pytest.mark.parametrize("text", [
    "samples",                 # no '='
    "colour = red",            # unknown key
    "samples = 1.5",           # non-integral int
    "exploratory = maybe",     # bad bool
    "mode = fast",             # bad choice
    "samples = 0",             # out of range
    "n_min = 20000",           # n_min >= n_max
    "alpha = 0.5",             # outside the parameter range
])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.parse(text)


def test_load_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 5\nsamples = 300\n")
    cfg = load(str(path), {"samples": "400"})
    assert (cfg.seed, cfg.samples, cfg.steps) == (5, 400, RunConfig().steps)
    with pytest.raises(ConfigError):
        load(str(tmp_path / "missing.cfg"))


def run_cli(args, capsys):
    code = cli.main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_exponents_command(capsys):
    code, out, _ = run_cli(["exponents"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["gamma"] == pytest.approx(3.404089, abs=1e-6)
    assert res["beta1"] == pytest.approx(6.647581, abs=1e-6)


def test_invalid_input_is_json_error(tmp_path, capsys):
    code, out, err = run_cli(["tail", "--samples", "0", "--output", str(tmp_path)], capsys)
    assert code == 2 and out == ""
    body = json.loads(err)
    assert body["error"] == "invalid_config" and "samples" in body["message"]


def test_simulate_writes_csv_and_manifest(tmp_path, capsys):
    code, out, _ = run_cli(["simulate", "--steps", "200", "--seed", "3", "--output",
                            str(tmp_path), "--no-plots"], capsys)
    assert code == 0
    rows = read_csv(tmp_path / "orbit.csv")
    assert len(rows) == 201 and list(rows[0]) == ["step", "x", "y"]
    man = json.loads((tmp_path / "simulate_manifest.json").read_text())
    assert man["seed"] == 3 and man["artifacts"] == ["orbit.csv"]
    assert json.loads(out)["steps"] == 200


def test_emit_plots_scripts_run(tmp_path, capsys):
    run_cli(["simulate", "--steps", "50", "--output", str(tmp_path), "--no-plots"], capsys)
    code, out, _ = run_cli(["emit-plots", "--output", str(tmp_path)], capsys)
    assert code == 0 and json.loads(out)["scripts"] == ["plot_orbit.py"]
    subprocess.run([sys.executable, "plot_orbit.py"], cwd=tmp_path, check=True)
    assert (tmp_path / "orbit.png").stat().st_size > 0


def test_emit_plots_needs_directory(tmp_path, capsys):
    code, _, err = run_cli(["emit-plots", "--output", str(tmp_path / "nope")], capsys)
    assert code == 2 and json.loads(err)["error"] == "invalid_input"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "slowdown.cli", "exponents", "--alpha", "0.15"],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["alpha"] == 0.15


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=20))
def test_csv_floats_round_trip(tmp_path_factory, values):
    path = os.path.join(tmp_path_factory.mktemp("csv"), "t.csv")
    write_csv(path, [dict(i=i, v=v) for i, v in enumerate(values)])
    back = [float(r["v"]) for r in read_csv(path)]
    assert back == values


def test_csv_special_cells(tmp_path):
    path = tmp_path / "s.csv"
    write_csv(path, [dict(a=True, b=math.inf, c="x")])
    assert path.read_text() == "a,b,c\ntrue,inf,x\n"


@pytest.mark.parametrize("kind", sorted(FIGURES))
def test_render_every_kind(tmp_path, kind):
    rows = {
        "tail": [dict(n=n, survival=n ** -2.0, ci_low=0.9 * n ** -2.0, ci_high=1.1 * n ** -2.0)
                 for n in (10, 20, 40)],
        "correlations": [dict(lag=n, corr=n ** -1.5, stderr=1e-3) for n in (1, 2, 4)],
        "ldp": [dict(n=n, probability=math.exp(-n / 10)) for n in (10, 20, 40)],
        "ratio": [dict(steps=k, median_ratio=k ** -3.0) for k in (1, 2, 4)],
        "lyapunov": [dict(direction=d, chi=2.8, stderr=0.01) for d in ("forward", "backward")],
        "orbit": [dict(x=0.1 * k, y=0.05 * k) for k in range(10)],
        "clt": [dict(z=0.1 * k - 0.5) for k in range(11)],
    }[kind]
    path = render(kind, rows, str(tmp_path / f"{kind}.png"), slopes={"ref": -2.0})
    assert os.path.getsize(path) > 0
    compile(plot_script(kind, f"{kind}.csv", slopes={"ref": -2.0}), "plot.py", "exec")
