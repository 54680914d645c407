import csv
import io
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from ruinlab.cli import EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME, main
from ruinlab.config import ConfigError, list_presets, load_config, load_preset
from ruinlab.mc_engine import estimate_ruin_probability

GOLDEN = Path(__file__).parent / "golden"

# (file name, argv) for every checked-in golden output
GOLDEN_CASES = [
    ("simulate_poisson_event.csv", ["simulate", "--preset", "poisson_event", "--paths", "3000"]),
    ("simulate_gbm_optimal.csv", ["simulate", "--preset", "gbm_optimal", "--paths", "600", "--mesh", "0.03125"]),
    ("simulate_ratio_limit.json", ["simulate", "--preset", "ratio_limit", "--paths", "2000", "--format", "json"]),
    ("asymptotic_jump_factor.csv", ["asymptotic", "--preset", "jump_factor"]),
    ("optimal_gbm_optimal.csv", ["optimal", "--preset", "gbm_optimal"]),
    ("check_cir_check.csv", ["check", "--preset", "cir_check"]),
    ("converge_ratio_limit.csv", ["converge", "--preset", "ratio_limit", "--paths", "2000"]),
]


def run_cli(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_config(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_presets_all_validate():
    names = list_presets()
    assert {"poisson_event", "ratio_limit", "gbm_constant", "jump_factor", "gbm_optimal", "cir_check",
            "boundary_density"} <= set(names)
    for n in names:
        load_preset(n)


def test_unknown_keys_are_rejected(tmp_path):
    cfg = load_preset("poisson_event").model_dump()
    cfg["run"]["n_path"] = 10
    with pytest.raises(ConfigError, match="n_path"):
        load_config(write_config(tmp_path, cfg))


def test_unknown_nested_keys_are_rejected(tmp_path):
    data = {"claims": {"law": "pareto", "alpha": 2.0, "tail": 3}}
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, data))


def test_strategy_grammar(tmp_path):
    base = {"claims": {"alpha": 2.0}, "market": {"rate": 0.05, "assets": [{"model": "gbm", "mu": 0.1, "sigma": 0.2}]}}
    for strategy in ([0.3], "asymptotically-optimal", {"rule": "cushion", "params": {"multiplier": 2.0, "floor": 0.5}}):
        cfg = load_config(write_config(tmp_path, {**base, "strategy": strategy}))
        cfg.build_strategy()
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {**base, "strategy": "optimal"}))


def test_config_error_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, {"claims": {"alpha": -1}})
    code, _, err = run_cli(["simulate", "--config", path], capsys)
    assert code == EXIT_CONFIG and "config error" in err
    assert run_cli(["simulate"], capsys)[0] == EXIT_CONFIG
    assert run_cli(["simulate", "--preset", "nope"], capsys)[0] == EXIT_CONFIG
    assert run_cli(["simulate", "--preset", "poisson_event", "--eps", "0.1,x"], capsys)[0] == EXIT_CONFIG
    assert run_cli(["frobnicate"], capsys)[0] == EXIT_CONFIG


def test_invalid_strategy_is_a_config_error(capsys, tmp_path):
    # fully invested in a jump asset that can lose everything
    cfg = load_preset("boundary_density").model_dump(exclude_none=True)
    cfg["strategy"] = [1.0]
    code, _, err = run_cli(["asymptotic", "--config", write_config(tmp_path, cfg)], capsys)
    assert code == EXIT_CONFIG and "below -1" in err


def test_runtime_error_exit_code(capsys, monkeypatch):
    import ruinlab.cli as cli_mod

    def boom(*a, **k):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli_mod, "estimate_ruin_probability", boom)
    code, _, err = run_cli(["simulate", "--preset", "poisson_event", "--paths", "10"], capsys)
    assert code == EXIT_RUNTIME and "simulated failure" in err


def test_eps_zero_row(capsys):
    code, out, _ = run_cli(["simulate", "--preset", "poisson_event", "--eps", "0", "--paths", "200"], capsys)
    assert code == 0
    row = next(csv.DictReader(io.StringIO(out)))
    assert float(row["p_hat"]) == 0.0 and row["normalized_ratio"] == "nan"


def test_poisson_event_preset_matches_oracle(capsys):
    code, out, _ = run_cli(["simulate", "--preset", "poisson_event"], capsys)
    row = next(csv.DictReader(io.StringIO(out)))
    p, n = 1 - math.exp(-1), int(row["n_paths"])
    assert abs(float(row["p_hat"]) - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_csv_round_trip_equals_in_memory(capsys):
    code, out, _ = run_cli(["simulate", "--preset", "gbm_optimal", "--paths", "300", "--mesh", "0.0625"], capsys)
    cfg = load_preset("gbm_optimal").with_run(n_paths=300, mesh=0.0625)
    rows = list(csv.DictReader(io.StringIO(out)))
    for row, eps in zip(rows, cfg.run.eps):
        est = estimate_ruin_probability(cfg.claims_spec(), cfg.market_model(), cfg.build_strategy(), cfg.run.x, eps,
                                        300, cfg.run.seed, mesh=0.0625)
        assert float(row["p_hat"]) == est.p_hat
        assert float(row["ci_halfwidth"]) == est.ci_halfwidth
        assert float(row["normalized_ratio"]) == est.normalized_ratio
        assert int(row["seed"]) == est.seed


def test_json_writes_nan_as_null(capsys):
    code, out, _ = run_cli(["asymptotic", "--preset", "gbm_constant", "--format", "json"], capsys)
    data = json.loads(out)
    assert data[0]["std_error"] is None and data[0]["method"] == "closed-form"
    assert data[0]["K"] == pytest.approx(1.01007, abs=1e-5)


def test_asymptotic_commands(capsys, tmp_path):
    _, out, _ = run_cli(["asymptotic", "--preset", "jump_factor"], capsys)
    assert float(next(csv.DictReader(io.StringIO(out)))["K"]) == pytest.approx((math.exp(3) - 1) / 3)
    flat = {"claims": {"alpha": 2.0}, "market": {"rate": 0.0, "assets": [{"model": "gbm", "mu": 0.0, "sigma": 0.0}]},
            "strategy": [1.0]}
    _, out, _ = run_cli(["asymptotic", "--config", write_config(tmp_path, flat)], capsys)
    assert float(next(csv.DictReader(io.StringIO(out)))["K"]) == 1.0


def test_asymptotic_falls_back_to_mc_for_stochastic_vol(capsys):
    code, out, _ = run_cli(["asymptotic", "--preset", "cir_check", "--mesh", "0.0625"], capsys)
    row = next(csv.DictReader(io.StringIO(out)))
    assert code == 0 and row["method"] == "time-quadrature-of-mc" and float(row["std_error"]) > 0


def test_optimal_command(capsys, tmp_path):
    cfg = {"claims": {"alpha": 2.0}, "market": {"rate": 0.05, "assets": [{"model": "gbm", "mu": 0.1, "sigma": 0.2}]},
           "family": [[0.0], [0.2], "asymptotically-optimal", [0.8]]}
    _, out, _ = run_cli(["optimal", "--config", write_config(tmp_path, cfg)], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert float(rows[0]["pi"]) == pytest.approx(0.41667, abs=1e-5)
    from ruinlab.asymptotics import reduction_ratio

    assert float(rows[0]["ratio_to_no_investment"]) == pytest.approx(reduction_ratio(2.0, 0.05, 0.25), rel=1e-12)
    assert [r["candidate"] for r in rows if r["is_argmin"] == "true"] == ["asymptotically-optimal"]
    cfg["market"]["assets"][0]["mu"] = 0.05
    _, out, _ = run_cli(["optimal", "--config", write_config(tmp_path, cfg)], capsys)
    first = next(csv.DictReader(io.StringIO(out)))
    assert float(first["pi"]) == 0.0 and float(first["ratio_to_no_investment"]) == 1.0
    _, out, _ = run_cli(["optimal", "--preset", "gbm_optimal"], capsys)
    assert float(next(csv.DictReader(io.StringIO(out)))["ratio_to_no_investment"]) == pytest.approx(0.8528, abs=1e-3)


def test_check_command_exit_codes(capsys, tmp_path):
    code, out, _ = run_cli(["check", "--preset", "cir_check"], capsys)
    assert code == EXIT_CHECK_FAILED
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["verdict"] == "fails" and float(row["value"]) == pytest.approx(0.523, abs=1e-3)
    assert run_cli(["check", "--preset", "boundary_density"], capsys)[0] == EXIT_CHECK_FAILED
    bounded = {"claims": {"alpha": 2.0},
               "market": {"assets": [{"model": "exp_levy", "jump_rate": 1.0,
                                      "jump_law": {"kind": "uniform", "low": -0.5, "high": 0.5}}]},
               "strategy": [0.5]}
    code, out, _ = run_cli(["check", "--config", write_config(tmp_path, bounded)], capsys)
    assert code == 0
    assert {r["verdict"] for r in csv.DictReader(io.StringIO(out))} == {"holds"}


def test_out_flag_writes_file(tmp_path, capsys):
    target = tmp_path / "o.csv"
    code, out, _ = run_cli(["asymptotic", "--preset", "gbm_constant", "--out", str(target)], capsys)
    assert code == 0 and out == "" and target.read_text().startswith("eps,")


def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "ruinlab.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "converge" in proc.stdout


def _golden_output(argv, workers, capsys):
    code, out, err = run_cli(argv + ["--workers", str(workers)], capsys)
    assert code in (0, EXIT_CHECK_FAILED), err
    return out


@pytest.mark.parametrize("name,argv", GOLDEN_CASES, ids=[c[0] for c in GOLDEN_CASES])
def test_golden_files(name, argv, capsys):
    path = GOLDEN / name
    out = _golden_output(argv, 1, capsys)
    if os.environ.get("RUINLAB_REGEN_GOLDEN"):
        path.write_text(out)
    assert out == path.read_text()
