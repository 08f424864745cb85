import json
import math
import xml.etree.ElementTree as ET

import pytest

from otlab.errors import InvalidSpecError, MissingArtifactError, NothingToReportError
from otlab.lab import svg
from otlab.lab.cli import main
from otlab.lab.config import (PRESETS, canonical_json, load_config, scenario_hash, solve_key,
                              sweep_configs)
from otlab.lab.report import emit_report, observed_orders
from otlab.lab.runner import Runner, read_csv, read_mask, write_csv

BOX = [[-1.25, -1.25], [1.25, 1.25]]


def tiny(name="tiny", **experiment):
    """Identity scenario small enough for a unit test: 8x8 atoms, 32x32 grid."""
    ex = {"seed": 0, "samples": 6, "h_list": [0.02, 0.05], "K_levels": 1, "boundary_h0": 0.1,
          "boundary_samples": 20, "K_bands": 2, "p": [1, 2],
          "X_domain": {"kind": "ball", "center": [0, 0], "radius": 1}}
    ex.update(experiment)
    side = {"domain": {"box": BOX}, "density": {"kind": "uniform-box", "box": BOX}}
    return {"schema_version": 1, "name": name, "dimension": 2, "source": side, "target": side,
            "cost": {"kind": "quadratic-bilinear"},
            "grid": {"n_atoms": 64, "eval_resolution": 32, "hessian_step": 0.3125},
            "experiment": ex}


def write_config(tmp_path, cfg):
    path = tmp_path / f"{cfg['name']}.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


# -- config ---------------------------------------------------------------------

@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    cfg = load_config(name)
    assert cfg["schema_version"] == 1
    assert isinstance(cfg["grid"]["eval_resolution"], list)


def test_unknown_keys_are_rejected():
    cfg = tiny()
    cfg["grid"]["colour"] = "blue"
    with pytest.raises(InvalidSpecError, match="grid"):
        load_config(cfg)


def test_schema_version_is_checked():
    cfg = tiny()
    cfg["schema_version"] = 2
    with pytest.raises(InvalidSpecError):
        load_config(cfg)


def test_hash_ignores_key_order_and_float_spelling():
    a = load_config(tiny())
    b = json.loads(json.dumps(a), object_pairs_hook=lambda kv: dict(reversed(kv)))
    b["experiment"]["M"] = 4  # 4.0 in the defaults
    assert scenario_hash(a) == scenario_hash(b)
    assert canonical_json({"x": 1.0, "a": [2.5]}) == '{"a":[2.5],"x":1}'


def test_solve_key_ignores_analysis_parameters():
    a = load_config(tiny())
    b = load_config(tiny(M=9.0))
    assert solve_key(a) == solve_key(b)
    assert scenario_hash(a) != scenario_hash(b)


def test_sweep_expands_delta():
    labels = [lab for lab, _ in sweep_configs(load_config("E2"))]
    assert labels == ["delta=0", "delta=0.02", "delta=0.05"]


# -- cli -----------------------------------------------------------------------------

def test_analysis_before_solve_is_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, tiny())
    assert main(["w2p", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["operation"] == "w2p"
    assert "lab solve" in err["message"]


def test_report_on_empty_dir_is_exit_2(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 2
    with pytest.raises(NothingToReportError):
        emit_report(tmp_path)


def test_invalid_config_is_exit_2(tmp_path):
    bad = tiny()
    bad["cost"]["kind"] = "nope"
    assert main(["solve", "--config", write_config(tmp_path, bad), "--out", str(tmp_path)]) == 2


def test_numerical_failure_is_exit_3(tmp_path, capsys):
    cfg = tiny()
    cfg["solver"] = {"method": "entropic", "epsilon": 1e-3, "max_iter": 2}
    assert main(["solve", "--config", write_config(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "IterationLimitError" and err["operation"] == "solve"
    assert (tmp_path / "tiny" / "error.json").exists()


def test_lab_out_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("LAB_OUT", str(tmp_path / "env"))
    cfg = write_config(tmp_path, tiny())
    assert main(["check-cost", "--config", cfg, "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "tiny" / "check-cost" / "conditions.json").exists()
    assert not (tmp_path / "flag").exists()


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("lab")
    cfg = write_config(root, tiny())
    codes = {c: main([c, "--config", cfg, "--out", str(root / "out")])
             for c in ("check-cost", "solve", "sections", "engulf", "decay", "w2p", "singular",
                       "boundary", "report")}
    return root / "out" / "tiny", codes, cfg


def test_every_subcommand_succeeds(full_run):
    _, codes, _ = full_run
    assert codes == dict.fromkeys(codes, 0)


def test_solve_summary_has_zero_gap(full_run):
    run, _, _ = full_run
    summary = json.loads((run / "solve" / "summary.json").read_text(encoding="utf-8"))
    assert abs(summary["base"]["gap"]) <= 1e-8


def test_csv_format(full_run):
    run, _, _ = full_run
    for path in run.rglob("*.csv"):
        data = path.read_bytes()
        assert b"\r" not in data and data.endswith(b"\n")
        head, _ = read_csv(path)
        assert head and all(head)


def test_identity_w2p_is_pi(full_run):
    run, _, _ = full_run
    head, rows = read_csv(run / "w2p" / "w2p.csv")
    for r in rows:
        assert float(r[head.index("direct")]) == pytest.approx(math.pi, rel=0.03)
        assert float(r[head.index("layer_cake_bound")]) >= float(r[head.index("direct")])


def test_singular_outputs(full_run):
    run, _, _ = full_run
    mask, header = read_mask(run / "singular" / "mask_r32.txt")
    assert mask.shape == (32, 32) and header["shape"] == [32, 32]
    assert not mask.any()  # identity case has no singular set
    ET.fromstring((run / "singular" / "overlay_r32.svg").read_text(encoding="utf-8"))


def test_solve_is_cached_unless_forced(full_run):
    run, _, cfg = full_run
    out = run.parent
    before = (run / "solves").stat().st_mtime_ns
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    art = json.loads((run / "solve" / "artifact.json").read_text(encoding="utf-8"))
    assert not any(k.startswith("solve:") for k in art["wall_clock"])
    assert main(["solve", "--config", cfg, "--out", str(out), "--force"]) == 0
    art = json.loads((run / "solve" / "artifact.json").read_text(encoding="utf-8"))
    assert any(k.startswith("solve:") for k in art["wall_clock"])
    assert (run / "solves").stat().st_mtime_ns >= before


def test_report_outputs(full_run):
    run, _, _ = full_run
    summary = json.loads((run / "report" / "summary.json").read_text(encoding="utf-8"))
    assert "w2p/w2p.csv" in summary["files"]
    for name in ("decay.svg", "w2p_vs_p.svg", "singular.svg", "boundary.svg"):
        ET.fromstring((run / "report" / name).read_text(encoding="utf-8"))


def test_runner_requires_solve(tmp_path):
    with pytest.raises(MissingArtifactError):
        Runner(load_config(tiny()), tmp_path).run("decay")


# -- report pieces ------------------------------------------------------------------

def test_observed_order_of_second_order_sequence():
    h = [0.1, 0.05, 0.025]
    v = [math.pi + 3 * s ** 2 for s in h]
    assert observed_orders(h, v)[0] == pytest.approx(2.0, abs=1e-9)


def test_convergence_table_from_three_resolutions(tmp_path):
    rows = [["", res, 2.0 / res, 0.1, 2.0, math.pi + 5.0 / res ** 2, 4.0, 3.0, 0]
            for res in (32, 64, 128)]
    write_csv(tmp_path / "w2p" / "w2p.csv",
              ["label", "resolution", "spacing", "step", "p", "direct", "layer_cake_bound",
               "region_measure", "dropped_cells"], rows)
    emit_report(tmp_path)
    head, out = read_csv(tmp_path / "report" / "convergence.csv")
    orders = [r[head.index("observed_order")] for r in out]
    assert orders[:2] == ["", ""]
    assert float(orders[2]) == pytest.approx(2.0, abs=1e-9)


def test_decay_plot_has_one_polyline_per_delta(tmp_path):
    for d in ("delta=0", "delta=0.02", "delta=0.05"):
        write_csv(tmp_path / "decay" / f"decay_{d}.csv",
                  ["k", "rho_k", "measure", "ratio", "sections_selected", "mean_bad_fraction"],
                  [[0, 0.8, 1.0, 0.1, 1, 0.0], [1, 0.7, 0.1, "", 0, ""]])
    emit_report(tmp_path)
    root = ET.fromstring((tmp_path / "report" / "decay.svg").read_text(encoding="utf-8"))
    lines = root.findall("{http://www.w3.org/2000/svg}polyline")
    assert len(lines) == 3


def test_svg_line_plot_skips_bad_points():
    text = svg.line_plot([("a", [1, 2, 3], [1.0, float("nan"), 0.0])], log_y=True)
    root = ET.fromstring(text)
    # one finite positive point: no polyline segment to draw besides the single point
    pts = root.findall("{http://www.w3.org/2000/svg}polyline")[0].get("points").split()
    assert len(pts) == 1
