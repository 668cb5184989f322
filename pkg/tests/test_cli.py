import json

import numpy as np
import pytest
from click.testing import CliRunner

from nrdr.cli import cli
from nrdr.schemas.report import ClassifyReport, CompareReport, DiagnoseReport, EmbedReport, PlotDataReport
from nrdr.services.datasets import gen_strip, load_csv, load_embedding_csv, save_csv
from nrdr.services.diagnostics import redundancy_scores


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def strip_csv(tmp_path, runner):
    path = tmp_path / "strip.csv"
    result = runner.invoke(cli, ["generate", "--manifold", "strip", "--n", "300", "--seed", "3", "--out", str(path)])
    assert result.exit_code == 0, result.output
    return path


def test_generate_writes_n_rows(strip_csv):
    lines = strip_csv.read_text().splitlines()
    assert lines[0] == "x0,x1,i0,i1"
    assert len(lines) == 301
    assert load_csv(strip_csv).n == 300


def test_generate_is_deterministic(tmp_path, runner, strip_csv):
    again = tmp_path / "again.csv"
    runner.invoke(cli, ["generate", "--manifold", "strip", "--n", "300", "--seed", "3", "--out", str(again)])
    assert again.read_bytes() == strip_csv.read_bytes()


def test_generate_rejects_unknown_manifold(tmp_path, runner):
    result = runner.invoke(cli, ["generate", "--manifold", "sphere", "--out", str(tmp_path / "x.csv")])
    assert result.exit_code == 2


def test_generate_patches_needs_an_image(tmp_path, runner):
    result = runner.invoke(cli, ["generate", "--manifold", "patches", "--out", str(tmp_path / "p.csv")])
    assert result.exit_code == 2

    image = tmp_path / "image.csv"
    image.write_text("\n".join(",".join(str(r * 8 + c) for c in range(8)) for r in range(8)) + "\n")
    result = runner.invoke(cli, [
        "generate", "--manifold", "patches", "--image", str(image), "--patch", "7", "--stride", "4",
        "--cover-edges", "--out", str(tmp_path / "p.csv"),
    ])
    assert result.exit_code == 0, result.output
    assert load_csv(tmp_path / "p.csv").points.shape == (4, 49)


def test_embed_writes_unit_norm_columns(tmp_path, runner, strip_csv):
    out = tmp_path / "proj.csv"
    report = tmp_path / "report.json"
    result = runner.invoke(cli, [
        "embed", "--in", str(strip_csv), "--out", str(out), "--method", "nonredundant",
        "--d", "2", "--k", "10", "--report", str(report),
    ])
    assert result.exit_code == 0, result.output
    F = load_embedding_csv(out)
    assert F.shape == (300, 2)
    np.testing.assert_allclose(np.linalg.norm(F, axis=0), 1.0, atol=1e-10)

    parsed = EmbedReport.model_validate_json(report.read_text())
    assert parsed.method == "nonredundant"
    assert parsed.d == 2
    assert len(parsed.steps) == 1


def test_embed_missing_input(tmp_path, runner):
    result = runner.invoke(cli, ["embed", "--in", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")])
    assert result.exit_code == 1
    assert "nope.csv" in result.output


def test_single_column_outputs_are_identical(tmp_path, runner, strip_csv):
    paths = {}
    for method in ("baseline", "nonredundant"):
        paths[method] = tmp_path / f"{method}.csv"
        result = runner.invoke(cli, [
            "embed", "--in", str(strip_csv), "--out", str(paths[method]),
            "--method", method, "--d", "1", "--seed", "5",
        ])
        assert result.exit_code == 0, result.output
    assert paths["baseline"].read_bytes() == paths["nonredundant"].read_bytes()


def test_nonredundant_embedding_is_reproducible(tmp_path, runner):
    ring = tmp_path / "ring.csv"
    result = runner.invoke(cli, ["generate", "--manifold", "ring", "--n", "600", "--seed", "4", "--out", str(ring)])
    assert result.exit_code == 0, result.output

    outputs = []
    for run in range(2):
        outputs.append(tmp_path / f"run{run}.csv")
        result = runner.invoke(cli, [
            "embed", "--in", str(ring), "--out", str(outputs[-1]), "--method", "nonredundant",
            "--d", "3", "--seed", "5",
        ])
        assert result.exit_code == 0, result.output
    assert outputs[0].read_bytes() == outputs[1].read_bytes()
    assert load_embedding_csv(outputs[0]).shape == (600, 3)


def test_embed_plot_data(tmp_path, runner, strip_csv):
    result = runner.invoke(cli, [
        "embed", "--in", str(strip_csv), "--out", str(tmp_path / "proj.csv"), "--method", "baseline",
        "--d", "3", "--plot-data", str(tmp_path / "plot"),
    ])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "plot.csv").exists()
    payload = PlotDataReport.model_validate_json((tmp_path / "plot.json").read_text())
    assert payload.method == "baseline"
    assert len(payload.eigenvalues) == 3
    assert len(payload.intrinsic_correlation) == 3


def test_diagnose_report(tmp_path, runner, strip_csv):
    proj = tmp_path / "proj.csv"
    runner.invoke(cli, ["embed", "--in", str(strip_csv), "--out", str(proj), "--method", "baseline", "--d", "3"])
    report_path = tmp_path / "report.json"
    result = runner.invoke(cli, [
        "diagnose", "--in", str(strip_csv), "--embedding", str(proj), "--alpha", "0.3",
        "--json", str(report_path),
    ])
    assert result.exit_code == 0, result.output
    assert "strip modes" in result.output

    report = DiagnoseReport.model_validate_json(report_path.read_text())
    assert report.strip_oracle is not None
    assert report.d == 3
    assert len(report.spearman) == 3
    expected = redundancy_scores(load_embedding_csv(proj), alpha=0.3)
    assert report.redundancy_scores == expected.tolist()


def test_diagnose_row_mismatch(tmp_path, runner, strip_csv):
    proj = tmp_path / "short.csv"
    proj.write_text("f0\n0.1\n0.2\n")
    result = runner.invoke(cli, ["diagnose", "--in", str(strip_csv), "--embedding", str(proj)])
    assert result.exit_code == 1


def test_classify_needs_a_label_column(runner, strip_csv):
    result = runner.invoke(cli, ["classify", "--in", str(strip_csv)])
    assert result.exit_code == 2
    assert "label" in result.output


def test_classify_report(tmp_path, runner, strip_csv):
    cloud = load_csv(strip_csv)
    labelled = tmp_path / "labelled.csv"
    header = strip_csv.read_text().splitlines()[0] + ",label"
    rows = [
        line + f",{int(y > 0.5)}"
        for line, y in zip(strip_csv.read_text().splitlines()[1:], cloud.intrinsic[:, 1])
    ]
    labelled.write_text("\n".join([header] + rows) + "\n")

    report_path = tmp_path / "classify.json"
    result = runner.invoke(cli, [
        "classify", "--in", str(labelled), "--d-list", "1,2", "--alpha-grid", "0.3",
        "--json", str(report_path),
    ])
    assert result.exit_code == 0, result.output
    report = ClassifyReport.model_validate_json(report_path.read_text())
    assert {(r.method, r.d) for r in report.rows} == {
        ("baseline", 1), ("baseline", 2), ("nonredundant", 1), ("nonredundant", 2),
    }


def test_classify_finds_the_short_side_of_a_labelled_strip(tmp_path, runner):
    cloud = gen_strip(2000, 2.5, 1.0, seed=11)
    cloud.labels = (cloud.intrinsic[:, 1] > 0.5).astype(int)
    labelled = tmp_path / "labelled.csv"
    save_csv(cloud, labelled)

    report_path = tmp_path / "classify.json"
    result = runner.invoke(cli, [
        "classify", "--in", str(labelled), "--d-list", "2", "--alpha-grid", "0.3",
        "--json", str(report_path),
    ])
    assert result.exit_code == 0, result.output
    report = ClassifyReport.model_validate_json(report_path.read_text())
    assert report.n == 2000
    errors = {row.method: row.test_error for row in report.rows}
    # the two leading baseline modes only see the long side
    assert errors["nonredundant"] + 0.2 < errors["baseline"]


def test_classify_rejects_bad_lists(runner, strip_csv):
    result = runner.invoke(cli, ["classify", "--in", str(strip_csv), "--d-list", "one,two"])
    assert result.exit_code == 2
    result = runner.invoke(cli, ["classify", "--in", str(strip_csv), "--methods", "pca"])
    assert result.exit_code == 2


def test_compare(tmp_path, runner, strip_csv):
    out = tmp_path / "compare.json"
    result = runner.invoke(cli, [
        "compare", "--in", str(strip_csv), "--methods", "baseline,nonredundant", "--d", "2",
        "--json", str(out),
    ])
    assert result.exit_code == 0, result.output
    report = CompareReport.model_validate_json(out.read_text())
    assert report.n == 300
    assert [row.method for row in report.rows] == ["baseline", "nonredundant"]
    assert all(row.error is None and len(row.redundancy_scores) == 2 for row in report.rows)


@pytest.mark.parametrize("report, model", [
    ("diagnose", DiagnoseReport),
    ("embed", EmbedReport),
    ("classify", ClassifyReport),
    ("compare", CompareReport),
    ("plot", PlotDataReport),
])
def test_schema(runner, report, model):
    result = runner.invoke(cli, ["schema", "--report", report])
    assert result.exit_code == 0
    assert json.loads(result.output) == model.model_json_schema()


def test_config_file_supplies_defaults(tmp_path, runner):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"generate": {"manifold": "ring", "n": 50}}))
    out = tmp_path / "ring.csv"
    result = runner.invoke(cli, ["--config", str(config), "generate", "--out", str(out)])
    assert result.exit_code == 0, result.output
    cloud = load_csv(out)
    assert cloud.points.shape == (50, 3)

    result = runner.invoke(cli, ["--config", str(config), "generate", "--n", "20", "--out", str(out)])
    assert load_csv(out).n == 20


def test_help_on_every_command(runner):
    for command in ("generate", "embed", "diagnose", "classify", "compare", "schema"):
        result = runner.invoke(cli, [command, "--help"])
        assert result.exit_code == 0
        assert "Usage" in result.output
