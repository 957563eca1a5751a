import sys

import pytest

from deltalog.cli import main, parse_duration_ms

from conftest import DB0_LINES, P0_TEXT


@pytest.fixture
def p0_files(tmp_path):
    rules = tmp_path / "rules.dlog"
    rules.write_text(P0_TEXT)
    data = tmp_path / "facts.tsv"
    data.write_text("\n".join(DB0_LINES) + "\n")
    return str(rules), str(data), tmp_path


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_duration_parsing():
    assert parse_duration_ms("500ms") == 500
    assert parse_duration_ms("30s") == 30000
    assert parse_duration_ms("2m") == 120000
    assert parse_duration_ms("3h") == 3 * 3600 * 1000
    assert parse_duration_ms("5") == 5000
    with pytest.raises(ValueError):
        parse_duration_ms("soon")


def test_materialize_running_example(p0_files, capsys):
    rules, data, tmp = p0_files
    out_path = tmp / "out.tsv"
    code, out, err = run_cli(
        ["materialize", "--rules", rules, "--data", data, "--output", str(out_path)],
        capsys,
    )
    assert code == 0, err
    lines = out_path.read_text().splitlines()
    assert len(lines) == 8
    assert sum(1 for l in lines if l.startswith("T\t")) == 7


def test_materialize_to_stdout(p0_files, capsys):
    rules, data, _ = p0_files
    code, out, err = run_cli(["materialize", "--rules", rules, "--data", data], capsys)
    assert code == 0
    assert len(out.splitlines()) == 8


def test_missing_rules_file(tmp_path, capsys):
    code, _, err = run_cli(["materialize", "--rules", str(tmp_path / "nope.dlog")], capsys)
    assert code == 1
    assert "error" in err


def test_rules_flag_required(capsys):
    code, _, err = run_cli(["materialize"], capsys)
    assert code == 1
    assert "--rules" in err


def test_timeout_zero_on_recursive_program(p0_files, capsys):
    rules, data, _ = p0_files
    code, _, err = run_cli(
        ["materialize", "--rules", rules, "--data", data, "--timeout", "0s"],
        capsys,
    )
    assert code == 2


def test_query_property_pattern(p0_files, capsys):
    rules, data, _ = p0_files
    code, out, _ = run_cli(
        ["query", "--rules", rules, "--data", data, "T(X,pO,Y)"], capsys
    )
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3
    assert all(l.split("\t")[2] == "pO" for l in lines)


def test_query_inverse(p0_files, capsys):
    rules, data, _ = p0_files
    code, out, _ = run_cli(
        ["query", "--rules", rules, "--data", data, "Inverse(X,Y)"], capsys
    )
    assert code == 0
    assert out.splitlines() == ["Inverse\thP\tpO"]


def test_query_no_matches(p0_files, capsys):
    rules, data, _ = p0_files
    code, out, _ = run_cli(
        ["query", "--rules", rules, "--data", data, "T(X,iO,X)"], capsys
    )
    assert code == 0
    assert out == ""


def test_query_unknown_predicate(p0_files, capsys):
    rules, data, _ = p0_files
    code, _, err = run_cli(
        ["query", "--rules", rules, "--data", data, "Unknown(X)"], capsys
    )
    assert code == 1


def test_query_edb_pattern(p0_files, capsys):
    rules, data, _ = p0_files
    code, out, _ = run_cli(
        ["query", "--rules", rules, "--data", data, "triple(X,hP,Y)"], capsys
    )
    assert code == 0
    assert len(out.splitlines()) == 2


def test_stats_output_and_summary(p0_files, capsys):
    rules, data, tmp = p0_files
    stats_path = tmp / "run.stats"
    code, _, _ = run_cli(
        [
            "materialize", "--rules", rules, "--data", data,
            "--output", str(tmp / "o.tsv"),
            "--opt", "mr,rr", "--stats", str(stats_path),
        ],
        capsys,
    )
    assert code == 0
    text = stats_path.read_text()
    assert "opt.mr.blocks_pruned" in text
    values = dict(
        line.split(" = ") for line in text.splitlines() if " = " in line
    )
    assert float(values["opt.mr.blocks_pruned"]) >= 1
    assert (tmp / "run.stats.json").exists()

    code, out, _ = run_cli(["stats", str(stats_path)], capsys)
    assert code == 0
    assert "opt.mr.blocks_pruned" in out
    # json flavor parses too
    code, out_json, _ = run_cli(["stats", str(stats_path) + ".json"], capsys)
    assert code == 0
    assert "opt.mr.blocks_pruned" in out_json


def test_no_opt_run_prunes_nothing(p0_files, capsys):
    rules, data, tmp = p0_files
    stats_path = tmp / "noopt.stats"
    code, _, _ = run_cli(
        [
            "materialize", "--rules", rules, "--data", data,
            "--output", str(tmp / "o.tsv"), "--no-opt", "--stats", str(stats_path),
        ],
        capsys,
    )
    assert code == 0
    values = dict(
        line.split(" = ")
        for line in stats_path.read_text().splitlines()
        if " = " in line
    )
    for key in ("opt.mr.blocks_pruned", "opt.rr.blocks_pruned", "opt.sub.blocks_pruned"):
        assert float(values.get(key, 0)) == 0


def test_stats_unreadable_file(tmp_path, capsys):
    code, _, err = run_cli(["stats", str(tmp_path / "missing.stats")], capsys)
    assert code == 1


def test_repeated_runs_are_byte_identical(p0_files, capsys):
    rules, data, tmp = p0_files
    out1, out2 = tmp / "a.tsv", tmp / "b.tsv"
    for path in (out1, out2):
        code, _, _ = run_cli(
            ["materialize", "--rules", rules, "--data", data, "--output", str(path)],
            capsys,
        )
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_config_file_with_flag_override(p0_files, capsys):
    rules, data, tmp = p0_files
    cfg = tmp / "run.conf"
    cfg.write_text(
        f"rules = {rules}\ndata = {data}\n# comment\nmemo = off\n"
    )
    out_path = tmp / "from_config.tsv"
    code, _, _ = run_cli(
        ["materialize", "--config", str(cfg), "--output", str(out_path)], capsys
    )
    assert code == 0
    assert len(out_path.read_text().splitlines()) == 8

    # a flag overrides the config value
    other_rules = tmp / "other.dlog"
    other_rules.write_text("p(X) :- q(X).\nq(a).\n")
    code, out, _ = run_cli(
        ["materialize", "--config", str(cfg), "--rules", str(other_rules)], capsys
    )
    assert code == 0
    assert out.splitlines() == ["p\ta"]


def test_memo_flag_round_trip(p0_files, capsys):
    rules, data, tmp = p0_files
    on_path, off_path = tmp / "memo_on.tsv", tmp / "memo_off.tsv"
    for path, flag in ((on_path, "on"), (off_path, "off")):
        code, _, _ = run_cli(
            [
                "materialize", "--rules", rules, "--data", data,
                "--memo", flag, "--memo-timeout-ms", "1000",
                "--output", str(path),
            ],
            capsys,
        )
        assert code == 0
    assert sorted(on_path.read_text().splitlines()) == sorted(
        off_path.read_text().splitlines()
    )


def test_unwritable_output_path(p0_files, capsys):
    rules, data, tmp = p0_files
    code, _, err = run_cli(
        [
            "materialize", "--rules", rules, "--data", data,
            "--output", str(tmp / "no" / "such" / "dir" / "o.tsv"),
        ],
        capsys,
    )
    assert code == 1
    assert "error" in err


def test_bad_opt_name(p0_files, capsys):
    rules, data, _ = p0_files
    code, _, err = run_cli(
        ["materialize", "--rules", rules, "--data", data, "--opt", "warp"], capsys
    )
    assert code == 1
    assert "warp" in err
