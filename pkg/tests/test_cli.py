"""
命令行入口测试
~~~~~~~~~~~~~

场景执行、报告输出与退出码。
"""

import json

import pytest
from pydantic import ValidationError

from app import main as main_module
from app.engine.errors import ConfigError
from app.main import emit_report, exit_code, list_problems, main, run_scenario
from app.models.scenario import ScenarioConfig
from app.utils.logger import NullLogger
from app.utils.report_writer import JsonReportWriter


class RecordingLogger(NullLogger):
    def __init__(self):
        self.debug_records = []

    def debug_info(self, message, extra_fields=None) -> None:
        self.debug_records.append((message, extra_fields or {}))


def write_config(tmp_path, **data):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_classify_scenario():
    print("=== 测试 classify 场景 ===")
    report = run_scenario(ScenarioConfig(command="classify", problem="ex-2-2", x=[0.0], a=[0.0, 0.0]))
    assert report.verdict == "IN_W"
    assert report.result["delta_section"] == 2 and report.result["delta_family"] == 2
    assert exit_code(report) == 0


def test_threshold_scenario():
    """threshold 报告带有精确有理数与可读文本"""
    config = ScenarioConfig(command="threshold", query={"kind": "morse", "m": 1, "r": 2})
    report = run_scenario(config)
    assert report.problem is None
    assert report.result["value"] == "1"
    assert report.result["text"] == "s ≥ 1"
    assert report.result["strict"] is False


def test_inline_problem():
    """内联定义的族与注册表条目等价"""
    config = ScenarioConfig(command="classify", x=[-0.3], a=[0.3, 0.3], problem={
        "kind": "family", "source": "[x1 + a1, x1 + a2]", "arity_x": 1, "arity_a": 2, "z_source": "[x1, x2]",
    })
    report = run_scenario(config)
    assert report.problem == "inline"
    assert report.verdict == "IN_W_TILDE"


def test_config_validation():
    with pytest.raises(ValidationError):
        ScenarioConfig(command="morse", problem="morse-cubic")
    with pytest.raises(ValidationError):
        ScenarioConfig(command="threshold")
    with pytest.raises(ValidationError):
        ScenarioConfig(command="defect")
    with pytest.raises(ValidationError):
        ScenarioConfig(command="threshold", query={"kind": "jet", "m": 1})
    with pytest.raises(ConfigError):
        run_scenario(ScenarioConfig(command="defect", problem="no-such-problem"))


def test_emit_report_json_and_csv(tmp_path):
    """boxdim 的 csv 输出额外带 (epsilon, count) 点表"""
    print("\n=== 测试报告输出 ===")
    report = run_scenario(ScenarioConfig(command="boxdim", problem="cantor-depth-12", workers=2))
    paths = emit_report(report, str(tmp_path), "csv")
    assert [p.rsplit(".", 1)[-1] for p in paths] == ["json", "csv"]
    data = json.loads(open(paths[0], encoding="utf-8").read())
    assert data["command"] == "boxdim" and data["problem"] == "cantor-depth-12"
    assert abs(data["result"]["dimension"] - 0.6309) < 0.05
    lines = open(paths[1], encoding="utf-8").read().splitlines()
    assert lines[0] == "epsilon,count"
    assert len(lines) == 1 + len(data["result"]["scales"])

    assert emit_report(report, str(tmp_path / "plain")) == [str(tmp_path / "plain" / "boxdim_cantor-depth-12.json")]


def test_emit_empty_sigma_sample_csv(tmp_path):
    """Σ 为空时 csv 只有 a_1..a_p 表头"""
    report = run_scenario(ScenarioConfig(command="sigma-sample", problem="transverse-scalar", seed=0, budget=4,
                                         format="csv"))
    assert report.result["points"] == []
    paths = emit_report(report, str(tmp_path), "csv")
    assert paths[1].endswith("sigma-sample_transverse-scalar.csv")
    lines = open(paths[1], encoding="utf-8").read().splitlines()
    assert lines == ["a_1"]


def test_reports_are_byte_identical():
    """相同种子、不同线程数的报告逐字节相同"""
    first = run_scenario(ScenarioConfig(command="sigma-sample", problem="ex-2-3", seed=5, budget=40, workers=1))
    second = run_scenario(ScenarioConfig(command="sigma-sample", problem="ex-2-3", seed=5, budget=40, workers=8))
    assert JsonReportWriter.render(first) == JsonReportWriter.render(second)


def test_main_exit_codes(tmp_path):
    """通有实例退出码 0，非通有实例 2，配置错误 1"""
    print("\n=== 测试退出码 ===")
    out = str(tmp_path / "out")
    config = write_config(tmp_path, command="morse", problem="morse-cubic", a=[-3.0], seed=0, budget=32)
    assert main(["--config", config, "--out", out]) == 0

    config = write_config(tmp_path, command="morse", problem="morse-cubic", a=[0.0], seed=0, budget=64)
    assert main(["--config", config, "--out", out]) == 2

    config = write_config(tmp_path, command="morse", problem="morse-cubic")
    assert main(["--config", config, "--out", out]) == 1

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    assert main(["--config", str(broken)]) == 1
    assert main([]) == 1


def test_main_overrides(tmp_path, capsys):
    """--seed 与 --out 覆盖配置文件，stdout 只输出报告路径"""
    config = write_config(tmp_path, command="sigma-sample", problem="ex-2-3", seed=1, budget=20)
    out = tmp_path / "override"
    assert main(["--config", config, "--seed", "7", "--out", str(out), "--workers", "2"]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [str(out / "sigma-sample_ex-2-3.json")]
    assert json.loads((out / "sigma-sample_ex-2-3.json").read_text(encoding="utf-8"))["seed"] == 7


def test_list_problems_and_schema(capsys):
    assert main(["--list-problems"]) == 0
    listed = json.loads(capsys.readouterr().out)
    assert listed == list_problems()
    assert any(item["name"] == "pareto-9-1" for item in listed)

    assert main(["--print-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "command" in schema["properties"]


def test_run_scenario_logs_queue_stats(monkeypatch):
    """场景结束时记录本次线程池的批次与任务统计"""
    recorder = RecordingLogger()
    monkeypatch.setattr(main_module, "logger", recorder)
    run_scenario(ScenarioConfig(command="sigma-sample", problem="ex-2-3", seed=1, budget=20, workers=3))
    stats = [fields for message, fields in recorder.debug_records if message == "任务队列统计"]
    assert len(stats) == 1
    assert stats[0]["command"] == "sigma-sample" and stats[0]["max_workers"] == 3
    assert stats[0]["batches"] >= 1 and stats[0]["completed"] >= 1 and stats[0]["failed"] == 0
