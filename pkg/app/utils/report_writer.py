"""
报告输出模块
~~~~~~~~~~~

把场景报告写成 JSON（键排序、确定性），csv 格式时另外输出各命令固定列的点表。
"""

import csv
import json
import os
from abc import ABC, abstractmethod
from typing import Any, Optional

from ..engine.errors import ReportWriteError
from ..models.reports import ScenarioReport
from .logger import get_engine_logger

logger = get_engine_logger("report_writer")

Table = tuple[list[str], list[list[Any]]]


def _columns(prefix: str, count: int) -> list[str]:
    return [f"{prefix}_{i}" for i in range(1, count + 1)]


def csv_table(command: str, result: dict[str, Any]) -> Optional[Table]:
    """
    命令对应的点表

    sigma-sample 为 a_1..a_p，boxdim 为 (epsilon, count)，pareto-atlas 为 w、x*、f(x*)，
    perturb-study 为展平的坏扰动 pi_1..pi_{ℓm}；其他命令没有点表。
    """
    if command == "sigma-sample":
        points = result["points"]
        width = len(points[0]) if points else len(result["a_box"]["lower"])
        return _columns("a", width), points
    if command == "boxdim":
        scales = result["scales"]
        return ["epsilon", "count"], [[s["epsilon"], s["count"]] for s in scales]
    if command == "pareto-atlas":
        nodes = result["nodes"]
        if not nodes:
            return None
        header = (_columns("w", len(nodes[0]["weights"])) + _columns("x", len(nodes[0]["x_star"]))
                  + _columns("f", len(nodes[0]["values"])))
        return header, [n["weights"] + n["x_star"] + n["values"] for n in nodes]
    if command == "perturb-study":
        samples = result["bad_samples"]
        if not samples:
            return None
        return _columns("pi", len(samples[0])), samples
    return None


# --- 输出接口定义 ---
class IReportWriter(ABC):
    """报告输出接口"""

    @abstractmethod
    def write(self, report: ScenarioReport, out_dir: str, stem: str) -> list[str]:
        """
        写出报告

        Returns:
            写出的文件路径列表

        Raises:
            ReportWriteError: 目录无法创建或文件无法写入
        """
        pass


class JsonReportWriter(IReportWriter):
    """JSON 报告，相同报告得到逐字节相同的文件"""

    @staticmethod
    def render(report: ScenarioReport) -> str:
        return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def _write_text(self, path: str, text: str) -> None:
        try:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as e:
            logger.service_error(f"写报告失败: {path}", exc_info=e)
            raise ReportWriteError(f"无法写入 {path}: {e}", {"path": path}) from e

    def write(self, report: ScenarioReport, out_dir: str, stem: str) -> list[str]:
        path = os.path.join(out_dir, f"{stem}.json")
        self._write_text(path, self.render(report))
        logger.service_info("报告已写出", extra_fields={"path": path, "command": report.command})
        return [path]


class CsvReportWriter(JsonReportWriter):
    """JSON 报告加上命令对应的点表"""

    def write(self, report: ScenarioReport, out_dir: str, stem: str) -> list[str]:
        paths = super().write(report, out_dir, stem)
        table = csv_table(report.command, report.result)
        if table is None:
            logger.debug_info("该命令没有点表", extra_fields={"command": report.command})
            return paths
        header, rows = table
        path = os.path.join(out_dir, f"{stem}.csv")
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows([[repr(float(v)) if isinstance(v, float) else v for v in row] for row in rows])
        except OSError as e:
            logger.service_error(f"写点表失败: {path}", exc_info=e)
            raise ReportWriteError(f"无法写入 {path}: {e}", {"path": path}) from e
        return paths + [path]


# --- 输出工厂 ---
class ReportWriterFactory:
    """按输出格式创建报告输出实例"""

    @staticmethod
    def create_writer(fmt: str = "json") -> IReportWriter:
        if fmt == "json":
            return JsonReportWriter()
        if fmt == "csv":
            return CsvReportWriter()
        logger.service_warning(f"不支持的输出格式: '{fmt}'，改用 json")
        return JsonReportWriter()
