"""
命令行入口模块
~~~~~~~~~~~~~

读取场景配置，执行对应的数值流水线，并把确定性的 JSON（以及可选的 CSV 点表）报告写到输出目录。

退出码：0 成功；2 检测到非通有实例（FAILED / NOT_* 判定，或探针命中）；1 运行错误。
"""

import argparse
import json
import sys
from typing import Any, Callable, Optional, Sequence

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from .engine.dimension import box_count, measure_zero_probe, sigma_dimension_report
from .engine.errors import ConfigError, LabError
from .engine.multipoint import estimate_df, injectivity_check, normal_crossings_check
from .engine.pareto import build_pareto_atlas, perturbation_study, simpliciality_check
from .engine.registry import ProblemRegistryEntry, list_entries
from .engine.strata import immersion_check, morse_check, whitney_umbrella_check
from .engine.thresholds import genericity_threshold
from .engine.transversality import classify_family_point, defect_family_sup, sample_sigma
from .models.reports import ScenarioReport
from .models.scenario import ScenarioConfig
from .models.validators import TolPolicy
from .utils.logger import get_engine_logger
from .utils.problem_loader import ProblemResolver
from .utils.report_writer import ReportWriterFactory
from .utils.task_manager import TaskQueueManager, get_task_manager

logger = get_engine_logger("cli")

NON_GENERIC_VERDICTS = frozenset({
    "FAILED", "NOT_MORSE", "NOT_IMMERSION", "NOT_NORMAL_CROSSINGS", "NOT_INJECTIVE", "NOT_UMBRELLA",
    "HITS_FOUND",
})


class _Run:
    """一次场景执行的上下文：已解析的问题、线程池与秩策略"""

    def __init__(self, config: ScenarioConfig, entry: Optional[ProblemRegistryEntry]):
        self.config = config
        self.entry = entry
        self.manager = TaskQueueManager(config.workers) if config.workers else get_task_manager()
        self.policy = TolPolicy.scaled(config.rank_tol, 1.0) if config.rank_tol else None
        self.point_policy = TolPolicy.relative(config.rank_tol) if config.rank_tol else None

    def require(self, name: str):
        value = getattr(self.config, name)
        if value is None:
            raise ConfigError(f"命令 {self.config.command} 需要 {name}")
        return value

    def parameters(self) -> Optional[list[float]]:
        """映射问题的参数；未给出时取零"""
        if self.config.a is not None:
            return self.config.a
        return [0.0] * self.entry.arity_a if self.entry.arity_a else None

    def budget(self, default: int) -> int:
        return self.config.budget or default


def _defect(run: _Run):
    c = run.config
    return defect_family_sup(run.entry.family(), c.search, c.budget, c.seed, run.point_policy), None


def _classify(run: _Run):
    report = classify_family_point(run.entry.family(), run.require("x"), run.require("a"), run.point_policy)
    return report, report.classification.value


def _sigma_sample(run: _Run):
    c = run.config
    return sample_sigma(run.entry.family(), run.budget(1000), c.seed, c.refine, c.search,
                        manager=run.manager, policy=run.policy), None


def _sigma_dim(run: _Run):
    c = run.config
    return sigma_dimension_report(run.entry.family(), run.budget(1000), c.seed, c.scale_spec, c.search,
                                  c.refine, run.manager), None


def _threshold(run: _Run):
    bound = genericity_threshold(run.config.query)
    return bound, None


def _morse(run: _Run):
    c = run.config
    report = morse_check(run.entry.mapping(), run.entry.x_box, c.budget, c.seed, run.parameters(), run.manager)
    return report, report.verdict


def _immersion(run: _Run):
    report = immersion_check(run.entry.mapping(), run.entry.x_box, run.budget(256), run.config.seed,
                             run.parameters(), policy=run.policy, manager=run.manager)
    return report, report.verdict


def _umbrella(run: _Run):
    x = run.config.x if run.config.x is not None else run.entry.metadata.get("point")
    if x is None:
        raise ConfigError("umbrella 命令需要 x")
    report = whitney_umbrella_check(run.entry.mapping(), x, run.parameters())
    return report, "UMBRELLA" if report.is_umbrella else "NOT_UMBRELLA"


def _normal_crossings(run: _Run):
    c = run.config
    report = normal_crossings_check(run.entry.mapping(), run.entry.x_box, c.d_max, run.budget(64), c.seed,
                                    run.parameters(), manager=run.manager)
    return report, report.verdict


def _injectivity(run: _Run):
    report = injectivity_check(run.entry.mapping(), run.entry.x_box, run.budget(64), run.config.seed,
                               run.parameters(), run.manager)
    return report, report.verdict


def _df_estimate(run: _Run):
    return estimate_df(run.entry.mapping(), run.entry.x_box, run.budget(10000), run.config.seed,
                       run.parameters(), policy=run.policy, manager=run.manager), None


def _boxdim(run: _Run):
    return box_count(run.entry.points(), run.config.scale_spec, run.manager), None


def _pareto_atlas(run: _Run):
    problem = run.entry.multiobjective(run.config.a)
    return build_pareto_atlas(problem, run.config.resolution, run.manager), None


def _simpliciality(run: _Run):
    c = run.config
    problem = run.entry.multiobjective(c.a)
    atlas = build_pareto_atlas(problem, c.resolution, run.manager)
    report = simpliciality_check(problem, atlas, seed=c.seed, policy=run.policy, manager=run.manager)
    return report, report.verdict


def _perturb_study(run: _Run):
    c = run.config
    problem = run.entry.multiobjective(c.a)
    return perturbation_study(problem, c.perturbation_scale, c.trials or 100, c.seed, run.budget(64),
                              c.resolution, c.targeted, run.manager), None


def _measure_zero_probe(run: _Run):
    c = run.config
    result = measure_zero_probe(run.entry.family(), c.trials or 1000, c.seed, c.search, run.manager)
    return result, "HITS_FOUND" if result.hit_count else "NO_HITS"


_PIPELINES: dict[str, Callable[[_Run], tuple[BaseModel, Optional[str]]]] = {
    "defect": _defect,
    "classify": _classify,
    "sigma-sample": _sigma_sample,
    "sigma-dim": _sigma_dim,
    "threshold": _threshold,
    "morse": _morse,
    "immersion": _immersion,
    "umbrella": _umbrella,
    "normal-crossings": _normal_crossings,
    "injectivity": _injectivity,
    "df-estimate": _df_estimate,
    "boxdim": _boxdim,
    "pareto-atlas": _pareto_atlas,
    "simpliciality": _simpliciality,
    "perturb-study": _perturb_study,
    "measure-zero-probe": _measure_zero_probe,
}


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    """
    执行场景配置指定的流水线

    Returns:
        ScenarioReport，不含时间戳等非确定性字段

    Raises:
        LabError: 问题解析或数值计算失败
    """
    entry = ProblemResolver().resolve(config)
    logger.service_info("开始执行场景", extra_fields={
        "command": config.command, "problem": entry.name if entry else None, "seed": config.seed
    })
    run = _Run(config, entry)
    try:
        result, verdict = _PIPELINES[config.command](run)
    except LabError as e:
        logger.service_error(f"场景执行失败: {e}", extra_fields={"command": config.command, **e.context},
                             exc_info=e)
        raise
    logger.debug_info("任务队列统计", extra_fields={"command": config.command, **run.manager.get_queue_stats()})
    payload = result.model_dump(mode="json")
    if config.command == "threshold":
        payload.update(value=str(result.value), text=result.text)
    report = ScenarioReport(command=config.command, problem=entry.name if entry else None,
                            seed=config.seed, verdict=verdict, result=payload)
    logger.service_info("场景执行完成", extra_fields={"command": config.command, "verdict": verdict})
    return report


def list_problems() -> list[dict[str, Any]]:
    """注册表条目列表（名称、类型、说明、锚定短语）"""
    return [entry.listing() for entry in list_entries()]


def emit_report(report: ScenarioReport, out_dir: str, fmt: str = "json") -> list[str]:
    stem = report.command if report.problem is None else f"{report.command}_{report.problem}"
    return ReportWriterFactory.create_writer(fmt).write(report, out_dir, stem)


def exit_code(report: ScenarioReport) -> int:
    return 2 if report.verdict in NON_GENERIC_VERDICTS else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="translab", description="横截缺陷数值实验室")
    parser.add_argument("--config", help="场景配置 JSON 文件")
    parser.add_argument("--seed", type=int, help="覆盖配置中的随机种子")
    parser.add_argument("--out", help="报告输出目录")
    parser.add_argument("--format", choices=["json", "csv"], help="输出格式")
    parser.add_argument("--budget", type=int, help="采样/多起点预算")
    parser.add_argument("--tol", type=float, help="秩容差 τ")
    parser.add_argument("--workers", type=int, help="工作线程数，覆盖 ENGINE_WORKERS")
    parser.add_argument("--list-problems", action="store_true", help="列出注册表中的问题")
    parser.add_argument("--print-schema", action="store_true", help="输出场景配置的 JSON Schema")
    return parser


def load_config(args: argparse.Namespace) -> ScenarioConfig:
    """
    读取配置文件并套用命令行覆盖项

    Raises:
        ConfigError: 文件不是合法 JSON
        ValidationError: 配置不满足模型约束
    """
    with open(args.config, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"配置文件不是合法 JSON: {e}", {"path": args.config}) from e
    overrides = {"seed": args.seed, "out_dir": args.out, "format": args.format, "budget": args.budget,
                 "rank_tol": args.tol, "workers": args.workers}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.model_validate(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(override=False)
    args = build_parser().parse_args(argv)
    if args.list_problems:
        print(json.dumps(list_problems(), ensure_ascii=False, indent=2))
        return 0
    if args.print_schema:
        print(json.dumps(ScenarioConfig.model_json_schema(), ensure_ascii=False, indent=2))
        return 0
    if not args.config:
        print("错误: 需要 --config（或使用 --list-problems / --print-schema）", file=sys.stderr)
        return 1
    try:
        config = load_config(args)
        report = run_scenario(config)
        paths = emit_report(report, config.out_dir, config.format)
    except (LabError, ValidationError, OSError) as e:
        print(f"错误: {e}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
