#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MEst 稳健 M 估计工具包 完整流水线

粗差污染模型下非凸 M 估计的命令行入口：
1. 数据生成 (generate) - 按粗差模型生成合成数据并导出 CSV
2. 单次求解 (solve) - 投影/近端梯度下降，输出迭代曲线
3. 可处理性探针 (probe) - 多起点求解并判断驻点唯一性
4. 模拟实验 (sweep) - 低维可处理性、低维稳健性、高维稀疏实验
5. 理论半径 (theory) - η₀、η₁、κ、推荐 λ_n 与 r_s
6. 案例研究 (casestudy) - Airfoil 数据集上的预测误差
7. 一致收敛 (uconv) - 样本梯度一致收敛趋势

退出码: 0 成功；2 配置错误；3 数据错误
"""

import sys
import math
import time
import argparse
import logging
from datetime import datetime
from pathlib import Path

import numpy as np

from Losses.loss_lib import LossSpec, InvalidLossSpecError
from Data.gross_error import (
    DesignSpec, GrossErrorSpec, OutlierMeanMode, generate, sparse_theta0, equal_theta0,
    rng_stream, STREAM_START,
)
from Data.table_io import load_table, dump_csv, TableSchema, TableParseError, ConstantColumnError
from Risk.empirical_risk import empirical_gradient
from Solvers.gradient_descent import SolverConfig, solve_pgd, solve_prox_gd, sample_start, DivergenceError
from Solvers.tractability import probe_tractability
from Theory.quadrature import UnboundedScoreError
from Theory.radii import ModelConstants, family_radii, generic_radii, high_dim_radius
from Harness.config import ConfigError, ExperimentKind, load_config, load_command_config, preset
from Harness.experiments import (
    CURVE_TABLES, run_experiment, write_outputs, write_manifest, write_frame, gaps_frame, dumps_json,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3
COMMAND_CONFIG = ("generate", "solve", "probe", "theory")


def setup_logging(verbose=False, log_file="pipeline.log"):
    """配置日志: 控制台 + 文件"""
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def print_banner():
    """打印程序横幅"""
    print("███╗   ███╗███████╗███████╗████████╗")
    print("████╗ ████║██╔════╝██╔════╝╚══██╔══╝")
    print("██╔████╔██║█████╗  ███████╗   ██║   ")
    print("██║╚██╔╝██║██╔══╝  ╚════██║   ██║   ")
    print("██║ ╚═╝ ██║███████╗███████║   ██║   ")
    print("╚═╝     ╚═╝╚══════╝╚══════╝   ╚═╝   ")
    print()
    print("MEst 稳健 M 估计工具包")
    print("粗差污染模型下的非凸 M 估计 - 完整实验流程")
    print("=" * 60)


class MEstPipeline:
    """模拟实验与案例研究流水线"""

    def __init__(self, config, output_dir=None, progress=True):
        """
        初始化实验流水线

        Args:
            config (ExperimentConfig): 实验配置
            output_dir (str): 输出目录，None 表示使用配置中的 output_dir
            progress (bool): 是否显示进度条
        """
        self.config = config if output_dir is None else config.override(output_dir=str(output_dir))
        self.output_dir = Path(self.config.output_dir)
        self.progress = progress
        self.result = None
        self.outputs = []
        self.stats = {"start_time": None, "wall_time": None}

        logger.info("初始化 MEst 实验流水线")
        logger.info(f"实验类型: {self.config.kind.value}")
        logger.info(f"输出目录: {self.output_dir}")
        logger.info(f"δ 网格: {list(self.config.delta_grid)}, α 网格: {list(self.config.alpha_grid)}")
        logger.info(f"重复次数: {self.config.replicas}, 起点个数: {self.config.starts}, 种子: {self.config.seed}")

    def step_1_check(self):
        """步骤1: 检查配置"""
        logger.info("=" * 60)
        logger.info("步骤1: 检查配置")
        logger.info("=" * 60)
        cfg = self.config
        if cfg.kind is ExperimentKind.CASESTUDY:
            if cfg.dataset_path is None:
                raise ConfigError("案例研究需要 --data 指定 Airfoil 数据文件")
            if not Path(cfg.dataset_path).exists():
                raise FileNotFoundError(f"数据文件不存在: {cfg.dataset_path}")
        else:
            cfg.design.check_radius(cfg.solver.radius)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info("✅ 步骤1完成: 配置检查")

    def step_2_run(self):
        """步骤2: 运行实验"""
        logger.info("=" * 60)
        logger.info(f"步骤2: 运行实验 {self.config.kind.value}")
        logger.info("=" * 60)
        try:
            self.result = run_experiment(self.config, progress=self.progress)
            logger.info("✅ 步骤2完成: 实验运行")
        except Exception as e:
            logger.error(f"❌ 步骤2失败: {e}")
            raise

    def step_3_write(self):
        """步骤3: 写出结果表"""
        logger.info("=" * 60)
        logger.info("步骤3: 写出结果")
        logger.info("=" * 60)
        try:
            self.outputs = write_outputs(self.result, self.output_dir, self.config.output_names)
            logger.info("✅ 步骤3完成: 结果写出")
        except Exception as e:
            logger.error(f"❌ 步骤3失败: {e}")
            raise

    def run_pipeline(self):
        """运行完整流水线"""
        start = time.perf_counter()
        self.stats["start_time"] = datetime.now()
        logger.info(f"开始执行 MEst 流水线: {self.stats['start_time']}")
        try:
            self.step_1_check()
            self.step_2_run()
            self.step_3_write()
            self.stats["wall_time"] = time.perf_counter() - start
            manifest = write_manifest(self.config, self.result, self.output_dir,
                                      self.stats["wall_time"], self.outputs)
            logger.info(f"生成运行清单: {manifest}")
            self.generate_report()
            logger.info(f"✅ 流水线执行完成! 耗时: {self.stats['wall_time']:.1f} 秒")
        except Exception as e:
            logger.error(f"❌ 流水线执行失败: {e}")
            raise
        return self.result

    def generate_report(self):
        """生成运行报告"""
        cfg = self.config
        report_path = self.output_dir / "run_report.md"
        summary_lines = "\n".join(f"- **{k}**: {v}" for k, v in self.result.summary.items()) or "- 无"
        table_sections = []
        for name, frame in self.result.frames.items():
            if name in CURVE_TABLES:
                continue
            table_sections.append(f"### {name}\n\n```\n{frame.to_string(index=False)}\n```\n")

        report_content = f"""# MEst 实验报告

## 基本信息
- **实验类型**: {cfg.kind.value}
- **输出目录**: {self.output_dir}
- **运行时间**: {self.stats['start_time'].strftime('%Y-%m-%d %H:%M:%S')}
- **耗时**: {self.stats['wall_time']:.1f} 秒
- **种子**: {cfg.seed}
- **损失族**: {cfg.family.value} (α=0 表示最小二乘)
- **δ 网格**: {list(cfg.delta_grid)}
- **α 网格**: {list(cfg.alpha_grid)}
- **重复次数 / 起点个数**: {cfg.replicas} / {cfg.starts}

## 结果摘要
{summary_lines}

## 结果表
{chr(10).join(table_sections) if table_sections else '(仅包含迭代曲线)'}

## 输出文件
{chr(10).join(f'- {Path(p).name}' for p in self.outputs)}

---
生成于: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
"""
        report_path.write_text(report_content, encoding="utf-8")
        logger.info(f"生成运行报告: {report_path}")
        return report_path


def _parse_step(value):
    if value in (None, "auto"):
        return None
    return float(value)


def _loss_from_args(args):
    alpha = args.alpha if args.alpha is not None else 0.0
    if args.family == "squared":
        return LossSpec.squared()
    return LossSpec(args.family, alpha)


def _solver_from_args(args):
    try:
        return SolverConfig(
            radius=args.radius,
            step_size=_parse_step(args.step),
            lambda_n=args.lambda_n,
            max_iters=args.max_iters,
            tol=args.tol,
            seed=args.seed,
            record_stride=args.record_stride,
            backtracking=args.backtracking,
        )
    except ValueError as e:
        raise ConfigError(f"求解器参数错误: {e}") from None


def _load_data(args):
    if args.data is None:
        raise ConfigError(f"{args.command} 需要 --data 或配置文件中的 data 字段")
    schema = TableSchema.WHITESPACE_LAST_COL_RESPONSE if args.whitespace else TableSchema.CSV_HEADER
    return load_table(args.data, schema)


def cmd_generate(args):
    """生成合成数据并导出 CSV"""
    try:
        if args.s0:
            theta0 = sparse_theta0(args.p, args.s0, args.value if args.value else 1.0 / math.sqrt(args.s0))
        else:
            theta0 = equal_theta0(args.p, args.theta_norm)
        design = DesignSpec(args.n, args.p, args.design, args.tau, theta0)
        noise = GrossErrorSpec(args.delta, args.sigma, outlier_mean_mode=args.outlier_mode,
                               outlier_constant=args.outlier_constant, outlier_sigma=args.outlier_sigma)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ds = generate(design, noise, args.seed)
    path = dump_csv(ds, args.output)
    logger.info(f"✅ 生成 n={ds.n}, p={ds.p}, 离群行 {int(ds.outlier_mask.sum())} → {path}")
    return EXIT_OK


def cmd_solve(args):
    """单起点求解"""
    ds = _load_data(args)
    spec = _loss_from_args(args)
    cfg = _solver_from_args(args)
    if args.init == "zero":
        theta_init = np.zeros(ds.p)
    else:
        theta_init = sample_start(ds.p, cfg.radius, rng_stream(cfg.seed, STREAM_START, 0))
    solver = solve_prox_gd if cfg.lambda_n > 0 else solve_pgd
    try:
        trace = solver(ds, spec, cfg, theta_init)
    except DivergenceError as e:
        logger.error(f"❌ 求解发散: {e}")
        trace = e.trace
    output_dir = Path(args.output)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_frame(trace.curve_frame(), output_dir / "solve_curve.csv")
    (output_dir / "solve_trace.json").write_text(dumps_json(trace.to_dict(), indent=2), encoding="utf-8")
    grad_norm = float(np.linalg.norm(empirical_gradient(ds, spec, trace.theta_final)))
    logger.info(f"✅ 求解完成: 迭代 {trace.iterations} 次, 收敛={trace.converged}, ‖∇R̂‖={grad_norm:.3e}")
    return EXIT_OK


def cmd_probe(args):
    """多起点可处理性探针"""
    if args.starts < 2:
        raise ConfigError(f"--starts 至少为 2: {args.starts}")
    if not args.cluster_tol > 0:
        raise ConfigError(f"--cluster-tol 必须为正: {args.cluster_tol}")
    if args.workers < 1:
        raise ConfigError(f"--workers 至少为 1: {args.workers}")
    ds = _load_data(args)
    spec = _loss_from_args(args)
    cfg = _solver_from_args(args)
    report = probe_tractability(ds, spec, cfg, args.starts, args.cluster_tol, args.workers,
                                progress=not args.quiet)
    output_dir = Path(args.output)
    output_dir.mkdir(parents=True, exist_ok=True)
    write_frame(gaps_frame({0.0: report}).drop(columns="delta"), output_dir / "probe_gaps.csv")
    (output_dir / "probe_report.json").write_text(
        dumps_json(report.to_dict(), indent=2), encoding="utf-8")
    logger.info(f"✅ 探针完成: 唯一={report.unique}, 最大距离={report.max_pairwise_gap:.3e}, "
                f"簇数 {len(report.clusters)}")
    return EXIT_OK


def cmd_theory(args):
    """打印理论半径 JSON"""
    spec = _loss_from_args(args)
    try:
        mc = ModelConstants(args.sigma, args.tau, args.r, args.gamma, args.c2, args.delta)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    radii = generic_radii(spec, mc) if args.generic else family_radii(spec, mc)
    try:
        hd = high_dim_radius(spec, mc, args.s0, args.n, args.p, args.lambda_n, args.m_bound, args.c_pi)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    record = {**radii.to_dict(), "lambda_rec": hd.lambda_rec, "r_s": hd.r_s, "c0": hd.c0, "c1": hd.c1}
    print(dumps_json(record))
    return EXIT_OK


def _experiment_config(args, kind):
    cfg = load_config(args.config, full=args.full) if args.config else preset(kind, full=args.full)
    if args.config and cfg.kind is not ExperimentKind(kind) and args.command != "sweep":
        raise ConfigError(f"配置文件类型 {cfg.kind.value} 与子命令 {args.command} 不符")
    changes = {
        "seed": args.seed,
        "output_dir": args.output,
        "workers": args.workers,
        "replicas": args.replicas,
        "starts": args.starts,
        "delta_grid": tuple(args.delta) if args.delta else None,
        "alpha_grid": tuple(args.alpha_grid) if args.alpha_grid else None,
        "dataset_path": getattr(args, "data", None),
    }
    return cfg.override(**changes)


def cmd_experiment(args):
    """运行 sweep / casestudy / uconv 实验"""
    if args.command == "sweep":
        kind = args.kind
    elif args.command == "casestudy":
        kind = ExperimentKind.CASESTUDY
    else:
        kind = ExperimentKind.UNIFORM_CONVERGENCE
    cfg = _experiment_config(args, kind)
    MEstPipeline(cfg, progress=not args.quiet).run_pipeline()
    return EXIT_OK


def _add_common(p):
    p.add_argument('--seed', type=int, default=None, help='随机种子')
    p.add_argument('--quiet', action='store_true', help='关闭进度条')
    p.add_argument('--verbose', '-v', action='store_true', help='输出调试日志')


def _add_solver_args(p):
    p.add_argument('--config', help='JSON 参数文件，命令行显式参数优先')
    p.add_argument('--data', default=None, help='数据文件 (默认 CSV 表头 y,x1,...,xp)')
    p.add_argument('--whitespace', action='store_true', help='数据为空白分隔、末列为响应的格式')
    p.add_argument('--family', choices=['squared', 'huber', 'welsch'], default='welsch', help='损失族')
    p.add_argument('--alpha', type=float, default=0.1, help='损失参数 α')
    p.add_argument('--lambda', dest='lambda_n', type=float, default=0.0, help='ℓ₁ 惩罚系数 λ_n')
    p.add_argument('--step', default='1.0', help='步长 (数值或 auto)')
    p.add_argument('--radius', type=float, default=10.0, help='约束球半径 r')
    p.add_argument('--max-iters', type=int, default=10000, help='最大迭代次数')
    p.add_argument('--tol', type=float, default=1e-8, help='迭代位移停止阈值')
    p.add_argument('--record-stride', type=int, default=1, help='轨迹记录步幅')
    p.add_argument('--backtracking', action='store_true', help='启用回溯线搜索')
    p.add_argument('--output', '-o', default='mest_output', help='输出目录')


def _add_experiment_args(p):
    p.add_argument('--config', help='JSON 实验配置文件')
    p.add_argument('--full', action='store_true', help='使用完整规模 (100 次重复、20 个起点)')
    p.add_argument('--output', '-o', default=None, help='输出目录')
    p.add_argument('--workers', type=int, default=None, help='并行线程数')
    p.add_argument('--replicas', type=int, default=None, help='重复次数')
    p.add_argument('--starts', type=int, default=None, help='起点个数')
    p.add_argument('--delta', type=float, nargs='+', default=None, help='δ 网格')
    p.add_argument('--alpha-grid', type=float, nargs='+', default=None, help='α 网格')


def build_parser():
    parser = argparse.ArgumentParser(prog='mest', description='粗差污染模型下的非凸 M 估计工具包')
    sub = parser.add_subparsers(dest='command', required=True)
    parser.commands = sub.choices

    p = sub.add_parser('generate', help='生成合成数据')
    _add_common(p)
    p.add_argument('--config', help='JSON 参数文件，命令行显式参数优先')
    p.add_argument('--n', type=int, default=200, help='样本量')
    p.add_argument('--p', type=int, default=10, help='维数')
    p.add_argument('--design', choices=['gaussian', 'uniform'], default='gaussian', help='设计分布')
    p.add_argument('--tau', type=float, default=1.0, help='设计尺度 τ')
    p.add_argument('--delta', type=float, default=0.0, help='污染比例 δ')
    p.add_argument('--sigma', type=float, default=1.0, help='正常噪声标准差 σ')
    p.add_argument('--outlier-sigma', type=float, default=3.0, help='离群噪声标准差')
    p.add_argument('--outlier-mode', choices=[m.value for m in OutlierMeanMode],
                   default=OutlierMeanMode.X_NORM_PLUS_ONE.value, help='离群噪声均值: ‖x‖+1 或常数')
    p.add_argument('--outlier-constant', type=float, default=0.0, help='constant 模式下的离群噪声均值')
    p.add_argument('--theta-norm', type=float, default=1.0, help='等值 θ₀ 的范数')
    p.add_argument('--s0', type=int, default=None, help='稀疏 θ₀ 的非零个数')
    p.add_argument('--value', type=float, default=None, help='稀疏 θ₀ 的非零值 (默认 1/√s0)')
    p.add_argument('--output', '-o', default='mest_data.csv', help='输出 CSV')
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser('solve', help='单起点求解')
    _add_common(p)
    _add_solver_args(p)
    p.add_argument('--init', choices=['zero', 'random'], default='random', help='初始点')
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser('probe', help='多起点可处理性探针')
    _add_common(p)
    _add_solver_args(p)
    p.add_argument('--starts', type=int, default=20, help='起点个数')
    p.add_argument('--cluster-tol', type=float, default=1e-3, help='聚类阈值')
    p.add_argument('--workers', type=int, default=1, help='并行线程数')
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser('sweep', help='模拟实验')
    _add_common(p)
    _add_experiment_args(p)
    p.add_argument('--kind', default=ExperimentKind.LOWDIM_TRACTABILITY.value,
                   choices=[ExperimentKind.LOWDIM_TRACTABILITY.value,
                            ExperimentKind.LOWDIM_ROBUSTNESS.value,
                            ExperimentKind.HIGHDIM.value],
                   help='实验类型')
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('casestudy', help='Airfoil 案例研究')
    _add_common(p)
    _add_experiment_args(p)
    p.add_argument('--data', required=True, help='Airfoil 格式数据文件')
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('uconv', help='一致收敛趋势检查')
    _add_common(p)
    _add_experiment_args(p)
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('theory', help='理论半径')
    _add_common(p)
    p.add_argument('--config', help='JSON 参数文件，命令行显式参数优先')
    p.add_argument('--family', choices=['huber', 'welsch'], default='welsch', help='损失族')
    p.add_argument('--alpha', type=float, default=0.1, help='损失参数 α')
    p.add_argument('--delta', type=float, default=0.0, help='污染比例 δ')
    p.add_argument('--sigma', type=float, default=1.0, help='σ')
    p.add_argument('--tau', type=float, default=1.0, help='τ')
    p.add_argument('--r', type=float, default=10.0, help='球半径 r')
    p.add_argument('--gamma', type=float, default=1.0, help='γ')
    p.add_argument('--c2', type=float, default=3.0, help='c₂')
    p.add_argument('--s0', type=int, default=10, help='稀疏度 s₀')
    p.add_argument('--n', type=int, default=200, help='样本量')
    p.add_argument('--p', type=int, default=400, help='维数')
    p.add_argument('--lambda', dest='lambda_n', type=float, default=None, help='λ_n (默认取推荐值)')
    p.add_argument('--m-bound', type=float, default=1.0, help='M')
    p.add_argument('--c-pi', type=float, default=1.0, help='C_π')
    p.add_argument('--generic', action='store_true', help='使用通用管线 (数值 H) 而非闭式公式')
    p.set_defaults(handler=cmd_theory)
    return parser


def parse_args(argv=None):
    """
    解析命令行；generate/solve/probe/theory 带 --config 时以文件内容作为该子命令的默认值再解析一次

    Returns:
        argparse.Namespace: 解析结果
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in COMMAND_CONFIG and args.config:
        allowed = set(vars(args)) - {"command", "handler", "config"}
        parser.commands[args.command].set_defaults(**load_command_config(args.config, allowed))
        args = parser.parse_args(argv)
    if args.command in ('generate', 'solve', 'probe') and args.seed is None:
        args.seed = 0
    return args


def main(argv=None):
    """主函数"""
    try:
        args = parse_args(argv)
    except ConfigError as e:
        setup_logging()
        logger.error(f"❌ 配置错误: {e}")
        return EXIT_CONFIG
    setup_logging(args.verbose)
    if args.command in ('sweep', 'casestudy', 'uconv') and not args.quiet:
        print_banner()

    try:
        return args.handler(args)
    except (ConfigError, InvalidLossSpecError, UnboundedScoreError) as e:
        logger.error(f"❌ 配置错误: {e}")
        return EXIT_CONFIG
    except (TableParseError, ConstantColumnError, FileNotFoundError) as e:
        logger.error(f"❌ 数据错误: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
