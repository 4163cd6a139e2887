"""
Report Service
Multi-seed summaries, gain percentages, Welch t-tests and tuning-curve exports
"""
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from scipy import stats  # noqa: E402

from app.core.exceptions import ConfigError, PipelineError  # noqa: E402
from app.schemas.control import ControlReport  # noqa: E402
from app.schemas.report import ComparisonRow, ControlRow, RunSummary, WelchResult  # noqa: E402
from app.schemas.tuning import TuningTrace  # noqa: E402
from app.services.artifact_service import ArtifactService  # noqa: E402
from app.services.tuner_service import TunerService  # noqa: E402

logger = logging.getLogger(__name__)

ALPHA = 0.1
GAIN_DECIMALS = 4


def portfolio_size_of(method: str) -> int:
    """pure_bo -> 0, portfolio_10 -> 10"""
    if method == "pure_bo":
        return 0
    if method.startswith("portfolio_"):
        return int(method.split("_", 1)[1])
    raise ConfigError(f"Unknown method tag '{method}'")


class ReportService:
    # -- statistics ----------------------------------------------------------

    @staticmethod
    def gain_percent(baseline_mean: float, method_mean: float) -> float:
        if not baseline_mean > 0:
            raise ConfigError(f"baseline mean must be > 0, got {baseline_mean}")
        return round(100.0 * (baseline_mean - method_mean) / baseline_mean, GAIN_DECIMALS)

    @staticmethod
    def welch_t_test(a: Sequence[float], b: Sequence[float], alpha: float = ALPHA) -> WelchResult:
        """Two-sided unequal-variance t-test with Welch-Satterthwaite degrees of freedom"""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.size < 2 or b.size < 2:
            raise ConfigError("Welch t-test needs at least two samples per group")
        va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
        se2 = va + vb
        diff = a.mean() - b.mean()
        if se2 == 0:
            if diff == 0:
                return WelchResult(t=0.0, p=1.0, df=float(a.size + b.size - 2), significant=False)
            return WelchResult(t=math.copysign(math.inf, diff), p=0.0, df=float(a.size + b.size - 2), significant=True)
        t = diff / math.sqrt(se2)
        df = se2 ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
        p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
        return WelchResult(t=float(t), p=p, df=float(df), significant=p < alpha)

    @staticmethod
    def summarize(traces: Sequence[TuningTrace]) -> RunSummary:
        if not traces:
            raise ConfigError("summarize needs at least one trace")
        methods = {t.method for t in traces}
        if len(methods) > 1:
            raise ConfigError(f"cannot summarize mixed methods: {sorted(methods)}")
        datasets = {t.dataset_id for t in traces}
        if len(datasets) > 1:
            raise ConfigError(f"cannot summarize mixed datasets: {sorted(str(d) for d in datasets)}")

        ordered = sorted(traces, key=lambda t: t.seed)
        finished = [t for t in ordered if t.incumbent_score is not None]
        if len(finished) < len(ordered):
            logger.warning(f"{len(ordered) - len(finished)} runs without any successful evaluation are excluded")
        if not finished:
            raise ConfigError("no run in this group produced a score")
        scores = [float(t.incumbent_score) for t in finished]
        return RunSummary(
            dataset_id=str(ordered[0].dataset_id),
            method=ordered[0].method,
            scores=scores,
            seeds=[t.seed for t in finished],
            mean=float(np.mean(scores)),
            std=float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0,
        )

    def compare(self, baseline: RunSummary, method: RunSummary, alpha: float = ALPHA) -> ComparisonRow:
        welch = None
        if len(baseline.scores) >= 2 and len(method.scores) >= 2:
            welch = self.welch_t_test(baseline.scores, method.scores, alpha)
        return ComparisonRow(
            dataset_id=baseline.dataset_id,
            baseline=baseline,
            method=method,
            gain=self.gain_percent(baseline.mean, method.mean),
            welch=welch,
        )

    # -- traces on disk ------------------------------------------------------

    @staticmethod
    def load_traces(directory: Union[str, Path]) -> List[TuningTrace]:
        directory = Path(directory)
        return [TunerService.read_trace(p) for p in sorted(directory.rglob("trace.jsonl"))]

    @staticmethod
    def group_traces(traces: Iterable[TuningTrace]) -> Dict[Tuple[str, str], List[TuningTrace]]:
        groups: Dict[Tuple[str, str], List[TuningTrace]] = defaultdict(list)
        for trace in traces:
            groups[(str(trace.dataset_id), trace.method)].append(trace)
        return dict(sorted(groups.items()))

    # -- tables --------------------------------------------------------------

    def comparison_rows(self, traces: Sequence[TuningTrace], alpha: float = ALPHA) -> List[ComparisonRow]:
        """Pure BO against every portfolio method, per dataset"""
        groups = self.group_traces(traces)
        rows = []
        for (dataset_id, method), group in groups.items():
            if method == "pure_bo" or (dataset_id, "pure_bo") not in groups:
                continue
            baseline = self.summarize(groups[(dataset_id, "pure_bo")])
            rows.append(self.compare(baseline, self.summarize(group), alpha))
        return rows

    @staticmethod
    def comparison_frame(rows: Sequence[ComparisonRow]) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "dataset": r.dataset_id,
                    "method": r.method.method,
                    "bo_mean": r.baseline.mean,
                    "bo_std": r.baseline.std,
                    "portfolio_mean": r.method.mean,
                    "portfolio_std": r.method.std,
                    "gain_percent": r.gain,
                    "p_value": r.welch.p if r.welch else None,
                    "significant": r.star,
                }
                for r in rows
            ],
            columns=[
                "dataset", "method", "bo_mean", "bo_std", "portfolio_mean", "portfolio_std",
                "gain_percent", "p_value", "significant",
            ],
        )

    def size_frame(self, traces: Sequence[TuningTrace]) -> pd.DataFrame:
        """Per dataset: mean/std and gain for every portfolio size, best size marked"""
        groups = self.group_traces(traces)
        records = []
        for dataset_id in sorted({d for d, _ in groups}):
            if (dataset_id, "pure_bo") not in groups:
                continue
            baseline = self.summarize(groups[(dataset_id, "pure_bo")])
            sized = sorted(
                ((portfolio_size_of(m), self.summarize(g)) for (d, m), g in groups.items() if d == dataset_id),
                key=lambda item: item[0],
            )
            gains = {size: self.gain_percent(baseline.mean, s.mean) for size, s in sized if size > 0}
            best_size = max(gains, key=lambda size: (gains[size], -size)) if gains else None
            for size, summary in sized:
                records.append(
                    {
                        "dataset": dataset_id,
                        "size": size,
                        "mean": summary.mean,
                        "std": summary.std,
                        "gain_percent": gains.get(size, 0.0),
                        "best": "*" if size == best_size else "",
                    }
                )
        return pd.DataFrame(records, columns=["dataset", "size", "mean", "std", "gain_percent", "best"])

    def control_rows(self, reports: Sequence[ControlReport], alpha: float = ALPHA) -> List[ControlRow]:
        """Mean control score per portfolio size, gain against size 0"""
        by_size: Dict[int, List[float]] = defaultdict(list)
        for report in reports:
            by_size[portfolio_size_of(report.method or "pure_bo")].append(report.score)
        rows = []
        baseline = by_size.get(0)
        for size in sorted(by_size):
            scores = by_size[size]
            mean = float(np.mean(scores))
            std = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
            gain = p = None
            if size > 0 and baseline and np.mean(baseline) > 0:
                gain = self.gain_percent(float(np.mean(baseline)), mean)
                if len(baseline) >= 2 and len(scores) >= 2:
                    p = self.welch_t_test(baseline, scores, alpha).p
            rows.append(ControlRow(size=size, scores=scores, mean=mean, std=std, gain=gain, p=p))
        return rows

    @staticmethod
    def control_frame(rows: Sequence[ControlRow]) -> pd.DataFrame:
        return pd.DataFrame(
            [{"size": r.size, "mean_score": r.mean, "std": r.std, "gain_percent": r.gain, "p_value": r.p} for r in rows],
            columns=["size", "mean_score", "std", "gain_percent", "p_value"],
        )

    @staticmethod
    def write_table(frame: pd.DataFrame, path: Union[str, Path], fmt: str = "table") -> Path:
        """Delimited text (csv) or a human-readable aligned table"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            if fmt == "csv":
                frame.to_csv(path, index=False, float_format="%.6g", lineterminator="\n")
            else:
                text = frame.to_string(index=False, float_format=lambda v: f"{v:.4f}", na_rep="-")
                path.write_text(text + "\n", encoding="utf-8")
        except OSError as e:
            raise PipelineError(f"Cannot write {path}: {e}") from e
        return path

    # -- curves --------------------------------------------------------------

    @staticmethod
    def curve_frame(traces: Sequence[TuningTrace]) -> pd.DataFrame:
        if not traces:
            raise ConfigError("export_curves needs at least one trace")
        length = max(len(t.entries) for t in traces)
        frame = pd.DataFrame({"iteration": np.arange(1, length + 1)})
        for trace in sorted(traces, key=lambda t: t.seed):
            curve = [trace.incumbent_at(i) for i in range(1, length + 1)]
            frame[f"seed_{trace.seed}"] = [np.nan if v is None else v for v in curve]
        seeds = frame.drop(columns="iteration")
        frame["median"] = seeds.median(axis=1)
        frame["best"] = seeds.min(axis=1)
        return frame

    def export_curves(
        self,
        traces: Sequence[TuningTrace],
        path: Union[str, Path],
        plot_path: Optional[Union[str, Path]] = None,
        title: Optional[str] = None,
    ) -> Path:
        frame = self.curve_frame(traces)
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
        except OSError as e:
            raise PipelineError(f"Cannot write {path}: {e}") from e
        if plot_path is not None:
            self.plot_curves(frame, plot_path, title=title)
        return path

    @staticmethod
    def plot_curves(frame: pd.DataFrame, path: Union[str, Path], title: Optional[str] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig, ax = plt.subplots(figsize=(6, 4))
        for column in frame.columns:
            if column.startswith("seed_"):
                ax.plot(frame["iteration"], frame[column], color="0.75", linewidth=0.8)
        ax.plot(frame["iteration"], frame["median"], color="tab:blue", linewidth=2, label="median")
        ax.plot(frame["iteration"], frame["best"], color="tab:orange", linewidth=2, label="best")
        ax.set_xlabel("iteration")
        ax.set_ylabel("incumbent RMSE")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return path

    # -- whole directories ---------------------------------------------------

    def report_directory(self, directory: Union[str, Path], fmt: str = "table", plot: bool = False) -> List[Path]:
        """Tables and curves for every trace and control result under `directory`"""
        directory = Path(directory)
        out_dir = directory / "report"
        suffix = "csv" if fmt == "csv" else "txt"
        written: List[Path] = []

        traces = self.load_traces(directory)
        if traces:
            rows = self.comparison_rows(traces)
            written.append(self.write_table(self.comparison_frame(rows), out_dir / f"table.{suffix}", fmt))
            written.append(self.write_table(self.size_frame(traces), out_dir / f"sizes.{suffix}", fmt))
            for (dataset_id, method), group in self.group_traces(traces).items():
                plot_path = out_dir / "curves" / f"{dataset_id}_{method}.png" if plot else None
                written.append(
                    self.export_curves(
                        group,
                        out_dir / "curves" / f"{dataset_id}_{method}.csv",
                        plot_path=plot_path,
                        title=f"{dataset_id} ({method})",
                    )
                )

        control_reports = [
            ControlReport.model_validate(record)
            for path in sorted(directory.rglob("control_results.jsonl"))
            for record in ArtifactService.read_jsonl(path)
        ]
        if control_reports:
            frame = self.control_frame(self.control_rows(control_reports))
            written.append(self.write_table(frame, out_dir / f"control.{suffix}", fmt))

        if not written:
            logger.warning(f"Nothing to report under {directory}")
        else:
            logger.info(f"Wrote {len(written)} report files to {out_dir}")
        return written
