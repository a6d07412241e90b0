"""
Markdown summary reports for experiment directories
"""

from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd


def _mean_std(mean: float, std: float, scale: float = 1.0) -> str:
    if mean is None or not np.isfinite(mean):
        return "n/a"
    return f"{mean * scale:.3f} ± {std * scale:.3f}"


class SummaryReport:
    """Writes summary.md: one table row per method, errors as mean ± std"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def render(self, summary: pd.DataFrame, failures: Optional[Iterable[str]] = None) -> str:
        problems = ", ".join(sorted(summary["problem"].unique())) if len(summary) else "-"
        lines = [
            f"# Experiment summary: {problems}",
            "",
            "| Method | Runs | Failed | L2RE (%) | MAE |",
            "| --- | --- | --- | --- | --- |",
        ]
        for row in summary.itertuples(index=False):
            lines.append(
                f"| {row.method} | {row.runs} | {row.failed} "
                f"| {_mean_std(row.l2re_mean, row.l2re_std, 100.0)} "
                f"| {_mean_std(row.mae_mean, row.mae_std)} |"
            )
        lines.append("")

        failures = list(failures or [])
        if failures:
            lines += ["**Failed runs:**", ""]
            lines += [f"- {entry}" for entry in failures]
        else:
            lines.append("**Failed runs:** none")
        lines.append("")
        return "\n".join(lines)

    def write(self, summary: pd.DataFrame, failures: Optional[Iterable[str]] = None) -> Path:
        path = self.out_dir / "summary.md"
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.render(summary, failures))
        return path


__all__ = ["SummaryReport"]
