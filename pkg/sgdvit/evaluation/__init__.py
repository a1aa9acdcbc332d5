from .metrics import (
    MetricError,
    MetricReport,
    report,
    compute_iou,
    compute_cle,
    success_curve,
    precision_curve,
)
from .reporting import write_report, write_summary, plot_curves
from .bench import TokenBenchRow, bench_tokens, write_bench
