from collections import deque
from typing import List, Optional

from rich.console import Console
from rich.layout import Layout
from rich.live import Live
from rich.panel import Panel
from rich.table import Table

from edge_rca.utils.specs import MetricsReport


def results_table(reports: List[MetricsReport], title: str = "Benchmark results") -> Table:
    table = Table(title=title)
    for col in ("Dataset", "Method", "Noise", "PA", "RCA", "E2E", "AvgRank", "Misses", "Edges", "L1/L2/L3", "Calls"):
        table.add_column(col, justify="left" if col in ("Dataset", "Method") else "right")
    for r in reports:
        routes = "/".join(str(r.route_counts.get(t, 0)) for t in ("L1", "L2", "L3"))
        table.add_row(r.dataset, r.method, f"{r.noise:.1f}", f"{r.pa:.3f}", f"{r.rca:.3f}", f"{r.e2e:.3f}",
                      f"{r.avg_rank:.2f}", str(r.misses), f"{r.sparsity:.1f}", routes, str(r.client_calls))
    return table


class BenchmarkDashboard:
    """
    Live view of a benchmark run:
    - header with cell progress
    - the latest finished cells
    - resource footer (latency, peak RSS)
    """
    def __init__(self, total_cells: int, console: Optional[Console] = None, recent: int = 12):
        self.console = console or Console()
        self.total_cells = total_cells
        self.done: List[MetricsReport] = []
        self.recent = deque(maxlen=recent)
        self.layout = Layout()
        self.layout.split_column(
            Layout(name="header", size=3),
            Layout(name="main", ratio=1),
            Layout(name="footer", size=3),
        )
        self.live = Live(self.layout, refresh_per_second=4, console=self.console)
        self.update_display()

    def __enter__(self) -> "BenchmarkDashboard":
        self.live.start()
        return self

    def __exit__(self, *exc) -> None:
        self.live.stop()

    def on_cell(self, report: MetricsReport) -> None:
        self.done.append(report)
        self.recent.append(report)
        self.update_display()

    def update_display(self) -> None:
        self.layout["header"].update(
            Panel(f"Edge RCA benchmark | cells {len(self.done)}/{self.total_cells}", style="bold white on blue")
        )
        self.layout["main"].update(Panel(results_table(list(self.recent), "Latest cells"), title="Cells"))
        if self.done:
            last = self.done[-1]
            footer = (f"Last cell: {last.method} @ {last.noise:.1f} | "
                      f"{last.avg_latency_ms:.3f} ms/log | peak RSS {last.peak_rss_mb:.0f} MB")
        else:
            footer = "Waiting for the first cell..."
        self.layout["footer"].update(Panel(footer))
