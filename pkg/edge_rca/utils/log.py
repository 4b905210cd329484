import logging

from rich.console import Console
from rich.logging import RichHandler

# Shared console for operator-facing summaries (tables, panels).
console = Console()
err_console = Console(stderr=True)


def setup_logging(level: str = "INFO") -> None:
    """Route every `edge_rca.*` logger through a single RichHandler on stderr."""
    root = logging.getLogger("edge_rca")
    root.handlers.clear()
    handler = RichHandler(console=err_console, show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level.upper())
    root.propagate = False
