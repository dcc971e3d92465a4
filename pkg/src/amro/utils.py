"""
Utility functions for AMRO.
"""

import hashlib
import json
import logging
import os
from typing import Any

from rich.console import Console
from rich.logging import RichHandler

TOOL_NAME = "amro"
TOOL_VERSION = "0.1.0"
LOG_ENV_VAR = "AMRO_LOG"

console = Console()
error_console = Console(stderr=True)


def resolve_log_level(verbose: bool = False) -> int:
    """Resolve the log level from the verbose flag and the AMRO_LOG variable."""
    if verbose:
        return logging.DEBUG

    name = os.environ.get(LOG_ENV_VAR, "").strip().upper()
    level = logging.getLevelName(name) if name else logging.WARNING
    return level if isinstance(level, int) else logging.WARNING


def setup_logging(verbose: bool = False):
    """Set up logging configuration."""
    logging.basicConfig(
        level=resolve_log_level(verbose),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=error_console, show_path=False)],
        force=True,
    )


def print_success(message: str):
    """Print a success message."""
    console.print(f"✅ {message}", style="green")


def print_error(message: str):
    """Print an error message."""
    error_console.print(f"❌ {message}", style="red")


def print_info(message: str):
    """Print an info message."""
    console.print(f"[info]i[/info]  {message}", style="blue")


def print_warning(message: str):
    """Print a warning message."""
    console.print(f"⚠️  {message}", style="yellow")


def canonical_json(data: Any) -> str:
    """Serialize data with sorted keys and no whitespace variation."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(data: Any) -> str:
    """Short SHA-256 digest of the canonical JSON form of a configuration."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:16]


def format_duration(seconds: float) -> str:
    """Format duration in human-readable format."""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"


def format_percent(value: float) -> str:
    """Format a fraction as a percentage with two decimals."""
    return f"{100.0 * value:.2f}%"
