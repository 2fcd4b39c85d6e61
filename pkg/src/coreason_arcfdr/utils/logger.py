# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/coreason_arcfdr

import os
import sys
from pathlib import Path

from loguru import logger as _logger

LOG_LEVEL_ENV = "ARCFDR_LOG_LEVEL"
LOG_FILE = "logs/arcfdr.log"

# Remove default handler
_logger.remove()

logger = _logger
"""The global logger instance configured for the package.

This logger is configured to output:
- Human-readable logs to stderr (level from `ARCFDR_LOG_LEVEL`, INFO by default).
- JSON formatted logs to `logs/arcfdr.log` with rotation and retention policies.
"""

_level = os.environ.get(LOG_LEVEL_ENV, "INFO").upper()

# Sink 1: Stderr (Human-readable). Stdout is reserved for command output.
_stderr_sink_id = logger.add(
    sys.stderr,
    level=_level,
    format=(
        "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | "
        "<level>{level: <8}</level> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - "
        "<level>{message}</level>"
    ),
)

# Ensure logs directory exists
log_path = Path(LOG_FILE).parent
if not log_path.exists():
    log_path.mkdir(parents=True, exist_ok=True)  # pragma: no cover

# Sink 2: File (JSON, Rotation, Retention)
logger.add(
    LOG_FILE,
    rotation="500 MB",
    retention="10 days",
    serialize=True,
    enqueue=True,
    level=_level,
)


def set_console_level(level: str) -> None:
    """Replaces the stderr sink with one at the requested level.

    Used by the command line `--log-level` flag.

    Args:
        level: A loguru level name (e.g. "DEBUG", "WARNING").
    """
    global _stderr_sink_id
    logger.remove(_stderr_sink_id)
    _stderr_sink_id = logger.add(
        sys.stderr,
        level=level.upper(),
        format="<level>{level: <8}</level> | <cyan>{name}</cyan> - <level>{message}</level>",
    )
