"""
Process plumbing: logging setup, graceful shutdown, resource monitoring.
"""

import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Union

import psutil

logger = logging.getLogger(__name__)

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] [%(name)s:%(lineno)d] %(message)s"
LOG_FILE_NAME = "twopath.log"


def setup_logging(level: Union[str, int] = "INFO", output_dir: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Console logging plus, when ``output_dir`` is given, <output_dir>/logs/twopath.log."""
    handlers = [logging.StreamHandler(sys.stderr)]
    log_path = None
    if output_dir is not None:
        log_dir = Path(output_dir) / "logs"
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / LOG_FILE_NAME
        handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    return log_path


class ShutdownHandler:
    """Turns SIGINT/SIGTERM into a flag that training loops poll between epochs."""

    def __init__(self, install: bool = True):
        self.shutdown_requested = False
        self._previous = {}
        if install:
            for sig in (signal.SIGINT, signal.SIGTERM):
                try:
                    self._previous[sig] = signal.signal(sig, self._handle_signal)
                except ValueError:
                    # not the main thread (e.g. a sweep worker)
                    pass

    def _handle_signal(self, signum, frame):
        sig_name = "SIGINT" if signum == signal.SIGINT else "SIGTERM"
        logger.warning(f"⚠️  {sig_name} received - finishing the current epoch, then stopping")
        self.shutdown_requested = True

    def request(self):
        self.shutdown_requested = True

    def should_stop(self) -> bool:
        return self.shutdown_requested

    def restore(self):
        for sig, handler in self._previous.items():
            signal.signal(sig, handler)
        self._previous.clear()


class ResourceMonitor:
    """Process and host resource usage, logged at DEBUG once per epoch."""

    @staticmethod
    def get_memory_usage() -> float:
        """Resident memory of this process in MB."""
        try:
            return psutil.Process().memory_info().rss / 1024 / 1024
        except psutil.Error:
            return 0.0

    @staticmethod
    def log_usage(context: str = ""):
        if not logger.isEnabledFor(logging.DEBUG):
            return
        try:
            cpu_percent = psutil.cpu_percent(interval=None)
            mem = psutil.virtual_memory()
            logger.debug(f"💻 {context} RSS: {ResourceMonitor.get_memory_usage():.0f}MB | CPU: {cpu_percent}% | "
                         f"RAM: {mem.percent}% ({mem.used / 1024 ** 3:.1f}GB/{mem.total / 1024 ** 3:.1f}GB)")
        except psutil.Error:
            pass
