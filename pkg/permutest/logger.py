import sys
import time
from contextlib import contextmanager
from typing import Optional, TextIO

import colorama
from colorama import Fore, Style

colorama.just_fix_windows_console()

_LEVELS = {
    "info": ("INFO", Fore.BLUE),
    "success": ("DONE", Fore.GREEN),
    "warning": ("WARN", Fore.YELLOW),
    "error": ("FAIL", Fore.RED),
    "progress": ("....", Fore.MAGENTA),
}


class Logger:
    """
    Progress logger for permutest, silent unless 'use_logger' is set.

    Lines go to stderr by default: stdout carries the reports and JSON records,
    which have to stay byte-identical between runs of the same seed. Colour is
    only used when the stream is a terminal.
    """

    def __init__(
        self,
        use_logger: bool = False,
        stream: Optional[TextIO] = None,
        use_color: Optional[bool] = None,
    ):
        self.use_logger = use_logger
        self._stream = stream
        self._use_color = use_color

    @property
    def stream(self) -> TextIO:
        # resolved lazily so that redirected or captured stderr is honoured
        return sys.stderr if self._stream is None else self._stream

    @property
    def use_color(self) -> bool:
        if self._use_color is not None:
            return self._use_color
        isatty = getattr(self.stream, "isatty", None)
        return bool(isatty and isatty())

    def _log(self, level: str, message: str):
        if not self.use_logger:
            return
        tag, color = _LEVELS[level]
        prefix = f"[{tag}]"
        if self.use_color:
            prefix = f"{Style.BRIGHT}{color}{prefix}{Style.RESET_ALL}"
        print(f"{prefix} {message}", file=self.stream)

    def info(self, message: str):
        self._log("info", message)

    def success(self, message: str):
        self._log("success", message)

    def warning(self, message: str):
        self._log("warning", message)

    def error(self, message: str, e: Optional[Exception] = None):
        if e:
            message = f"{message}: {e}"
        self._log("error", message)

    def progress(self, message: str):
        self._log("progress", message)

    @contextmanager
    def timed(self, message: str):
        """Logs `message` as progress, then how long the block took"""
        self.progress(message)
        start = time.perf_counter()
        yield
        self.info(f"{message} took {time.perf_counter() - start:.2f}s")


_global_logger = Logger(use_logger=False)


def setup_logger(use_logger: bool = False, stream: TextIO = None, use_color: bool = None):
    """
    Configures the global singleton logger instance. The CLI calls this once
    with the value of `-v`; library callers may call it to see progress.
    """
    global _global_logger
    _global_logger = Logger(use_logger=use_logger, stream=stream, use_color=use_color)


def get_logger() -> Logger:
    """
    Returns:
        Logger: The one and only instance of the Logger class.
    """
    return _global_logger
