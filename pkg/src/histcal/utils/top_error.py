import contextvars
import logging
import shutil
import traceback
from pathlib import Path
from typing import Callable, Optional, Protocol

from histcal.utils.errors import HistcalError

# Key for finding the active handler from anywhere below TopErrorHandler.run()
ERROR_HANDLER = contextvars.ContextVar('ERROR_HANDLER')

logger = logging.getLogger("TopErrorHandler")


class ErrorHandlingException(Exception):

    def __init__(self, *args, **kwargs):
        self.original_exception = kwargs.pop('original_exception')
        super().__init__(*args, **kwargs)


class TopLevelCallback(Protocol):  # pragma: no cover

    def on_error(self, error_dict: dict):
        pass


class CleanShutdown:  # pragma: no cover

    def shutdown(self, message: str = None):
        pass


class RemovePartialOutputs(CleanShutdown):
    """Deletes every output directory the failed command registered as created by it."""

    def __init__(self, handler: "TopErrorHandler"):
        self.handler = handler
        self.removed: list[Path] = []

    def shutdown(self, message: str = None):
        for path in reversed(self.handler.created_outputs):
            if path.exists():
                shutil.rmtree(path)
                self.removed.append(path)
                logger.info("Removed partial output %s (%s)", path, message)


class TopErrorHandler:

    def __init__(self,
                 top_level_callback: TopLevelCallback = None,
                 clean_shutdown: CleanShutdown = None,
                 logger: logging.Logger = None):
        self.top_level_callback = top_level_callback
        self.clean_shutdown = clean_shutdown
        self.logger = logger
        self.error_dict: Optional[dict] = None
        self.error_handled = False
        self.created_outputs: list[Path] = []

    def track_output(self, path: Path) -> Path:
        """Record a directory created by the running command; removed again on failure."""
        self.created_outputs.append(Path(path))
        return path

    def exit_code_for(self, exc: BaseException) -> int:
        if isinstance(exc, HistcalError):
            return exc.exit_code
        return 1

    def _report(self, msg):
        if self.logger:
            self.logger.error(msg)
        else:
            print("-------------- TOPLEVEL ERROR DETECTED ---------------------")
            print(msg)
            print("------------------------------------------------------------")

    def handle_error(self, exc: BaseException) -> int:
        trace_string = "".join(traceback.format_exception(exc))
        error_dict = dict(exception=exc, trace_string=trace_string,
                          exit_code=self.exit_code_for(exc))
        self.error_dict = error_dict
        if isinstance(exc, HistcalError):
            self._report(f"{type(exc).__name__}: {exc}")
        else:
            self._report(f"Command raised exception\n{trace_string}")
        if self.top_level_callback:
            try:
                self.top_level_callback.on_error(error_dict)
                self.error_handled = True
            except Exception:
                self._report(f"Toplevel error handler raised exception\n{traceback.format_exc()}")
                raise ErrorHandlingException(original_exception=exc)
        if self.clean_shutdown:
            try:
                self.clean_shutdown.shutdown(f"On error {exc}")
                self.error_handled = True
            except Exception:
                self._report(f"Clean shutdown raised exception\n{traceback.format_exc()}")
                raise ErrorHandlingException(original_exception=exc)
        return error_dict['exit_code']

    def run(self, main_func: Callable, *args, **kwargs) -> int:
        """Run main_func under this handler, return a process exit code."""
        token = ERROR_HANDLER.set(self)
        try:
            main_func(*args, **kwargs)
            return 0
        except ErrorHandlingException:
            raise
        except Exception as exc:
            return self.handle_error(exc)
        finally:
            ERROR_HANDLER.reset(token)


def track_output(path: Path) -> Path:
    """Register a created output directory with the active handler, if there is one."""
    try:
        handler = ERROR_HANDLER.get()
    except LookupError:
        return path
    return handler.track_output(path)
