#!/usr/bin/env python
"""
tests/test_top_error.py
Test the top level error handler that turns command failures into exit codes
"""

import logging

import pytest

from histcal.utils.errors import ConfigError, DataError, DivergenceError
from histcal.utils.top_error import (CleanShutdown,
                                     ErrorHandlingException,
                                     RemovePartialOutputs,
                                     TopErrorHandler,
                                     TopLevelCallback,
                                     track_output,
                                     )

logger = logging.getLogger("test_code")


def test_track_output_without_handler_is_noop(tmp_path):
    assert track_output(tmp_path) == tmp_path


def test_clean_run_returns_zero(tmp_path):

    def main_func(value, path):
        assert value == 5
        track_output(path)

    tleh = TopErrorHandler(logger=logger)
    assert tleh.run(main_func, 5, tmp_path) == 0
    assert tleh.error_dict is None
    assert tleh.created_outputs == [tmp_path]
    # the handler is gone once run() returns
    assert track_output(tmp_path / "later") == tmp_path / "later"
    assert tleh.created_outputs == [tmp_path]


@pytest.mark.parametrize("exc,code", [
    (ConfigError("bad"), 2),
    (DataError("short"), 3),
    (DivergenceError("nan", epoch=1, step=0), 4),
    (Exception("error_1"), 1),
])
def test_exit_codes(exc, code):

    def main_func():
        raise exc

    tleh = TopErrorHandler(logger=logger)
    assert tleh.run(main_func) == code
    assert tleh.error_dict["exception"] is exc
    assert tleh.error_dict["exit_code"] == code


def test_tlc_1(capsys):

    error_dict_1 = None

    class MyTLC(TopLevelCallback):

        def on_error(self, error_dict: dict):
            nonlocal error_dict_1
            error_dict_1 = error_dict

    def main_func():
        raise Exception('error_1')

    tlc = MyTLC()
    tleh = TopErrorHandler(top_level_callback=tlc, logger=logger)
    tleh.run(main_func)
    assert error_dict_1 is not None
    assert tleh.error_handled

    # without a logger the report goes to stdout
    tleh = TopErrorHandler(top_level_callback=tlc, logger=None)
    error_dict_1 = None
    tleh.run(main_func)
    assert error_dict_1 is not None
    assert "TOPLEVEL ERROR DETECTED" in capsys.readouterr().out


def test_tlc_raises():

    class BadTLC(TopLevelCallback):

        def on_error(self, error_dict: dict):
            raise Exception('error in callback')

    def main_func():
        raise ConfigError('error_1')

    tleh = TopErrorHandler(top_level_callback=BadTLC(), logger=logger)
    with pytest.raises(ErrorHandlingException) as info:
        tleh.run(main_func)
    assert isinstance(info.value.original_exception, ConfigError)


def test_clean_shutdown_called():

    messages = []

    class MyShutdown(CleanShutdown):

        def shutdown(self, message: str = None):
            messages.append(message)

    def main_func():
        raise DataError('error_1')

    tleh = TopErrorHandler(clean_shutdown=MyShutdown(), logger=logger)
    assert tleh.run(main_func) == 3
    assert len(messages) == 1
    assert 'error_1' in messages[0]


def test_clean_shutdown_raises():

    class BadShutdown(CleanShutdown):

        def shutdown(self, message: str = None):
            raise Exception('error in shutdown')

    def main_func():
        raise Exception('error_1')

    tleh = TopErrorHandler(clean_shutdown=BadShutdown(), logger=logger)
    with pytest.raises(ErrorHandlingException):
        tleh.run(main_func)


def test_remove_partial_outputs(tmp_path):
    made = tmp_path / "run"
    kept = tmp_path / "existing"
    kept.mkdir()

    def main_func():
        made.mkdir()
        (made / "checkpoint.bin").write_bytes(b"x")
        track_output(made)
        raise DataError('not enough rows')

    tleh = TopErrorHandler(logger=logger)
    remover = RemovePartialOutputs(tleh)
    tleh.clean_shutdown = remover
    assert tleh.run(main_func) == 3
    assert not made.exists()
    assert kept.exists()
    assert remover.removed == [made]


def test_remove_partial_outputs_untouched_on_success(tmp_path):
    made = tmp_path / "run"

    def main_func():
        made.mkdir()
        track_output(made)

    tleh = TopErrorHandler(logger=logger)
    tleh.clean_shutdown = RemovePartialOutputs(tleh)
    assert tleh.run(main_func) == 0
    assert made.exists()
