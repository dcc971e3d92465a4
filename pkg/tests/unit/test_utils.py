"""
Unit tests for AMRO utility functions.
"""

import logging
from io import StringIO
from unittest.mock import patch

import pytest

from amro.utils import (
    canonical_json,
    config_hash,
    format_duration,
    format_percent,
    print_error,
    print_info,
    print_success,
    print_warning,
    resolve_log_level,
)


class TestLogLevel:
    """Test log level resolution."""

    def test_default_is_warning(self):
        """Without flags or environment the level is WARNING."""
        assert resolve_log_level() == logging.WARNING

    def test_verbose_wins(self, monkeypatch):
        """The verbose flag forces DEBUG."""
        monkeypatch.setenv("AMRO_LOG", "error")

        assert resolve_log_level(verbose=True) == logging.DEBUG

    def test_environment_variable(self, monkeypatch):
        """AMRO_LOG selects the level by name, case-insensitively."""
        monkeypatch.setenv("AMRO_LOG", "info")

        assert resolve_log_level() == logging.INFO

    def test_unknown_level_name(self, monkeypatch):
        """Unknown names fall back to WARNING."""
        monkeypatch.setenv("AMRO_LOG", "chatty")

        assert resolve_log_level() == logging.WARNING


class TestConfigHash:
    """Test canonical hashing of configurations."""

    def test_key_order_irrelevant(self):
        """Dictionaries hash the same regardless of insertion order."""
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})

    def test_values_matter(self):
        """Any value change changes the hash."""
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_short_hex_digest(self):
        """Hashes are 16 hex characters."""
        digest = config_hash({"a": 1})

        assert len(digest) == 16
        int(digest, 16)

    def test_canonical_json(self):
        """Canonical JSON is compact and sorted."""
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


class TestFormatting:
    """Test human-readable formatting helpers."""

    @pytest.mark.parametrize(
        "seconds, expected",
        [(12.34, "12.3s"), (90.0, "1.5m"), (5400.0, "1.5h")],
    )
    def test_format_duration(self, seconds, expected):
        """Durations pick a suitable unit."""
        assert format_duration(seconds) == expected

    def test_format_percent(self):
        """Fractions print as percentages with two decimals."""
        assert format_percent(0.98765) == "98.77%"


class TestPrintFunctions:
    """Test console message helpers."""

    def test_print_info(self):
        """Info goes to stdout."""
        with patch("sys.stdout", new_callable=StringIO) as mock_stdout:
            print_info("warming up")

        assert "warming up" in mock_stdout.getvalue()

    def test_print_success(self):
        """Success goes to stdout."""
        with patch("sys.stdout", new_callable=StringIO) as mock_stdout:
            print_success("done")

        assert "done" in mock_stdout.getvalue()

    def test_print_warning(self):
        """Warnings go to stdout."""
        with patch("sys.stdout", new_callable=StringIO) as mock_stdout:
            print_warning("no snapshot")

        assert "no snapshot" in mock_stdout.getvalue()

    def test_print_error(self):
        """Errors go to stderr only."""
        with (
            patch("sys.stdout", new_callable=StringIO) as mock_stdout,
            patch("sys.stderr", new_callable=StringIO) as mock_stderr,
        ):
            print_error("bad scenario")

        assert "bad scenario" in mock_stderr.getvalue()
        assert mock_stdout.getvalue() == ""
