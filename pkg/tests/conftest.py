"""Shared fixtures plus the acceptance reporting hooks.

The terminal summary prints one PASS/FAIL line per acceptance criterion.
The suite-runtime criterion needs the rest of the suite to have finished
first, so collection is reordered to park that test at the very end.
"""

from __future__ import annotations

import re
import time

import pytest

from nerprune.corpus import Corpus, Sentence

SUITE_BUDGET_SECONDS = 180.0

_session_start = 0.0
_acceptance: dict[str, str] = {}
_e2e_seconds = 0.0


def sent(tokens, tags, language="xx") -> Sentence:
    return Sentence(tuple(tokens), tuple(tags), language)


def corpus_of(sentences, language="xx", split="test") -> Corpus:
    return Corpus(tuple(sentences), language, split)


@pytest.fixture
def make_sentence():
    return sent


@pytest.fixture
def make_corpus():
    return corpus_of


@pytest.fixture
def suite_clock():
    """Elapsed suite time so far, with long end-to-end tests factored out."""

    def read():
        return time.monotonic() - _session_start - _e2e_seconds

    return read


def pytest_sessionstart(session):
    global _session_start
    _session_start = time.monotonic()


def pytest_collection_modifyitems(session, config, items):
    tail = [item for item in items if "test_c10_" in item.nodeid]
    if tail:
        rest = [item for item in items if "test_c10_" not in item.nodeid]
        items[:] = rest + tail


def pytest_runtest_logreport(report):
    global _e2e_seconds
    if report.when != "call":
        return
    match = re.search(r"test_(c\d\d)_", report.nodeid)
    if match and "test_acceptance" in report.nodeid:
        _acceptance[match.group(1)] = "PASS" if report.passed else "FAIL"
    if "e2e" in report.keywords:
        _e2e_seconds += report.duration


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for num in range(1, 11):
        key = f"c{num:02d}"
        status = _acceptance.get(key, "NOT RUN")
        terminalreporter.write_line(f"criterion {num:2d}: {status}")
