"""Shared fixtures: the synthetic separable datasets, built once per session."""

import pytest

from viewmatch.synth import make_lagor_fixture, make_match_fixture


@pytest.fixture(scope="session")
def match_fixture():
    return make_match_fixture()


@pytest.fixture(scope="session")
def lagor_fixture():
    return make_lagor_fixture()
