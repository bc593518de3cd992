import os

import pytest


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, opt in with FRACPERC_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FRACPERC_RUN_SLOW"):
        return
    skip = pytest.mark.skip(reason="set FRACPERC_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
