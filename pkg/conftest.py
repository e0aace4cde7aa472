"""
Shared pytest setup: put src/ on the import path, register the slow marker
and the hypothesis profiles.
"""

import os
import sys
from pathlib import Path

import hypothesis
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / 'src'))

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile(os.environ.get('HYPOTHESIS_PROFILE', 'default'))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance runs (set RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get('RUN_SLOW') == '1':
        return
    skip_slow = pytest.mark.skip(reason="set RUN_SLOW=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)
