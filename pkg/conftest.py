# conftest.py

import os
import tempfile

# pinned before any test imports database.py
_test_db = os.path.join(tempfile.mkdtemp(prefix="statarb-tests-"), "test.db")
os.environ["DATABASE_URL"] = f"sqlite:///{_test_db}"
os.environ.setdefault("STATARB_JOBS", "1")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size statistical acceptance checks (deselect with -m 'not slow')")
