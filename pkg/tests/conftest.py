import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def verdict(request):
    """Write one line to the terminal, bypassing output capture."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(line):
        if reporter is None:
            print(line)
        else:
            reporter.write_line("")
            reporter.write_line(line)

    return emit
