import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(autouse=True)
def _quiet_extension_warning():
    from eulercut.levelset_geom import ExtensionWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtensionWarning)
        yield
