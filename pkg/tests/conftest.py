import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

DATA = ROOT / "data"


@pytest.fixture(scope="session")
def data_dir():
    return DATA


def make_record(code="abcd1234", **kw):
    from equate.model import LanguageRecord

    defaults = dict(
        glottocode=code,
        name="Test",
        centroid_lat=10.0,
        centroid_lon=20.0,
        macroarea="Eurasia",
        family="fam001",
        primary_country="C01",
        n_speakers=1000,
    )
    defaults.update(kw)
    return LanguageRecord(**defaults)
