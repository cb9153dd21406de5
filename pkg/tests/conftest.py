import sys
from pathlib import Path

import pytest

from cnnselect import ProfileStore, load_profiles

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"

sys.path.insert(0, str(Path(__file__).resolve().parent))


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return FIXTURES / "paper_models.json"


@pytest.fixture(scope="session")
def fixture_profiles(fixture_path):
    """The eleven measured model profiles, loaded once."""
    return tuple(load_profiles(fixture_path))


@pytest.fixture()
def fixture_store(fixture_profiles):
    """A fresh mutable store over the measured profiles."""
    return ProfileStore(fixture_profiles)


@pytest.fixture(scope="session")
def by_name(fixture_profiles):
    return {p.name: p for p in fixture_profiles}


def oracle_models(profiles):
    """Adapt package profiles to the oracle's plain-dict shape."""
    return [
        {
            "name": p.name,
            "top1": p.accuracy_top1,
            "top5": p.accuracy_top5,
            "mean": p.mean_ms,
            "std": p.std_ms,
        }
        for p in profiles
    ]
