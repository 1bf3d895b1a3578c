import json
import shutil
from pathlib import Path

import pytest

from advisor.admin import KbSnapshot, _now, load_kb_dir
from advisor.arl import parse_kb

REPO_ROOT = Path(__file__).resolve().parent.parent
KB_DIR = REPO_ROOT / "kb"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def kb_dir() -> Path:
    return KB_DIR


@pytest.fixture(scope="session")
def shipped():
    """(kb, catalogue, frames) for the shipped knowledge base."""
    return load_kb_dir(KB_DIR)


@pytest.fixture(scope="session")
def shipped_snapshot(shipped) -> KbSnapshot:
    kb, catalogue, frames = shipped
    return KbSnapshot(1, kb, catalogue, frames, _now())


@pytest.fixture(scope="session")
def core_rules_source() -> str:
    return (FIXTURES / "core_rules.arl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def core_rules_ast(core_rules_source):
    return parse_kb(core_rules_source, filename="core_rules.arl")


@pytest.fixture()
def kb_copy(tmp_path) -> Path:
    """A mutable copy of the shipped knowledge-base directory."""
    dest = tmp_path / "kb"
    shutil.copytree(KB_DIR, dest)
    return dest


def rewrite_catalogue(kb_dir: Path, mutate) -> None:
    """Load, mutate and write back catalogue.json of a KB directory copy."""
    path = kb_dir / "catalogue.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    mutate(data)
    path.write_text(json.dumps(data, ensure_ascii=False, indent=2), encoding="utf-8")
