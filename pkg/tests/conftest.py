import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parent.parent
CORPUS = REPO / "corpus"
GOLDENS = Path(__file__).resolve().parent / "goldens"

sys.path.insert(0, str(REPO / "src"))

from sasslift.emit import emit_module  # noqa: E402
from sasslift.pipeline import PipelineConfig, lift_text  # noqa: E402


@pytest.fixture
def corpus_dir():
    return CORPUS


def lift_corpus_file(relpath: str, **cfg_kwargs):
    """Lift one corpus file (with its manifest) and return the ModuleLift."""
    p = CORPUS / relpath
    manifest = p.with_suffix(".manifest")
    config = PipelineConfig(**cfg_kwargs)
    return lift_text(p.read_text(), config,
                     manifest.read_text() if manifest.exists() else None)


def lift_snippet(text: str, arch: str = "sm75", **cfg_kwargs):
    config = PipelineConfig(arch=arch, **cfg_kwargs)
    lift = lift_text(text, config)
    assert lift.all_ok, [f.error for f in lift.functions]
    return lift.ok()


def emit_one(fn):
    return emit_module([fn])


def all_corpus_sass():
    return sorted(CORPUS.rglob("*.sass"))
