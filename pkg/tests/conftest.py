import pytest

from ltcontext import toy_data_dir
from ltcontext.datamodel import load_annotations, load_catalog, load_contexts, load_entities
from ltcontext.embeddings import load_embeddings
from ltcontext.pipeline import Stores


@pytest.fixture(scope="session")
def toy_dir():
    return toy_data_dir()


@pytest.fixture(scope="session")
def toy_stores(toy_dir):
    # annotations unthresholded; pipeline and baselines apply their own theta
    return Stores(
        catalog=load_catalog(toy_dir / "catalog.jsonl"),
        contexts=load_contexts(toy_dir / "contexts.jsonl"),
        annotations=load_annotations(toy_dir / "annotations.jsonl", theta=0.0),
        embeddings=load_embeddings(toy_dir / "embeddings.txt"),
    )


@pytest.fixture(scope="session")
def toy_entities(toy_dir):
    return {e.id: e for e in load_entities(toy_dir / "entities.jsonl")}
