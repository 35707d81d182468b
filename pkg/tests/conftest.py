from __future__ import annotations

import time

import pytest

from weblin import corpus
from weblin.invariants import check_dweb


@pytest.fixture(scope="session")
def corpus_results():
    """Verdicts and reports for the plain corpus, computed once."""
    out = {}
    t0 = time.perf_counter()
    for case in corpus.CASES:
        out[case.name] = check_dweb(corpus.web_for(case))
    out["_elapsed"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def substituted_results():
    """Verdicts for the corpus under x -> x^3 + x, y -> exp(y)."""
    out = {}
    t0 = time.perf_counter()
    for case in corpus.CASES:
        out[case.name] = check_dweb(corpus.substituted_web(case))
    out["_elapsed"] = time.perf_counter() - t0
    return out
