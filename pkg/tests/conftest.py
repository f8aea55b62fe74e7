"""Shared fixtures: worked-example parameters and small simulated datasets."""

import numpy as np
import pytest

import polyscale as ps


@pytest.fixture
def grm_example():
    """Three-category graded item used in the worked examples."""
    return ps.GrmItemParams(a=1.5, d=np.array([-1.0, 0.5]))


@pytest.fixture
def ggum_example():
    """Two-category unfolding item with tau_1 = -1."""
    return ps.GgumItemParams(a=1.0, d=0.0, tau=np.array([-1.0]))


@pytest.fixture
def nrm_example():
    """Three-category nominal item; slopes (0.5, 1.0, 1.5) up to centering."""
    return ps.NrmItemParams(a=np.array([0.5, 1.0, 1.5]), c=np.zeros(3))


@pytest.fixture
def small_matrix():
    """Three persons x two items (A: 1..4, B: 1..6), fully observed."""
    return ps.ResponseMatrix(
        items=["A", "B"],
        codes=np.array([[1, 6], [2, 4], [3, 2]]),
        observed=np.ones((3, 2), dtype=bool),
        categories=[(1, 2, 3, 4), (1, 2, 3, 4, 5, 6)],
        weights=np.ones(3),
    )


def grm_truth_4items():
    items = []
    specs = [
        (0.8, (-1.5, 0.0, 1.5)),
        (1.3, (-1.0, 0.2, 1.2)),
        (1.7, (-0.8, 0.5, 1.8)),
        (2.2, (-2.0, -0.5, 1.0)),
    ]
    for i, (a, d) in enumerate(specs):
        items.append(
            ps.ItemEntry(
                item=f"q{i + 1}",
                categories=(1, 2, 3, 4),
                params=ps.GrmItemParams(a=a, d=np.array(d)),
            )
        )
    return ps.ParameterSet(model="grm", items=tuple(items))


def nrm_truth_4items():
    raw = [
        ([-1.2, -0.3, 0.4, 1.1], [0.5, -0.8, 0.9, 0.2], (1, 2, 3, 4)),
        ([-0.9, 0.2, -0.4, 1.1], [-0.5, 0.6, 1.2, -0.1], (1, 2, 3, 4)),
        ([-1.5, -0.1, 0.6, 1.0], [0.3, 1.0, -0.7, 0.4], (1, 2, 3, 4)),
        ([-1.0, -0.5, 0.1, 0.5, 0.9], [0.2, -0.3, 0.8, -0.6, 0.5], (1, 2, 3, 4, 5)),
    ]
    items = [
        ps.ItemEntry(
            item=f"q{i + 1}",
            categories=cats,
            params=ps.NrmItemParams.from_locations(np.array(a), np.array(d)),
        )
        for i, (a, d, cats) in enumerate(raw)
    ]
    return ps.ParameterSet(model="nrm", items=tuple(items))


@pytest.fixture(scope="session")
def grm_truth():
    return grm_truth_4items()


@pytest.fixture(scope="session")
def nrm_truth():
    return nrm_truth_4items()


@pytest.fixture(scope="session")
def grm_recovery_fit(grm_truth):
    """N=2000 simulation from grm_truth plus its EM fit (reused across tests)."""
    spec = ps.SimSpec(params=grm_truth, n=2000, seed=1)
    matrix = ps.simulate_responses(spec)
    fit = ps.fit_em(matrix, "grm")
    return spec, matrix, fit
