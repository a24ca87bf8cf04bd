import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pcftube.core import ResistanceMetric, build_level, load_structure
from pcftube.kernels import KernelEvaluator, TruncationPolicy
from pcftube.spectral import eigensystem, energy_matrix


class Stack:
    """Built artifacts for one (preset, level), constructed lazily and cached."""

    def __init__(self, preset: str, level: int):
        self.preset = preset
        self.level = level
        self.structure = load_structure(preset)
        self.graph = build_level(self.structure, level)
        self.form = energy_matrix(self.graph)
        self._bases = {}
        self._metric = None
        self._evaluators = {}

    def basis(self, bc: str):
        if bc not in self._bases:
            self._bases[bc] = eigensystem(self.form, bc)
        return self._bases[bc]

    def evaluator(self, bc: str, **policy):
        key = (bc, tuple(sorted(policy.items())))
        if key not in self._evaluators:
            self._evaluators[key] = KernelEvaluator(self.basis(bc), TruncationPolicy(**policy))
        return self._evaluators[key]

    @property
    def metric(self) -> ResistanceMetric:
        if self._metric is None:
            self._metric = ResistanceMetric(self.graph, self.form.matrix)
        return self._metric


@pytest.fixture(scope="session")
def stacks():
    cache = {}

    def get(preset: str, level: int) -> Stack:
        key = (preset, level)
        if key not in cache:
            cache[key] = Stack(preset, level)
        return cache[key]

    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(7)
