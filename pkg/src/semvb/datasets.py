"""Bundled example data.

``visual_tests`` is a 301 x 3 synthetic battery of visual-ability test scores
with one latent factor, shipped so that examples, tests and the flagship
simulation study are self-contained. ``visual_tests_truths`` returns the
committed point estimates from a long in-package Gibbs run on that data;
the simulation study uses them as generating truth.
``scripts/make_bundled_data.py`` regenerates all three files.
"""

from importlib import resources

from .model import Dataset, FactorSpec, TrueParameters, load_csv

__all__ = ["path", "visual_tests", "visual_tests_spec", "visual_tests_truths"]


def path(name: str):
    """Filesystem path of a bundled data file."""
    return resources.files("semvb.data") / name


def visual_tests_spec() -> FactorSpec:
    return FactorSpec.from_json(path("visual_tests_spec.json"))


def visual_tests() -> Dataset:
    return load_csv(path("visual_tests.csv"), visual_tests_spec())


def visual_tests_truths() -> TrueParameters:
    return TrueParameters.from_json(path("visual_tests_truths.json"))
