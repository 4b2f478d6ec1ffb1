import pytest


def suite_seeds(count: int, fast: int = 5) -> list:
    """Seeds 0..count-1 with every seed from ``fast`` on marked slow."""
    return [seed if seed < fast else pytest.param(seed, marks=pytest.mark.slow) for seed in range(count)]
