import re

import numpy as np
import pytest

from sparselaw.cost import CostModel, chinchilla_frontier, sparsity_contour
from sparselaw.errors import EmptyInputError
from sparselaw.law import T5_C4
from sparselaw.plot import emit_contour_plot

N = np.geomspace(1e6, 1e10, 9)
MODEL = CostModel()


def polylines(svg):
    return [[tuple(map(float, p.split(","))) for p in pts.split()]
            for pts in re.findall(r'<polyline [^>]*points="([^"]+)"', svg)]


def test_two_contours_and_frontier_are_parallel():
    contours = [sparsity_contour(T5_C4, MODEL, s, N) for s in (0.5, 0.875)]
    svg = emit_contour_plot(contours, chinchilla_frontier(T5_C4, MODEL, N))
    lines = polylines(svg)
    assert len(lines) == 3
    slopes = [np.polyfit([x for x, _ in l], [y for _, y in l], 1)[0] for l in lines]
    # Pixel coordinates are rounded to 1e-3, so slopes agree to that resolution.
    assert max(slopes) - min(slopes) < 1e-4
    assert 'data-label="S = 0.5"' in svg and 'data-label="S = 0.875"' in svg


def test_empty_input():
    with pytest.raises(EmptyInputError):
        emit_contour_plot([])
    with pytest.raises(EmptyInputError):
        emit_contour_plot([[]])


def test_byte_identical(tmp_path):
    contours = [sparsity_contour(T5_C4, MODEL, 0.75, N)]
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_contour_plot(contours, path=str(a))
    emit_contour_plot(contours, path=str(b))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().startswith("<?xml")
