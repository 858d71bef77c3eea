import pytest

from graphsr.plot import Series, emit_plot, render_svg, Figure


def test_empty_series_gives_axes_only(tmp_path):
    svg = emit_plot([], tmp_path / "e.svg")
    assert 'class="axes"' in svg
    assert "<polyline" not in svg and "<circle" not in svg
    assert (tmp_path / "e.svg").read_text() == svg


def test_two_point_line_is_one_polyline():
    svg = render_svg(Figure([Series("a", [0.0, 1.0], [0.0, 1.0])]))
    assert svg.count("<polyline") == 1
    line = next(l for l in svg.splitlines() if "<polyline" in l)
    assert len(line.split('points="')[1].split('"')[0].split()) == 2


def test_scatter_draws_one_circle_per_point():
    svg = render_svg(Figure([Series("s", [1, 2, 3], [3, 2, 1], kind="scatter")]))
    assert svg.count("<circle") == 3


def test_output_is_byte_deterministic(tmp_path):
    series = [Series("a", [1, 2, 3], [0.2, 0.5, 0.4]), Series("b & c", [1, 3], [1, 1], kind="scatter")]
    emit_plot(series, tmp_path / "1.svg", title="t")
    emit_plot(series, tmp_path / "2.svg", title="t")
    assert (tmp_path / "1.svg").read_bytes() == (tmp_path / "2.svg").read_bytes()
    assert "b &amp; c" in (tmp_path / "1.svg").read_text()


def test_non_finite_and_bad_series_rejected():
    with pytest.raises(ValueError):
        Series("a", [0.0, 1.0], [0.0, float("nan")])
    with pytest.raises(ValueError):
        Series("a", [0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        Series("a", [0.0], [0.0], kind="bar")
