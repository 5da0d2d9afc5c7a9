import json
import re

import numpy as np
import pytest

from mgrit_advection import expkit
from mgrit_advection.expkit import (
    BaselineMissing,
    ConfigError,
    ExperimentConfig,
    ResultTable,
    Row,
    coarse_operator,
    compare_baseline,
    diagonal_entries,
    list_experiments,
    observed_orders,
    parse_config,
    run_experiment,
)
from mgrit_advection.discretization import SchemeSpec
from mgrit_advection.svg import _COLORS, KINDS, Series, emit_svg


def row(value, quantity="iterations", flags="ok", scheme="erk3+u3", m=4, exp="table3"):
    return Row(exp, scheme, 256, 1024, m, 2, "ideal", quantity, value, flags)


class TestConfig:
    def test_parse(self):
        cfg = parse_config("""
            # a small run
            experiment = table3
            scheme = erk1+u1, ERK3+U3
            scheme = erk5+u5
            n_x = 2^6
            m = 2, 4   # two factors
            tol = 1e-8
            plot = no
        """)
        assert cfg.schemes == ("erk1+u1", "erk3+u3", "erk5+u5")
        assert cfg.n_x == (64,) and cfg.m == (2, 4)
        assert cfg.tol == 1e-8 and cfg.plot is False
        # defaults filled in for keys that were not given
        assert cfg.variants == ("phi", "ideal")

    @pytest.mark.parametrize("text,line", [
        ("experiment = table3\nnonsense\n", 2),
        ("experiment = table3\n\ncolour = red\n", 3),
        ("experiment = table3\ntol = 1e-8\ntol = 1e-9\n", 3),
        ("experiment = table3\nm = two\n", 2),
        ("experiment = table3\nn_x = 100\n", 2),
        ("experiment = table3\nscheme = erk7+u7\n", 2),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ConfigError) as err:
            parse_config(text, source="run.cfg")
        assert err.value.line == line
        assert f"run.cfg:{line}:" in str(err.value)

    def test_missing_experiment(self):
        with pytest.raises(ConfigError, match="missing"):
            parse_config("m = 2\n")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError):
            ExperimentConfig("table9").resolved()

    def test_desk_cap(self):
        with pytest.raises(ConfigError, match="large"):
            ExperimentConfig("fig1", n_x=(2048,)).resolved()
        with pytest.warns(RuntimeWarning):
            ExperimentConfig("fig1", n_x=(2048,), large=True).resolved()

    def test_load(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("experiment = fig5\n")
        assert expkit.load_config(path).schemes == ("erk3+u3",)
        assert "tol" in expkit.config_fields()


class TestResultTable:
    def test_sorted_and_deterministic(self):
        rows = [row(5, scheme="erk5+u5"), row(3, m=2), row(4)]
        a, b = ResultTable(rows), ResultTable(rows[::-1])
        assert [r.key for r in a] == [r.key for r in b]
        assert a.rows[0].m == 2

    def test_csv_round_trip(self, tmp_path):
        t = ResultTable([row(5), row(0.1234567890123, quantity="OC"), row(float("nan"), flags="diverged", m=8)])
        path = t.to_csv(tmp_path / "t.csv")
        back = ResultTable.from_csv(path)
        assert [r.key for r in back] == [r.key for r in t]
        assert back.value(quantity="OC") == pytest.approx(0.1234567890, rel=1e-9)
        assert back.select(m=8)[0].flags == "diverged"
        text = open(path).read()
        assert text.splitlines()[0] == ",".join(expkit.COLUMNS)
        assert ",5,ok," in text

    def test_bad_header(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            ResultTable.from_csv(path)

    def test_bad_flag(self):
        with pytest.raises(ValueError):
            row(1, flags="weird")

    def test_unexpected_failures(self):
        ok_fail = Row("t", "s", 1, 1, 1, 1, "v", "iterations", float("nan"), "diverged", may_fail=True)
        t = ResultTable([ok_fail, row(float("nan"), flags="diverged")])
        assert len(t.unexpected_failures()) == 1

    def test_value_lookup(self):
        t = ResultTable([row(1), row(2, m=8)])
        assert t.value(m=8) == 2
        with pytest.raises(KeyError):
            t.value(scheme="erk3+u3")


class TestBaseline:
    def test_identical(self):
        t = ResultTable([row(5), row(0.25, quantity="OC")])
        assert compare_baseline(t, t).entries == []

    def test_off_by_one_passes_with_note(self):
        rep = compare_baseline(ResultTable([row(6)]), ResultTable([row(5)]))
        assert rep.passed and [e.status for e in rep.entries] == ["pass-with-note"]

    def test_off_by_two_fails(self):
        assert not compare_baseline(ResultTable([row(7)]), ResultTable([row(5)])).passed

    def test_experiment_tolerance(self):
        a = ResultTable([row(8, exp="table2")])
        b = ResultTable([row(5, exp="table2")])
        assert compare_baseline(a, b).passed
        assert not compare_baseline(a, b, tolerances={"table2": 2}).passed

    def test_flag_change_fails(self):
        rep = compare_baseline(ResultTable([row(float("nan"), flags="diverged")]), ResultTable([row(5)]))
        assert not rep.passed and "flags" in rep.entries[0].detail

    def test_missing_rows_fail(self):
        rep = compare_baseline(ResultTable([row(5)]), ResultTable([row(5), row(4, m=8)]))
        assert not rep.passed and rep.entries[0].detail == "missing from result"

    def test_value_tolerance(self):
        a = ResultTable([row(1.0 + 1e-9, quantity="OC")])
        b = ResultTable([row(1.0, quantity="OC")])
        assert compare_baseline(a, b).passed
        assert not compare_baseline(ResultTable([row(1.1, quantity="OC")]), b).passed

    def test_missing_file(self, tmp_path):
        with pytest.raises(BaselineMissing):
            compare_baseline(ResultTable([row(5)]), tmp_path / "none.csv")

    def test_json(self):
        rep = compare_baseline(ResultTable([row(6)]), ResultTable([row(5)]))
        data = json.loads(rep.to_json())
        assert data["passed"] is True and data["entries"][0]["status"] == "pass-with-note"


def _circles(svg, color=None):
    pat = r'<circle cx="([-\d.]+)" cy="([-\d.]+)" r="([\d.]+)"([^>]*)/>'
    out = []
    for cx, cy, r, rest in re.findall(pat, svg):
        if color is None or color in rest:
            out.append((float(cx), float(cy), float(r), rest))
    return out


class TestSvg:
    def test_empty_is_axes_only(self):
        for kind in KINDS:
            svg = emit_svg([], kind)
            assert svg.startswith("<svg") and "polyline" not in svg

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            emit_svg([], "pie")

    def test_unit_disc_points_inside_reference_circle(self):
        theta = np.linspace(0, 2 * np.pi, 40)
        z = 0.95 * np.exp(1j * theta) * np.linspace(0.1, 1, 40)
        svg = emit_svg([Series("z", z.real, z.imag, "marker")], "eigenscatter")
        ref = [c for c in _circles(svg) if "dasharray" in c[3]]
        assert len(ref) == 1
        cx, cy, rad, _ = ref[0]
        pts = [c for c in _circles(svg) if "dasharray" not in c[3]]
        assert len(pts) == 40
        for x, y, _, _ in pts:
            assert np.hypot(x - cx, y - cy) <= rad + 0.02

    def test_deterministic(self, tmp_path):
        s = [Series("a", [1, 2, 3], [1e-1, 1e-3, 1e-8])]
        a = emit_svg(s, "semilogy", tmp_path / "a.svg")
        b = emit_svg(s, "semilogy", tmp_path / "b.svg")
        assert a == b and (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_series_validation(self):
        with pytest.raises(ValueError):
            Series("a", [1, 2], [1])
        with pytest.raises(ValueError):
            Series("a", [1], [1], "zigzag")


class TestHelpers:
    def test_observed_orders(self):
        errs = {"erk3+u3": {64: 1.0, 128: 0.125, 256: 1 / 64}, "erk1+u1": {64: 1.0}}
        # finest pair only; a single grid gives no order
        assert observed_orders(errs) == {"erk3+u3": pytest.approx(3.0)}

    def test_diagonal_entries(self):
        col = np.zeros(16)
        col[0], col[15], col[3], col[5] = 1.0, 0.5, 0.002, 1e-4
        offs, vals = diagonal_entries(col)
        assert list(offs) == [-3, 0, 1] and list(vals) == [0.002, 1.0, 0.5]

    def test_coarse_operator_kinds(self):
        spec = SchemeSpec.erk(2, 64)
        for kind in ("ideal", "lsq", "nlsq", "phi-pattern"):
            res = coarse_operator(spec, 2, kind)
            assert res.stepper is not None and res.flags == "ok", kind
        with pytest.raises(ValueError):
            coarse_operator(spec, 2, "magic")

    def test_rediscretize_unstable_is_reported(self):
        res = coarse_operator(SchemeSpec.erk(1, 64), 2, "rediscretize")
        assert res.stepper is not None and "unstable" in res.note

    def test_erk2_m64_nonlinear_cap(self):
        res = coarse_operator(SchemeSpec.erk(2, 256), 64, "nlsq")
        assert len(res.fit.history) <= 11

    def test_sdirk_threshold_pattern(self):
        res = coarse_operator(SchemeSpec.sdirk(1, 256), 16, "lsq")
        assert res.flags == "ok" and res.fit.nnz >= 1


def test_list_experiments_complete():
    ids = [e for e, _ in list_experiments()]
    assert ids == list(expkit.EXPERIMENTS)
    for want in ("table2", "table3", "table5", "table6", "tableB", "fig1", "fig2", "fig3", "fig4", "fig5"):
        assert want in ids


SMALL = ExperimentConfig("table3", schemes=("erk1+u1", "erk3+u3"), n_x=(64,), m=(2, 4))


class TestRunExperiment:
    def test_table3_small(self, tmp_path):
        table, paths = run_experiment(SMALL, output_dir=tmp_path, workers=1)
        assert paths[0] == str(tmp_path / "table3.csv")
        iters = table.select(quantity="iterations")
        assert len(iters) == 2 * 2 * 2
        assert not table.unexpected_failures()

    def test_byte_identical_across_runs_and_workers(self, tmp_path):
        a, _ = run_experiment(SMALL, output_dir=tmp_path / "a", workers=1)
        b, _ = run_experiment(SMALL, output_dir=tmp_path / "b", workers=2)
        assert (tmp_path / "a" / "table3.csv").read_bytes() == (tmp_path / "b" / "table3.csv").read_bytes()
        assert compare_baseline(a, tmp_path / "b" / "table3.csv").entries == []

    def test_output_dir_from_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(expkit.OUTPUT_ENV, str(tmp_path / "env"))
        cfg = ExperimentConfig("fig1", schemes=("erk1+u1",), n_x=(16, 32), plot=False)
        _, paths = run_experiment(cfg, workers=1)
        assert paths[0].startswith(str(tmp_path / "env"))

    def test_fig5_stem_peak_on_characteristic(self, tmp_path):
        table, paths = run_experiment(ExperimentConfig("fig5"), output_dir=tmp_path, workers=1)
        peak = table.value(quantity="peak_offset")
        char = table.value(quantity="characteristic_offset")
        assert abs(peak - char) <= 1
        svg = open([p for p in paths if p.endswith("_entries.svg")][0]).read()
        stems = _circles(svg, _COLORS[0])
        xs = sorted({c[0] for c in stems})
        spacing = min(np.diff(xs))
        top = min(stems, key=lambda c: c[1])
        vline = float(re.search(r'<line x1="([\d.]+)"[^>]*stroke-dasharray="6,4"', svg).group(1))
        assert abs(top[0] - vline) <= 1.5 * spacing
        assert table.value(quantity="iterations") <= 6
