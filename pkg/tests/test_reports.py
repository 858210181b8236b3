import numpy as np
import pytest

from holonomylab.reports import Report, Table, render_report, validate_report, write_table
from holonomylab.stats import Stats, StatsDict


class TestStatsDict:
    def test_merge_and_summary(self):
        """Stages merge counter by counter and the total adds them up"""
        first = StatsDict().add("hannay", Stats(evaluations=10, segments=4))
        second = StatsDict().add("hannay", Stats(evaluations=5)).add("berry", Stats(samples=3))
        first.merge(second)
        assert first["hannay"].evaluations == 15
        assert first["hannay"].segments == 4
        total = first.summary()
        assert (total.evaluations, total.segments, total.samples) == (15, 4, 3)

    def test_report_order(self):
        """Stages are reported in sorted order followed by the total"""
        stats = StatsDict().add("relation", Stats(steps=2)).add("oracle", Stats(steps=5))
        assert list(stats.to_report()) == ["oracle", "relation", "total"]
        assert stats.to_report()["total"].steps == 7


class TestReports:
    @pytest.fixture
    def setup(self):
        """A minimal report with an awkward float"""
        return Report(
            command="hannay",
            config={"segments": 8},
            results={"theta": [0.1 + 0.2]},
            timing=StatsDict().add("hannay", Stats(segments=8)).to_report(),
            status="ok",
        )

    def test_round_trip_is_exact(self, setup):
        """Rendered floats reload bit for bit"""
        reloaded = validate_report(render_report(setup))
        assert reloaded.results["theta"][0] == 0.1 + 0.2
        assert reloaded == setup

    def test_schema_version(self, setup):
        """Reports from another schema are refused"""
        text = render_report(setup.model_copy(update={"schema_version": "0.1"}))
        with pytest.raises(ValueError):
            validate_report(text)

    def test_invalid_status(self):
        """Status is either ok or fail"""
        with pytest.raises(ValueError):
            validate_report('{"command": "hannay", "config": {}, "results": {}, "timing": {}, "status": "maybe"}')

    def test_write_table(self, tmp_path):
        """Tables become CSV files named after the report stem"""
        table = Table(name="phases", header=["m0", "beta"], rows=[[1, 0.069], [-2, -0.138]])
        path = write_table(table, str(tmp_path), "berry")
        assert path.endswith("berry.phases.csv")
        with open(path) as f:
            assert f.readline().strip() == "m0,beta"
        np.testing.assert_array_equal(np.loadtxt(path, delimiter=",", skiprows=1), [[1, 0.069], [-2, -0.138]])
