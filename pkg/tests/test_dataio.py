"""TSV and JSON round trips, plus the error paths for malformed files."""

import json

import numpy as np
import numpy.testing as npt
import pytest

from gfabic.biclusters import (
    Bicluster,
    BiclusterSet,
    MatchedGroup,
    MatchedMember,
    RobustComponentReport,
    ViewCells,
)
from gfabic.dataio import (
    default_col_names,
    default_row_names,
    read_biclusters,
    read_collection,
    read_matrix_tsv,
    read_robust_report,
    read_truth,
    write_biclusters,
    write_collection,
    write_matrix_tsv,
    write_robust_report,
    write_truth,
)
from gfabic.model import ConfigurationError, DataCollection, ViewData
from gfabic.simulate import SimulationSpec, generate


class TestMatrixTsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((4, 3))
        path = tmp_path / "m.tsv"
        write_matrix_tsv(path, values, default_row_names(4),
                         default_col_names("view1", 3))
        got, missing, rows, cols = read_matrix_tsv(path)
        # repr round-trips float64 exactly
        npt.assert_array_equal(got, values)
        assert missing is None
        assert rows == ["s1", "s2", "s3", "s4"]
        assert cols == ["view1_f1", "view1_f2", "view1_f3"]

    def test_missing_cells_written_as_na(self, tmp_path):
        values = np.arange(6.0).reshape(2, 3)
        mask = np.zeros((2, 3), dtype=bool)
        mask[0, 1] = True
        mask[1, 2] = True
        path = tmp_path / "m.tsv"
        write_matrix_tsv(path, values, ["a", "b"], ["x", "y", "z"], mask)
        text = path.read_text()
        assert text.count("\tNA") == 2
        got, missing, _, _ = read_matrix_tsv(path)
        npt.assert_array_equal(missing, mask)
        assert np.isnan(got[0, 1]) and np.isnan(got[1, 2])
        npt.assert_array_equal(got[~mask], values[~mask])

    def test_write_shape_mismatch(self, tmp_path):
        with pytest.raises(ConfigurationError):
            write_matrix_tsv(tmp_path / "m.tsv", np.zeros((2, 2)),
                             ["a", "b"], ["x"])

    def test_bad_value_cites_line(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("id\tx\ty\nr1\t1.0\t2.0\nr2\t3.0\toops\n")
        with pytest.raises(ConfigurationError, match=r"m\.tsv:3.*'oops'"):
            read_matrix_tsv(path)

    def test_column_count_cites_line(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("id\tx\ty\nr1\t1.0\n")
        with pytest.raises(ConfigurationError, match=r"m\.tsv:2"):
            read_matrix_tsv(path)

    def test_missing_and_empty_files(self, tmp_path):
        with pytest.raises(ConfigurationError, match="missing data file"):
            read_matrix_tsv(tmp_path / "nope.tsv")
        empty = tmp_path / "empty.tsv"
        empty.write_text("")
        with pytest.raises(ConfigurationError, match="empty data file"):
            read_matrix_tsv(empty)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("id\tx\nr1\t1.0\n\nr2\t2.0\n")
        got, _, rows, _ = read_matrix_tsv(path)
        assert rows == ["r1", "r2"]
        npt.assert_array_equal(got, [[1.0], [2.0]])


class TestCollection:
    def build(self, two_mode=False):
        rng = np.random.default_rng(5)
        miss = np.zeros((6, 4), dtype=bool)
        miss[2, 1] = True
        mode1 = [
            ViewData("view1", rng.standard_normal((6, 4)), miss),
            ViewData("view2", rng.standard_normal((6, 3))),
        ]
        mode2 = []
        if two_mode:
            mode2 = [ViewData("pair_view1", rng.standard_normal((4, 5)))]
        return DataCollection(mode1=mode1, mode2=mode2)

    def test_single_mode_round_trip(self, tmp_path):
        data = self.build()
        manifest_path = write_collection(data, tmp_path, k_hint=7)
        assert manifest_path == tmp_path / "collection.json"
        loaded, manifest = read_collection(manifest_path)
        assert manifest["k_hint"] == 7
        assert [e["name"] for e in manifest["views"]] == ["view1", "view2"]
        assert len(loaded.mode1) == 2 and not loaded.mode2
        for orig, got in zip(data.mode1, loaded.mode1):
            assert got.name == orig.name
            obs = ~orig.missing if orig.missing is not None \
                else np.ones(orig.values.shape, dtype=bool)
            npt.assert_array_equal(got.values[obs], orig.values[obs])
            if orig.missing is None:
                assert got.missing is None
            else:
                npt.assert_array_equal(got.missing, orig.missing)

    def test_two_mode_round_trip_shares_entity_names(self, tmp_path):
        data = self.build(two_mode=True)
        write_collection(data, tmp_path)
        loaded, manifest = read_collection(tmp_path / "collection.json")
        assert len(loaded.mode2) == 1
        npt.assert_array_equal(loaded.mode2[0].values,
                               data.mode2[0].values)
        entry = next(e for e in manifest["views"]
                     if e["name"] == "pair_view1")
        assert entry["mode"] == 2 and entry["paired_to"] == "view1"
        # the paired file's row names must be view1's feature names
        first_col = [line.split("\t")[0] for line in
                     (tmp_path / "pair_view1.tsv").read_text().splitlines()]
        assert first_col[1:] == default_col_names("view1", 4)

    def test_pairing_target_mismatch(self, tmp_path):
        data = self.build(two_mode=True)
        path = write_collection(data, tmp_path)
        manifest = json.loads(path.read_text())
        for entry in manifest["views"]:
            if entry["mode"] == 2:
                entry["paired_to"] = "view2"
        path.write_text(json.dumps(manifest))
        with pytest.raises(ConfigurationError, match="paired to 'view2'"):
            read_collection(path)

    def test_pairing_row_names_mismatch(self, tmp_path):
        data = self.build(two_mode=True)
        path = write_collection(data, tmp_path)
        tsv = tmp_path / "pair_view1.tsv"
        lines = tsv.read_text().splitlines()
        lines[1] = "renamed" + lines[1][lines[1].index("\t"):]
        tsv.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigurationError, match="row names"):
            read_collection(path)

    def test_manifest_error_paths(self, tmp_path):
        with pytest.raises(ConfigurationError, match="missing manifest"):
            read_collection(tmp_path / "collection.json")
        bad = tmp_path / "collection.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigurationError, match="corrupt manifest"):
            read_collection(bad)
        bad.write_text(json.dumps({"views": []}))
        with pytest.raises(ConfigurationError, match="no views"):
            read_collection(bad)

    def test_rejects_collection_without_mode1(self, tmp_path):
        rng = np.random.default_rng(1)
        write_matrix_tsv(tmp_path / "p.tsv", rng.standard_normal((3, 2)),
                         ["e1", "e2", "e3"], ["g1", "g2"])
        manifest = {"views": [{"name": "p", "file": "p.tsv", "mode": 2,
                               "paired_to": "view1"}]}
        path = tmp_path / "collection.json"
        path.write_text(json.dumps(manifest))
        with pytest.raises(ConfigurationError, match="no mode-1 views"):
            read_collection(path)


class TestTruthRoundTrip:
    def test_generated_truth_survives(self, tmp_path):
        spec = SimulationSpec(experiment="d", seed=11, n_samples=40,
                              view_dim=25, n_views=2, n_noise_components=2)
        _, truth = generate(spec)
        path = tmp_path / "truth.json"
        write_truth(truth, path)
        got = read_truth(path)
        assert got.view_shapes == truth.view_shapes
        assert len(got.components) == len(truth.components)
        for a, b in zip(truth.components, got.components):
            assert a.mode == b.mode and a.kind == b.kind
            npt.assert_array_equal(a.sample_support, b.sample_support)
            assert set(a.feature_support) == set(b.feature_support)
            for name in a.feature_support:
                npt.assert_array_equal(a.feature_support[name],
                                       b.feature_support[name])
            assert set(a.cells) == set(b.cells)
            for name in a.cells:
                npt.assert_array_equal(a.cells[name], b.cells[name])
        assert len(got.modes) == len(truth.modes)
        for a, b in zip(truth.modes, got.modes):
            npt.assert_array_equal(a.x, b.x)
            npt.assert_array_equal(b.h_x, (b.x != 0).astype(np.uint8))
            for name in a.loadings:
                npt.assert_array_equal(a.loadings[name], b.loadings[name])
                npt.assert_array_equal(b.h[name],
                                       (b.loadings[name] != 0))
        assert got.n_components() == truth.n_components()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="missing truth file"):
            read_truth(tmp_path / "truth.json")


class TestBiclustersRoundTrip:
    def build(self):
        shape = (5, 4)
        cells = np.zeros(shape, dtype=bool)
        # deliberately not a full box so the cell list is load-bearing
        cells[1, 1] = cells[1, 2] = cells[2, 1] = True
        vc1 = ViewCells(rows=np.array([1, 2]), cols=np.array([1, 2]),
                        cells=cells, intensity=np.array([[1.5, 0.0],
                                                         [0.25, -2.0]]))
        pcells = np.zeros(shape, dtype=bool)
        pcells[0, 0] = pcells[3, 0] = True
        vc2 = ViewCells(rows=np.array([0, 3]), cols=np.array([0]),
                        cells=pcells, intensity=np.array([[0.5], [0.75]]),
                        sample_axis=1)
        comps = [Bicluster(mode=0, component=0, views={"view1": vc1}),
                 Bicluster(mode=1, component=2, views={"view1": vc2})]
        return BiclusterSet(components=comps, n_snapshots=9,
                            view_shapes={"view1": shape})

    def test_round_trip(self, tmp_path):
        bics = self.build()
        path = tmp_path / "bics.json"
        write_biclusters(bics, path)
        got = read_biclusters(path)
        assert got.n_snapshots == 9
        assert got.view_shapes == bics.view_shapes
        assert len(got.components) == 2
        for a, b in zip(bics.components, got.components):
            assert a.mode == b.mode and a.component == b.component
            for name in a.views:
                va, vb = a.views[name], b.views[name]
                npt.assert_array_equal(va.rows, vb.rows)
                npt.assert_array_equal(va.cols, vb.cols)
                npt.assert_array_equal(va.cells, vb.cells)
                npt.assert_array_equal(va.intensity, vb.intensity)
                assert va.sample_axis == vb.sample_axis

    def test_sample_axis_defaults_for_old_files(self, tmp_path):
        bics = self.build()
        path = tmp_path / "bics.json"
        write_biclusters(bics, path)
        doc = json.loads(path.read_text())
        for comp in doc["components"]:
            for vc in comp["views"].values():
                del vc["sample_axis"]
        path.write_text(json.dumps(doc))
        got = read_biclusters(path)
        assert all(vc.sample_axis == 0
                   for b in got.components for vc in b.views.values())

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="missing bicluster"):
            read_biclusters(tmp_path / "bics.json")


class TestRobustReportRoundTrip:
    def test_round_trip(self, tmp_path):
        groups = [
            MatchedGroup(
                mode=0,
                members=[MatchedMember(chain_id=0, mode=0, component=1,
                                       similarity=1.0, sign=1.0),
                         MatchedMember(chain_id=1, mode=0, component=0,
                                       similarity=0.91, sign=-1.0)],
                chains_present=2, robust=True,
                consensus_profile=np.array([0.5, -0.25, 0.0])),
            MatchedGroup(
                mode=1,
                members=[MatchedMember(chain_id=1, mode=1, component=3,
                                       similarity=1.0, sign=1.0)],
                chains_present=1, robust=False,
                consensus_profile=np.array([1.0, 2.0])),
        ]
        report = RobustComponentReport(n_chains=2, threshold=0.8,
                                       min_chains_fraction=0.5,
                                       groups=groups)
        path = tmp_path / "robust.json"
        write_robust_report(report, path)
        got = read_robust_report(path)
        assert got.n_chains == 2
        assert got.threshold == 0.8
        assert got.min_chains_fraction == 0.5
        assert len(got.groups) == 2
        for a, b in zip(report.groups, got.groups):
            assert a.mode == b.mode
            assert a.chains_present == b.chains_present
            assert a.robust == b.robust
            npt.assert_array_equal(a.consensus_profile, b.consensus_profile)
            for ma, mb in zip(a.members, b.members):
                assert (ma.chain_id, ma.component) == (mb.chain_id,
                                                       mb.component)
                assert ma.similarity == mb.similarity
                assert ma.sign == mb.sign
                assert mb.mode == a.mode
