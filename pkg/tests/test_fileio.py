import json
import math
import os

import numpy as np
import pytest

from spherefit import (
    EllipseObservation,
    GateReport,
    ImageNetwork,
    Sphere,
    SphereModel,
    TiePoint,
)
from spherefit.fileio import (
    CONVENTION,
    FileFormatError,
    GateRecord,
    PlyCloud,
    SphereEntry,
    load_ellipses,
    load_network,
    load_ply,
    load_spheres,
    save_ellipses,
    save_network,
    save_ply,
    save_spheres,
    scale_ply,
)
from oracles import look_at_view


@pytest.fixture
def network():
    views = [look_at_view("a", [-1.0, 0.0, -5.0], [0, 0, 0],
                          iop_cov=np.diag([0.1, 0.1, 0.4])),
             look_at_view("b", [1.0, 0.0, -5.0], [0, 0, 0])]
    ties = [TiePoint(np.array([0.1, 0.2, 0.0]), frozenset(["a", "b"]))]
    return ImageNetwork(views, ties)


class TestNetworkFile:
    def test_round_trip(self, network, tmp_path):
        path = str(tmp_path / "net.json")
        save_network(network, path)
        loaded = load_network(path)
        for orig, back in zip(network.views, loaded.views):
            assert orig.image_id == back.image_id
            assert orig.f == back.f and orig.px == back.px and orig.py == back.py
            assert np.array_equal(orig.rot, back.rot)
            assert np.array_equal(orig.t, back.t)
            if orig.iop_cov is None:
                assert back.iop_cov is None
            else:
                assert np.array_equal(orig.iop_cov, back.iop_cov)
        assert len(loaded.tie_points) == 1
        assert loaded.tie_points[0].visible_in == frozenset(["a", "b"])

    def test_convention_header_is_mandatory(self, network, tmp_path):
        path = str(tmp_path / "net.json")
        save_network(network, path)
        data = json.load(open(path))
        del data["convention"]
        open(path, "w").write(json.dumps(data))
        with pytest.raises(FileFormatError, match="convention"):
            load_network(path)
        data["convention"] = "x_world = rot * x_cam + t"
        open(path, "w").write(json.dumps(data))
        with pytest.raises(FileFormatError, match="convention"):
            load_network(path)

    def test_invalid_rotation_is_rejected(self, network, tmp_path):
        path = str(tmp_path / "net.json")
        save_network(network, path)
        data = json.load(open(path))
        data["views"][0]["rot"] = [2.0, 0, 0, 0, 1, 0, 0, 0, 1]
        open(path, "w").write(json.dumps(data))
        with pytest.raises(FileFormatError):
            load_network(path)

    def test_bad_json(self, tmp_path):
        path = str(tmp_path / "net.json")
        open(path, "w").write("{not json")
        with pytest.raises(FileFormatError, match="JSON"):
            load_network(path)

    def test_convention_constant_documents_transform(self):
        assert CONVENTION == "x_cam = rot * x_world + t"


class TestEllipseFile:
    def test_round_trip_with_and_without_covariance(self, tmp_path):
        cov = np.diag([0.25, 0.25, 0.04, 0.04])
        cov[0, 1] = cov[1, 0] = 0.01
        ellipses = [
            EllipseObservation("img-0", "e0", 700.25, 401.5, 120.0, 100.0, 0.3, cov=cov),
            EllipseObservation("img-1", "e1", 20.0, 30.0, 5.0, 4.0, -1.2),
        ]
        path = str(tmp_path / "e.csv")
        save_ellipses(ellipses, path)
        loaded = load_ellipses(path)
        assert len(loaded) == 2
        for orig, back in zip(ellipses, loaded):
            assert orig.image_id == back.image_id
            assert orig.ellipse_id == back.ellipse_id
            assert orig.x_ce == back.x_ce and orig.y_ce == back.y_ce
            assert orig.a_e == back.a_e and orig.b_e == back.b_e
            assert orig.theta == back.theta
        assert np.array_equal(loaded[0].cov, cov)
        assert loaded[1].cov is None

    def test_header_is_mandatory(self, tmp_path):
        path = str(tmp_path / "e.csv")
        open(path, "w").write("")
        with pytest.raises(FileFormatError, match="header"):
            load_ellipses(path)

    def test_missing_columns(self, tmp_path):
        path = str(tmp_path / "e.csv")
        open(path, "w").write("image_id,ellipse_id,x_ce\n")
        with pytest.raises(FileFormatError, match="missing columns"):
            load_ellipses(path)

    def test_header_only_file_is_empty(self, tmp_path):
        path = str(tmp_path / "e.csv")
        save_ellipses([], path)
        assert load_ellipses(path) == []

    def test_partial_covariance_rejected(self, tmp_path):
        path = str(tmp_path / "e.csv")
        save_ellipses([EllipseObservation("i", "e", 1.0, 2.0, 3.0, 2.0, 0.0,
                                          cov=np.eye(4))], path)
        lines = open(path).read().splitlines()
        cells = lines[1].split(",")
        cells[-1] = ""
        open(path, "w").write("\n".join([lines[0], ",".join(cells)]) + "\n")
        with pytest.raises(FileFormatError, match="covariance"):
            load_ellipses(path)

    def test_axis_order_validated_per_row(self, tmp_path):
        path = str(tmp_path / "e.csv")
        header = "image_id,ellipse_id,x_ce,y_ce,a_e,b_e,theta_rad"
        open(path, "w").write(header + "\ni,e,0,0,1.0,2.0,0.0\n")
        with pytest.raises(FileFormatError, match="semi-major"):
            load_ellipses(path)


class TestSphereFile:
    def entry(self):
        model = SphereModel(
            sphere=Sphere([0.1, -0.2, 0.3], 0.08),
            per_view_radii=[("img-0", 0.0799), ("img-1", 0.0801)],
            radius_spread=0.0001,
            triangulation_residual=0.02,
            scale_applied=None)
        report = GateReport(tau=0.001, sigma_tau=0.002, k=2.0, accepted=True)
        return SphereEntry(sphere_id="s000", model=model,
                           ellipses=[("img-0", "ball-0"), ("img-1", "ball-0")],
                           gate_records=[GateRecord("img-0", "ball-0", report),
                                         GateRecord("img-1", "ball-0", report)])

    def test_lossless_round_trip(self, tmp_path):
        path = str(tmp_path / "s.json")
        entry = self.entry()
        save_spheres([entry], path)
        loaded = load_spheres(path)
        assert len(loaded) == 1
        back = loaded[0]
        assert back.sphere_id == entry.sphere_id
        assert np.array_equal(back.model.sphere.center, entry.model.sphere.center)
        assert back.model.sphere.radius == entry.model.sphere.radius
        assert back.model.per_view_radii == entry.model.per_view_radii
        assert back.model.radius_spread == entry.model.radius_spread
        assert back.model.triangulation_residual == entry.model.triangulation_residual
        assert back.model.scale_applied == entry.model.scale_applied
        assert back.ellipses == entry.ellipses
        assert back.gate_records == entry.gate_records
        # serialize -> parse -> serialize is byte-stable
        path2 = str(tmp_path / "s2.json")
        save_spheres(loaded, path2)
        assert open(path).read() == open(path2).read()

    def test_bad_entry(self, tmp_path):
        path = str(tmp_path / "s.json")
        open(path, "w").write(json.dumps({"spheres": [{"sphere_id": "x"}]}))
        with pytest.raises(FileFormatError, match="sphere entry"):
            load_spheres(path)


PLY_TEXT = """ply
format ascii 1.0
comment generated for tests
element vertex 3
property float x
property float y
property float z
property uchar red
end_header
1.0 2.0 3.0 255
-1.5 0.25 4.0 128
0.0 0.0 1.0 0
"""


class TestPly:
    def test_round_trip_and_scaling(self, tmp_path):
        path = str(tmp_path / "in.ply")
        open(path, "w").write(PLY_TEXT)
        cloud = load_ply(path)
        assert [name for _, name in cloud.properties] == ["x", "y", "z", "red"]
        scaled = scale_ply(cloud, 2.0)
        out = str(tmp_path / "out.ply")
        save_ply(scaled, out)
        back = load_ply(out)
        assert back.rows[0][:3] == ["2.0", "4.0", "6.0"]
        assert [r[3] for r in back.rows] == ["255", "128", "0"]  # passthrough
        assert back.comments == ["generated for tests"]

    def test_scale_then_inverse_restores_values(self, tmp_path):
        path = str(tmp_path / "in.ply")
        open(path, "w").write(PLY_TEXT)
        cloud = load_ply(path)
        back = scale_ply(scale_ply(cloud, 3.0), 1.0 / 3.0)
        for row, orig in zip(back.rows, cloud.rows):
            for i in range(3):
                assert math.isclose(float(row[i]), float(orig[i]), abs_tol=1e-12)

    def test_rejects_binary_and_faces(self, tmp_path):
        path = str(tmp_path / "bad.ply")
        open(path, "w").write("ply\nformat binary_little_endian 1.0\nend_header\n")
        with pytest.raises(FileFormatError, match="ascii"):
            load_ply(path)
        open(path, "w").write("ply\nformat ascii 1.0\nelement face 1\nend_header\n")
        with pytest.raises(FileFormatError, match="vertex"):
            load_ply(path)

    def test_rejects_vertex_count_mismatch(self, tmp_path):
        path = str(tmp_path / "bad.ply")
        open(path, "w").write("ply\nformat ascii 1.0\nelement vertex 2\n"
                              "property float x\nproperty float y\nproperty float z\n"
                              "end_header\n1 2 3\n")
        with pytest.raises(FileFormatError, match="vertices"):
            load_ply(path)

    def test_missing_xyz(self):
        cloud = PlyCloud(properties=[("float", "x"), ("float", "y")],
                         rows=[["1", "2"]], comments=[])
        with pytest.raises(FileFormatError, match="x/y/z"):
            scale_ply(cloud, 2.0)


class TestAtomicity:
    def test_no_temp_files_left_behind(self, tmp_path, network):
        path = str(tmp_path / "net.json")
        save_network(network, path)
        save_network(network, path)  # overwrite
        leftovers = [f for f in os.listdir(tmp_path) if f.startswith(".tmp-")]
        assert leftovers == []
