import json
import struct

import numpy as np
import pytest

from v2vchan import io
from v2vchan.errors import ConfigError, DataError
from v2vchan.geometry import (AreaPolygon, BuildingPolygon, IntersectionMap, VehicleTrajectory,
                              WallSegment)
from v2vchan.metrics import MetricRow
from v2vchan.pathgain import AngularGainParams
from v2vchan.scatterers import DEFAULT_CLASSES, realize_scatterers
from v2vchan.synthesis import ChannelTensor

SQUARE = [[10, 10], [30, 10], [30, 30], [10, 30]]


def sample_map():
    return IntersectionMap(
        walls=[WallSegment((0, 5), (100, 5), (0, -1))],
        buildings=[BuildingPolygon(SQUARE)],
        scattering_areas=[AreaPolygon([[-50, -50], [0, -50], [0, 0], [-50, 0]], "scattering",
                                      ("non_wall", "diffuse_non_wall"))],
        foliage_areas=[AreaPolygon([[40, -20], [60, -20], [60, 0], [40, 0]], "foliage")],
        name="test")


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestMaps:
    def test_roundtrip(self, tmp_path):
        m = sample_map()
        io.save_map(m, tmp_path / "m.json")
        back = io.load_map(tmp_path / "m.json")
        assert io.map_to_dict(back) == io.map_to_dict(m)

    def test_side_shorthand(self, tmp_path):
        p = write(tmp_path, "m.json", json.dumps({"walls": [{"p0": [0, 0], "p1": [10, 0],
                                                            "side": "left"}]}))
        assert np.allclose(io.load_map(p).walls[0].normal, [0, 1])

    def test_schema_error_names_line(self, tmp_path):
        text = '{\n "walls": [\n  {"p0": [0, 0],\n   "p1": [1, "x"]}\n ]\n}\n'
        p = write(tmp_path, "m.json", text)
        with pytest.raises(ConfigError, match=r"m\.json:4 \(walls/0/p1/1\)"):
            io.load_map(p)

    def test_unknown_key(self, tmp_path):
        p = write(tmp_path, "m.json", '{\n "walls": [],\n "roads": []\n}')
        with pytest.raises(ConfigError, match=r"m\.json:1"):
            io.load_map(p)

    def test_invalid_json(self, tmp_path):
        p = write(tmp_path, "m.json", '{\n "walls": [\n}')
        with pytest.raises(ConfigError, match=r"m\.json:3: invalid JSON"):
            io.load_map(p)

    def test_degenerate_polygon(self, tmp_path):
        doc = {"buildings": [{"vertices": [[0, 0], [1, 1], [2, 2]]}]}
        p = write(tmp_path, "m.json", json.dumps(doc, indent=1))
        with pytest.raises(ConfigError, match="buildings/0"):
            io.load_map(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            io.load_map(tmp_path / "nope.json")


class TestParameters:
    def test_roundtrip(self, tmp_path):
        io.save_parameters(DEFAULT_CLASSES, AngularGainParams(), tmp_path / "p.json")
        classes, ang = io.load_parameters(tmp_path / "p.json")
        assert classes == DEFAULT_CLASSES and ang == AngularGainParams()

    def test_bad_range_located(self, tmp_path):
        doc = {"classes": [io.class_to_dict(c) for c in DEFAULT_CLASSES]}
        doc["classes"][2]["G0_range"] = [-50, -60]
        p = write(tmp_path, "p.json", json.dumps(doc, indent=1))
        with pytest.raises(ConfigError, match=r"p\.json:\d+ \(classes/2\).*lower > upper"):
            io.load_parameters(p)

    def test_duplicate_names(self, tmp_path):
        d = io.class_to_dict(DEFAULT_CLASSES[0])
        p = write(tmp_path, "p.json", json.dumps({"classes": [d, d]}))
        with pytest.raises(ConfigError, match="unique"):
            io.load_parameters(p)


class TestRealization:
    def test_byte_identical_roundtrip(self, tmp_path):
        r = realize_scatterers(sample_map(), DEFAULT_CLASSES, seed=5)
        assert len(r) > 0
        io.save_realization(r, tmp_path / "a.json", {"map": "abc"})
        back = io.load_realization(tmp_path / "a.json")
        io.save_realization(back, tmp_path / "b.json", {"map": "abc"})
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        for key, col in r.arrays.items():
            assert np.array_equal(back.arrays[key], col)

    def test_unknown_class(self, tmp_path):
        r = realize_scatterers(sample_map(), DEFAULT_CLASSES, seed=5)
        doc = io.realization_to_dict(r)
        doc["scatterers"][0]["class"] = "bogus"
        p = write(tmp_path, "r.json", json.dumps(doc, indent=1))
        with pytest.raises(DataError, match="unknown class 'bogus'"):
            io.load_realization(p)


class TestDelimited:
    def test_trajectory_roundtrip(self, tmp_path):
        tr = VehicleTrajectory.straight((-50, -2), (13.9, 0.0), 0.0, 4.0, n=9)
        io.save_trajectory(tr, tmp_path / "t.csv")
        back = io.load_trajectory(tmp_path / "t.csv")
        for a in ("t", "xy", "heading"):
            assert np.array_equal(getattr(back, a), getattr(tr, a))

    def test_bad_cell_reports_line(self, tmp_path):
        p = write(tmp_path, "t.csv", "# comment\nt,x,y,heading\n0,0,0,0\n1,abc,0,0\n")
        with pytest.raises(DataError, match=r"t\.csv:4: column 'x'"):
            io.load_trajectory(p)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "t.csv", "t,x,y\n0,0,0\n")
        with pytest.raises(DataError, match="missing column"):
            io.load_trajectory(p)

    def test_track_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        tr = io.TrackData(np.sort(rng.random(20)), rng.random(20) * 50, rng.random(20))
        io.save_track(tr, tmp_path / "k.csv")
        back = io.load_track(tmp_path / "k.csv")
        assert np.array_equal(back.t, tr.t) and np.array_equal(back.power, tr.power)
        assert back.theta1 is None

    def test_metrics_roundtrip(self, tmp_path):
        rows = [MetricRow(0.0, -60.5, 120.25, 30.125), MetricRow(0.03, -np.inf, np.nan, np.nan)]
        io.write_metrics_csv(rows, tmp_path / "m.csv", "seed=1\nversion=x")
        text = (tmp_path / "m.csv").read_text()
        assert text.startswith("# seed=1\n# version=x\nt_a,gain_dB,mean_delay_ns,rms_ds_ns\n")
        back = io.read_metrics_csv(tmp_path / "m.csv")
        assert back[0] == rows[0]
        assert back[1].gain_db == -np.inf and np.isnan(back[1].rms_ds_ns)


def sample_tensor(shape=(4, 3, 2, 2)):
    rng = np.random.default_rng(1)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return ChannelTensor(v, 5.7e9 + np.arange(shape[0]) * 1e6, np.arange(shape[1]) * 1e-3,
                         {"seed": 42, "parameter_set": "ab" * 8, "map_id": "m"})


class TestContainer:
    def test_tensor_roundtrip_complex128(self, tmp_path):
        t = sample_tensor()
        io.write_tensor(t, tmp_path / "h.bin", {"map": "00"})
        back = io.read_tensor(tmp_path / "h.bin")
        assert np.array_equal(back.values, t.values)
        assert np.array_equal(back.freqs, t.freqs) and np.array_equal(back.times, t.times)
        assert back.metadata["seed"] == 42 and back.metadata["map_id"] == "m"
        assert back.metadata["input_hashes"] == {"map": "00"}

    def test_tensor_roundtrip_complex64(self, tmp_path):
        t = sample_tensor()
        io.write_tensor(t, tmp_path / "h.bin", dtype="complex64")
        back = io.read_tensor(tmp_path / "h.bin")
        assert np.array_equal(back.values, t.values.astype(np.complex64))

    def test_layout_is_little_endian_row_major(self, tmp_path):
        t = sample_tensor((2, 2, 1, 1))
        io.write_tensor(t, tmp_path / "h.bin")
        raw = (tmp_path / "h.bin").read_bytes()
        assert raw.startswith(io.MAGIC)
        (hlen,) = struct.unpack_from("<Q", raw, len(io.MAGIC))
        header = json.loads(raw[len(io.MAGIC) + 8:len(io.MAGIC) + 8 + hlen])
        assert header["shape"] == [2, 2, 1, 1] and header["byte_order"] == "little"
        assert [a["name"] for a in header["axes"]] == list(io.TENSOR_AXES)
        payload = np.frombuffer(raw[len(io.MAGIC) + 8 + hlen:], "<c16")
        assert np.array_equal(payload, t.values.ravel(order="C"))

    def _rewrite_header(self, path, mutate):
        raw = path.read_bytes()
        (hlen,) = struct.unpack_from("<Q", raw, len(io.MAGIC))
        start = len(io.MAGIC) + 8
        header = json.loads(raw[start:start + hlen])
        mutate(header)
        hb = json.dumps(header).encode()
        path.write_bytes(io.MAGIC + struct.pack("<Q", len(hb)) + hb + raw[start + hlen:])

    @pytest.mark.parametrize("field,mutate", [
        ("dtype", lambda h: h.update(dtype="int7")),
        ("shape", lambda h: h.update(shape=[4, 3, 2, 3])),
        ("axes", lambda h: h.update(axes=h["axes"][:3])),
        ("seed", lambda h: h.pop("seed")),
        ("byte_order", lambda h: h.update(byte_order="big")),
        ("container_version", lambda h: h.update(container_version=9)),
    ])
    def test_corrupt_header_names_field(self, tmp_path, field, mutate):
        p = tmp_path / "h.bin"
        io.write_tensor(sample_tensor(), p)
        self._rewrite_header(p, mutate)
        with pytest.raises(DataError, match=f"header field '{field}'"):
            io.read_tensor(p)

    def test_bad_magic(self, tmp_path):
        p = write(tmp_path, "h.bin", "hello")
        with pytest.raises(DataError, match="header field 'magic'"):
            io.read_tensor(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "h.bin"
        io.write_tensor(sample_tensor(), p)
        p.write_bytes(p.read_bytes()[:-5])
        with pytest.raises(DataError, match="header field 'shape'"):
            io.read_tensor(p)

    def test_text_format(self, tmp_path):
        t = sample_tensor((2, 2, 1, 1))
        io.write_tensor_text(t, tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines[0].startswith("# version=") and "seed=42" in lines[0]
        assert lines[1] == "freq_hz,time_s,rx,tx,magnitude,phase_rad"
        assert len(lines) == 2 + 4
        f, tt, r, x, mag, ph = map(float, lines[2].split(","))
        assert mag * np.exp(1j * ph) == pytest.approx(t.values[0, 0, 0, 0], rel=1e-15)


class TestRunConfig:
    def test_relative_paths_and_grids(self, tmp_path):
        p = write(tmp_path, "run.json", json.dumps({
            "map": "m.json", "seed": 3, "freq": {"start": 5.6e9, "stop": 5.8e9, "points": 5}}))
        cfg = io.RunConfig.load(p)
        assert cfg.map == str(tmp_path / "m.json") and cfg.seed == 3
        assert np.allclose(cfg.freq.values(), np.linspace(5.6e9, 5.8e9, 5))
        assert cfg.window_s == 30e-3

    def test_require(self):
        with pytest.raises(ConfigError, match="map"):
            io.RunConfig().require("map")

    def test_bad_seed(self, tmp_path):
        p = write(tmp_path, "run.json", '{\n "seed": -1\n}')
        with pytest.raises(ConfigError, match=r"run\.json:2 \(seed\)"):
            io.RunConfig.load(p)
