import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracburgers.errors import ConfigError, OutputError, SnapshotError
from fracburgers.io import (
    DEFAULT_NORMS,
    FITS_HEADER,
    RunConfig,
    fmt,
    load_snapshot,
    parse_config,
    read_manifest,
    save_snapshot,
    serialize_config,
    write_fits,
    write_sweep_outputs,
)
from fracburgers.scaling import FitResult, Skipped, SweepPlan, SweepReport
from fracburgers.spectral import Grid
from fracburgers.stepper import SolverState

from conftest import random_field


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config("alpha: 1.5\nnu: 1e-3\nn: 8192\nflux: burgers\n")
        assert isinstance(cfg, RunConfig)
        assert cfg.nu == 1e-3 and cfg.n == 8192
        assert cfg.dt_cfl == 0.4 and cfg.scheme == "ETDRK4" and cfg.u0 == "default"
        assert cfg.norms == DEFAULT_NORMS

    @pytest.mark.parametrize(
        "text,key",
        [
            ("alpha: 0.8\nnu: 1e-3\nn: 64\n", "alpha"),
            ("alpha: 2.5\nnu: 1e-3\nn: 64\n", "alpha"),
            ("alpha: 1.5\nnu: 0\nn: 64\n", "nu"),
            ("alpha: 1.5\nnu: 1e-3\nn: 63\n", "n"),
            ("alpha: 1.5\nnu: 1e-3\n", "n"),
            ("alpha: 1.5\nnu: 1e-3\nn: 64\ncolour: red\n", "colour"),
            ("alpha: 1.5\nnu: 1e-3\nn: 64\nflux: cubic\n", "flux"),
            ("alpha: 1.5\nnu: 1e-3\nn: 64\nscheme: RK4\n", "scheme"),
            ("alpha: 1.5\nnu: 1e-3\nn: 64\nu0: blob\n", "u0"),
            ("alpha: 1.5\nnu: 1e-3\nn: 64\nnorms: [X3]\n", "norms"),
            ("alpha: 1.5\nnu: abc\nn: 64\n", "nu"),
            ("alpha: 2\nnu_list: [0.001, 0.002]\n", "nu_list"),
            ("alpha: 2\nnu_list: [0.001]\nwhatever: 1\n", "whatever"),
        ],
    )
    def test_errors_name_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.key == key

    def test_not_mapping(self):
        with pytest.raises(ConfigError):
            parse_config("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            parse_config("alpha: [1\n")

    def test_explicit_modes(self):
        cfg = parse_config("alpha: 2\nnu: 0.01\nn: 256\nu0: [[1, 1.0, 0.0], [3, 0.2, 0.5]]\n")
        assert cfg.u0 == ((1, 1.0, 0.0), (3, 0.2, 0.5))

    def test_sweep(self):
        plan = parse_config("alpha: 2\nnu_list: [0.002, 0.001]\ngrid_rule: {kind: pow2, factor: 4}\nK: 2\n")
        assert isinstance(plan, SweepPlan)
        assert plan.nu_list == (0.002, 0.001) and plan.grid_rule.factor == 4.0 and plan.K == 2.0


modes = st.lists(
    st.tuples(st.integers(1, 20), st.floats(-2, 2, allow_nan=False), st.floats(-3.2, 3.2, allow_nan=False)),
    min_size=1,
    max_size=4,
).map(tuple)
run_configs = st.builds(
    RunConfig,
    alpha=st.floats(1.01, 2.0),
    nu=st.floats(1e-6, 1.0),
    n=st.sampled_from([64, 256, 1024, 16384]),
    flux=st.sampled_from(["burgers", "burgers_quartic_mix"]),
    t_end=st.none() | st.floats(1e-3, 100.0),
    dt_max=st.floats(1e-6, 1.0),
    dt_cfl=st.floats(0.01, 1.0),
    scheme=st.sampled_from(["ETDRK2", "ETDRK4"]),
    u0=st.sampled_from(["default", "sine"]) | modes,
    samples_log=st.integers(0, 500),
    samples_lin=st.integers(0, 500),
    norms=st.lists(st.sampled_from(list(DEFAULT_NORMS) + ["W2,1", "H1.5", "L4"]), min_size=1, max_size=5).map(tuple),
    p_values=st.lists(st.floats(0, 8), max_size=5).map(tuple),
    ell_count=st.integers(2, 200),
    K=st.floats(1.0, 10.0),
    M=st.floats(1.0, 4.0),
    kappa=st.floats(0.1, 4.0),
    snapshots=st.integers(0, 10),
    out=st.none() | st.sampled_from(["out", "/tmp/x y"]),
)


class TestRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(run_configs)
    def test_run_config(self, cfg):
        assert parse_config(serialize_config(cfg)) == cfg

    @settings(max_examples=25, deadline=None)
    @given(
        alpha=st.sampled_from([1.5, 2.0]),
        nus=st.lists(st.floats(2e-4, 2e-3), min_size=0, max_size=4, unique=True),
        K=st.floats(1.0, 4.0),
        kappa=st.floats(0.5, 4.0),
    )
    def test_sweep_plan(self, alpha, nus, K, kappa):
        nus = tuple(sorted(nus, reverse=True))
        if alpha == 1.5:
            nus = tuple(math.sqrt(v) for v in nus)
        plan = SweepPlan(alpha, nus, K=K, kappa=kappa, observables=("norm:H1", "S2:J2", "E:J2"))
        assert parse_config(serialize_config(plan)) == plan


class TestSnapshot:
    def state(self, rng, n=64):
        f = random_field(Grid(n), rng)
        return SolverState(f.with_coeffs(f.coeffs, time_tag=0.375), 0.375, 12, 1.5e-3)

    def test_round_trip(self, rng, tmp_path):
        st_ = self.state(rng)
        save_snapshot(st_, tmp_path / "a.fbrg", 1.5, 1e-3)
        snap = load_snapshot(tmp_path / "a.fbrg")
        np.testing.assert_array_equal(snap.state.field.coeffs, st_.field.coeffs)
        assert (snap.alpha, snap.nu, snap.state.t) == (1.5, 1e-3, 0.375)
        assert (snap.state.step_count, snap.state.dt_last) == (12, 1.5e-3)

    def test_layout(self, rng, tmp_path):
        st_ = self.state(rng)
        save_snapshot(st_, tmp_path / "a.fbrg", 2.0, 0.01)
        data = (tmp_path / "a.fbrg").read_bytes()
        assert data[:4] == b"FBRG"
        assert int.from_bytes(data[4:8], "little") == 1
        assert int.from_bytes(data[8:16], "little") == 64
        payload = np.frombuffer(data[40 : 40 + 33 * 16], dtype="<f8")
        np.testing.assert_array_equal(payload[0::2], st_.field.coeffs.real)
        np.testing.assert_array_equal(payload[1::2], st_.field.coeffs.imag)

    def test_truncated(self, rng, tmp_path):
        save_snapshot(self.state(rng), tmp_path / "a.fbrg", 2.0, 0.01)
        data = (tmp_path / "a.fbrg").read_bytes()
        (tmp_path / "b.fbrg").write_bytes(data[:-10])
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "b.fbrg")
        (tmp_path / "c.fbrg").write_bytes(data[:20])
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "c.fbrg")

    def test_bad_magic_and_version(self, rng, tmp_path):
        save_snapshot(self.state(rng), tmp_path / "a.fbrg", 2.0, 0.01)
        data = bytearray((tmp_path / "a.fbrg").read_bytes())
        bad = bytearray(data)
        bad[:4] = b"XXXX"
        (tmp_path / "m.fbrg").write_bytes(bytes(bad))
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "m.fbrg")
        bad = bytearray(data)
        bad[4] = 9
        (tmp_path / "v.fbrg").write_bytes(bytes(bad))
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "v.fbrg")

    def test_nonzero_mean(self, rng, tmp_path):
        save_snapshot(self.state(rng), tmp_path / "a.fbrg", 2.0, 0.01)
        data = bytearray((tmp_path / "a.fbrg").read_bytes())
        data[40:48] = np.float64(1.0).tobytes()
        (tmp_path / "z.fbrg").write_bytes(bytes(data))
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "z.fbrg")

    def test_missing(self, tmp_path):
        with pytest.raises(SnapshotError):
            load_snapshot(tmp_path / "none.fbrg")


class TestOutputs:
    @settings(max_examples=200)
    @given(st.floats(allow_nan=False))
    def test_fmt_round_trip(self, x):
        assert float(fmt(x)) == x

    def test_fits_csv(self, tmp_path):
        fits = {
            "E:J2": FitResult(-1.9, 0.1, 0.99, 8, (10.0, 100.0)).judged(-2.0, 0.3),
            "norm:H1": Skipped("need 3 viscosities", -0.5),
        }
        write_fits(tmp_path / "fits.csv", fits)
        with open(tmp_path / "fits.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert list(rows[0]) == list(FITS_HEADER)
        assert rows[0]["observable"] == "E:J2" and float(rows[0]["theoretical"]) == -2.0
        assert float(rows[0]["slope"]) == -1.9 and rows[0]["pass"] == "true"
        assert rows[1]["pass"] == "skipped"

    def test_comma_labels_quoted(self, tmp_path):
        write_fits(tmp_path / "fits.csv", {"norm:W1,inf": FitResult(-1.0, 0.0, 1.0, 3)})
        with open(tmp_path / "fits.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[1][0] == "norm:W1,inf" and len(rows[1]) == len(FITS_HEADER)

    def test_empty_sweep(self, tmp_path):
        plan = SweepPlan(2.0, (), observables=("norm:H1", "norm:W1,inf", "E:J2"))
        out = write_sweep_outputs(tmp_path / "o", SweepReport(plan, {}, {}))
        for name in ("norms.csv", "structure.csv", "spectrum.csv", "fits.csv"):
            lines = (out / name).read_text().splitlines()
            assert len(lines) == 1
        assert (out / "norms.csv").read_text().startswith('nu,H1,"W1,inf"')
        man = read_manifest(out / "manifest.json")
        assert man["kind"] == "sweep" and man["runs"] == []
        assert man["constants"]["K"] == 4.0

    def test_unwritable(self, tmp_path):
        (tmp_path / "file").write_text("x")
        plan = SweepPlan(2.0, ())
        with pytest.raises(OutputError):
            write_sweep_outputs(tmp_path / "file" / "sub", SweepReport(plan, {}, {}))

    def test_manifest_version(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"format_version": 99}))
        with pytest.raises(OutputError):
            read_manifest(tmp_path / "m.json")
