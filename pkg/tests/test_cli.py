import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sumcritic import artifacts, cli
from sumcritic.experiment import SpecError, parse_seeds, parse_spec
from sumcritic.metrics import Histogram, histogram_from_csv
from sumcritic.training import RunResult

TINY = """
[experiment]
iterations = 4
eval_every = 2
eval_samples = 500
batch_size = 16
gen_widths = 8, 8
gp_widths = 8, 8
"""


def write(tmp_path, text, name="spec.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def sample_result():
    rng = np.random.default_rng(0)
    masses = rng.uniform(size=100)
    return RunResult(
        config={"model": "taylor", "seed": 3, "gen_widths": [8, 8]},
        trajectory=[(0, 0.1 + 1e-17), (10, 1 / 3)],
        surrogate_trajectory=[(0, 0.0), (10, float("nan"))],
        best_emd=0.1 + 1e-17, best_iteration=0, best_histogram=masses / masses.sum(),
        critic_params={"coeffs": rng.normal(size=20)},
        generator_params={"0.weight": rng.normal(size=(10, 8))},
        failed=False, message="", wall_clock_seconds=1.5)


def assert_same_result(a, b):
    assert a.config == b.config
    assert np.array(a.trajectory).tobytes() == np.array(b.trajectory).tobytes()
    assert np.array(a.surrogate_trajectory).tobytes() == np.array(b.surrogate_trajectory).tobytes()
    assert a.best_emd == b.best_emd and a.best_iteration == b.best_iteration
    assert a.best_histogram.tobytes() == b.best_histogram.tobytes()
    for name in ("critic_params", "generator_params"):
        da, db = getattr(a, name), getattr(b, name)
        assert da.keys() == db.keys()
        for k in da:
            assert da[k].shape == db[k].shape and da[k].tobytes() == db[k].tobytes()
    assert (a.failed, a.message) == (b.failed, b.message)


def test_run_result_round_trip(tmp_path):
    r = sample_result()
    path = tmp_path / "r.json"
    artifacts.write_run_result(path, r)
    back = artifacts.read_run_result(path)
    assert_same_result(r, back)
    assert back.wall_clock_seconds == 1.5
    assert "wall_clock" not in path.read_text()


def test_run_result_text_is_stable():
    r = sample_result()
    text = artifacts.dumps_run_result(r)
    assert artifacts.dumps_run_result(artifacts.loads_run_result(text)) == text


def test_run_result_rejects_other_json():
    with pytest.raises(ValueError):
        artifacts.loads_run_result(json.dumps({"format": "other"}))


@settings(max_examples=100, deadline=None)
@given(st.floats(allow_nan=False))
def test_hex_floats_are_exact(x):
    assert artifacts._unhex(artifacts._hex(x)) == x


cells = st.lists(st.builds(artifacts.CellRecord,
                           st.sampled_from(["taylor", "fourier", "wgan_gp"]),
                           st.sampled_from(["sawtooth", "mixture"]), st.integers(1, 4),
                           st.floats(0, 1), st.integers(0, 20000), st.booleans()),
                 max_size=12, unique_by=lambda c: (c.model, c.source, c.seed))


@settings(max_examples=50, deadline=None)
@given(cells)
def test_cells_csv_round_trip(records):
    assert artifacts.cells_from_csv(artifacts.cells_to_csv(records)) == records


@settings(max_examples=50, deadline=None)
@given(cells)
def test_summary_round_trip_and_means(records):
    table = artifacts.summary_table(records)
    assert artifacts.summary_from_csv(artifacts.summary_to_csv(records)) == table
    for model, row in table.items():
        for src, entry in row.items():
            values = [c.best_emd for c in records if (c.model, c.source) == (model, src)]
            assert entry["mean"] == np.mean(values)


def test_histogram_csv_round_trip(tmp_path):
    h = Histogram(np.full(100, 0.01))
    artifacts.write_histogram(tmp_path / "h.csv", h)
    assert artifacts.read_histogram(tmp_path / "h.csv").masses.tobytes() == h.masses.tobytes()


def test_parse_seeds():
    assert parse_seeds("1-4") == [1, 2, 3, 4]
    assert parse_seeds("3, 7, 9-10") == [3, 7, 9, 10]
    with pytest.raises(ValueError):
        parse_seeds("4-1")


def test_spec_grid_and_overrides():
    text = TINY + "[grid a]\nmodels = taylor, fourier\nsources = mixture\nseeds = 1-2\nlam = 5\n"
    spec = parse_spec(text, overrides={"iterations": "6"})
    assert [c.name for c in spec.cells] == ["taylor-mixture-s1", "taylor-mixture-s2",
                                            "fourier-mixture-s1", "fourier-mixture-s2"]
    cfg = spec.cells[0].config
    assert (cfg.iterations, cfg.lam, cfg.gen_widths, cfg.batch_size) == (6, 5.0, (8, 8), 16)
    assert parse_spec(text, overrides={"lam": "2"}).cells[0].config.lam == 2.0


def test_spec_defaults_to_desk_preset():
    spec = parse_spec("[g]\nmodels = taylor\nsources = sawtooth\nseeds = 1\n")
    assert spec.cells[0].config.gen_widths == (64, 64, 64)
    assert spec.cells[0].config.iterations == 20_000
    full = parse_spec("[experiment]\npreset = full\n[g]\nmodels = taylor\nsources = sawtooth\nseeds = 1\n")
    assert full.cells[0].config.gen_widths == (500, 500, 500)


@pytest.mark.parametrize("text,line,needle", [
    ("[experiment]\nbogus = 1\n", 2, "unknown setting"),
    ("[experiment]\n\niterations = many\n", 3, "bad value"),
    ("[g]\nmodels = taylor, svm\nsources = mixture\nseeds = 1\n", 2, "unknown model"),
    ("[g]\nmodels = taylor\nsources = mixture\nseeds = 1, 1\n", 4, "distinct"),
    ("[g]\nmodels = taylor\nsources = mixture\n", 1, "missing seeds"),
    ("[g]\nmodels = taylor\nsources = moons\nseeds = 1\n", 1, "moons"),
    ("[experiment]\npreset = huge\n", 2, "unknown preset"),
    ("[g]\nmodels = taylor\nsources = mixture\nseeds = 1\nseed = 3\n", 5, "per cell"),
])
def test_spec_errors_name_the_line(text, line, needle):
    with pytest.raises(SpecError) as info:
        parse_spec(text, "s.ini")
    assert f"s.ini:{line}:" in str(info.value)
    assert needle in str(info.value)


def test_spec_syntax_error():
    with pytest.raises(SpecError) as info:
        parse_spec("[g]\nmodels\n", "s.ini")
    assert "s.ini:2:" in str(info.value)
    with pytest.raises(SpecError) as info:
        parse_spec("models = taylor\n", "s.ini")
    assert "s.ini:1:" in str(info.value)
    with pytest.raises(SpecError) as info:
        parse_spec("[g]\nseeds = 1\nseeds = 2\n", "s.ini")
    assert "s.ini:3:" in str(info.value)


def test_empty_spec_gives_empty_summary(tmp_path, capsys):
    spec = write(tmp_path, "[experiment]\niterations = 5\n")
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "out")]) == 0
    text = (tmp_path / "out" / "summary.csv").read_text()
    assert text.splitlines() == ["model,seed"]
    assert artifacts.cells_from_csv((tmp_path / "out" / "cells.csv").read_text()) == []


def test_train_writes_artifacts_and_is_reproducible(tmp_path):
    body = TINY + "[grid a]\nmodels = taylor, wgan_gp\nsources = mixture\nseeds = 1\n"
    spec = write(tmp_path, body)
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "b")]) == 0
    for name in ("taylor-mixture-s1", "wgan_gp-mixture-s1"):
        ra = (tmp_path / "a" / "runs" / f"{name}.json").read_bytes()
        assert ra == (tmp_path / "b" / "runs" / f"{name}.json").read_bytes()
        hist = histogram_from_csv((tmp_path / "a" / "hists" / f"{name}.csv").read_text())
        run = artifacts.read_run_result(tmp_path / "a" / "runs" / f"{name}.json")
        assert hist.masses.tobytes() == run.best_histogram.tobytes()
        assert run.config["iterations"] == 4
    records = artifacts.cells_from_csv((tmp_path / "a" / "cells.csv").read_text())
    assert [(r.model, r.source, r.seed) for r in records] == [("taylor", "mixture", 1), ("wgan_gp", "mixture", 1)]
    prov = artifacts.read_provenance(tmp_path / "a" / "runs" / "taylor-mixture-s1.json")
    assert prov["evaluation"]["bins"] == 100


def test_reuse_skips_matching_cells(tmp_path):
    spec = write(tmp_path, TINY + "[g]\nmodels = taylor\nsources = sawtooth\nseeds = 1\n")
    out = tmp_path / "out"
    assert cli.main(["train", str(spec), "--out", str(out)]) == 0
    run = out / "runs" / "taylor-sawtooth-s1.json"
    before = run.stat().st_mtime_ns
    assert cli.main(["train", str(spec), "--out", str(out), "--reuse"]) == 0
    assert run.stat().st_mtime_ns == before
    # a changed setting invalidates the cached run
    assert cli.main(["train", str(spec), "--out", str(out), "--reuse", "--iterations=2"]) == 0
    assert artifacts.read_run_result(run).config["iterations"] == 2


def test_parallel_workers_match_serial(tmp_path):
    spec = write(tmp_path, TINY + "[g]\nmodels = fourier\nsources = discrete\nseeds = 1-2\n")
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "s")]) == 0
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "p"), "--workers", "2"]) == 0
    for seed in (1, 2):
        name = f"runs/fourier-discrete-s{seed}.json"
        assert (tmp_path / "s" / name).read_bytes() == (tmp_path / "p" / name).read_bytes()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    spec = write(tmp_path, "[experiment]\n")
    assert cli.main(["train", str(spec)]) == 0
    assert (tmp_path / "env" / "summary.csv").exists()


def exit_code(args):
    try:
        return cli.main(args)
    except SystemExit as exc:  # argparse exits directly
        return exc.code


@pytest.mark.parametrize("args", [["train"], ["train", "missing.ini"], ["frobnicate"],
                                  ["emit-hist", "moons", "x.csv"], ["oracle-check", "--nope=1"]])
def test_usage_errors_exit_1(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert exit_code(args) == 1


def test_bad_override_is_usage_error(tmp_path):
    spec = write(tmp_path, "[experiment]\n")
    assert cli.main(["train", str(spec), "--out", str(tmp_path), "--frobs=2"]) == 1
    assert cli.main(["train", str(spec), "--out", str(tmp_path), "stray"]) == 1


def test_missing_cities_file_is_usage_error(tmp_path):
    spec = write(tmp_path, TINY + f"cities_path = {tmp_path / 'none.csv'}\n"
                 "[g]\nmodels = taylor\nsources = cities\nseeds = 1\n")
    assert cli.main(["train", str(spec), "--out", str(tmp_path / "o")]) == 1


def test_unwritable_output_is_infrastructure_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    spec = write(tmp_path, "[experiment]\n")
    assert cli.main(["train", str(spec), "--out", str(blocker / "sub")]) == 2


def read_masses(path):
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert rows[0] == ["bin_center", "mass"]
    return np.array([[float(a), float(b)] for a, b in rows[1:]])


def test_emit_hist_sawtooth(tmp_path):
    assert cli.main(["emit-hist", "sawtooth", str(tmp_path / "s.csv")]) == 0
    rows = read_masses(tmp_path / "s.csv")
    centers, masses = rows[:, 0], rows[:, 1]
    assert rows.shape == (100, 2)
    assert np.all(masses[centers > 0] == 0)
    # density 2(x+1) on [-1, 0]: bin i holds about (2i+1) / 2500
    expected = (2 * np.arange(50) + 1) / 2500
    assert np.all(np.abs(masses[:50] - expected) < 5 * np.sqrt(expected / 1e6) + 1e-6)


def test_emit_hist_discrete(tmp_path):
    assert cli.main(["emit-hist", "discrete", str(tmp_path / "d.csv")]) == 0
    masses = read_masses(tmp_path / "d.csv")[:, 1]
    nz = np.flatnonzero(masses)
    assert nz.size == 3
    np.testing.assert_allclose(masses[nz], [0.25, 0.5, 0.25], atol=0.002)


def test_emit_hist_mixture(tmp_path):
    assert cli.main(["emit-hist", "mixture", str(tmp_path / "m.csv")]) == 0
    rows = read_masses(tmp_path / "m.csv")
    centers, masses = rows[:, 0], rows[:, 1]
    assert abs(masses[centers > 0].sum() - 0.5) < 0.002
    assert abs(centers[np.argmax(masses[centers > 0]) + 50] - 0.5) < 0.03
    assert abs(centers[np.argmax(masses[centers < 0])] + 0.5) < 0.03
    np.testing.assert_allclose(masses, masses[::-1], atol=0.002)


def test_emit_hist_from_run_result(tmp_path):
    r = sample_result()
    artifacts.write_run_result(tmp_path / "r.json", r)
    assert cli.main(["emit-hist", str(tmp_path / "r.json"), str(tmp_path / "h.csv")]) == 0
    assert np.array_equal(read_masses(tmp_path / "h.csv")[:, 1], r.best_histogram)
    (tmp_path / "junk.json").write_text("{}")
    assert cli.main(["emit-hist", str(tmp_path / "junk.json"), str(tmp_path / "h2.csv")]) == 1


def test_oracle_check_passes(capsys):
    assert cli.main(["oracle-check"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3 and "all checks passed" in out


def test_oracle_check_catches_corrupt_bounds(capsys):
    assert cli.main(["oracle-check", "--corrupt-bounds", "0.5"]) != 0
    assert "[FAIL]" in capsys.readouterr().out
