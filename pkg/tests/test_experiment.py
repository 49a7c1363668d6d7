import csv
import dataclasses
import json
import logging

import numpy as np
import pytest

from turbmimo.config import ConfigError, SimConfig, format_config, load_config, parse_assignments, with_overrides
from turbmimo.experiment import (
    ROW_FIELDS,
    PointAccumulator,
    _Moments,
    read_results,
    run_sweep,
    simulate_point,
    simulate_realization,
    write_results,
)

SMALL = SimConfig(
    n_points=64,
    spacing=5e-3,
    n_slabs=4,
    n_mc=6,
    cn2_sweep=(1e-15, 1e-14),
    n_modes_sweep=(2, 3),
)


def test_defaults_match_documented_values():
    c = SimConfig()
    assert (c.wavelength, c.path_length, c.waist) == (1550e-9, 10e3, 0.03)
    assert (c.n_points, c.spacing, c.outer_scale, c.inner_scale) == (128, 2.5e-3, 30.0, 5e-3)
    assert (c.n_slabs, c.rho_z, c.n_mc) == (40, 0.9, 200)
    cn2 = c.cn2_values()
    assert len(cn2) == 13 and cn2[0] == pytest.approx(1e-16) and cn2[-1] == pytest.approx(1e-13)
    assert np.allclose(np.diff(np.log10(cn2)), 0.25)
    assert c.regimes == ("distinguishable", "indistinguishable")


def test_empty_config_file_gives_defaults(tmp_path, caplog):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n\n")
    with caplog.at_level(logging.INFO):
        assert load_config(path) == SimConfig()
    assert "defaults" in caplog.text


def test_config_roundtrip(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(format_config(SMALL))
    assert load_config(path) == SMALL


def test_scientific_and_decimal_notation():
    v = parse_assignments(["cn2_min = 1e-15", "waist = 0.025", "n_mc = 10", "absorber = yes"])
    assert v == {"cn2_min": 1e-15, "waist": 0.025, "n_mc": 10, "absorber": True}


def test_malformed_value_names_line(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("n_mc = 10\ncn2_min = abc\n")
    with pytest.raises(ConfigError, match=r"bad\.cfg:2: .*cn2_min"):
        load_config(path)


@pytest.mark.parametrize("line", ["cn2 = 1e-14", "n_mc 10", "n_mc = 2.5", "absorber = maybe"])
def test_config_rejects(line):
    with pytest.raises(ConfigError):
        parse_assignments([line])


@pytest.mark.parametrize(
    "kwargs",
    [dict(n_mc=0), dict(cn2_min=0.0), dict(cn2_min=1e-13, cn2_max=1e-14), dict(n_modes_sweep=(6,)),
     dict(regimes=("quantum",)), dict(rho_z=1.5), dict(n_points=0)],
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        SimConfig(**kwargs)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_overrides():
    c = with_overrides(SimConfig(), ["n_mc=10", "cn2_points = 3"])
    assert c.n_mc == 10 and len(c.cn2_values()) == 3


def test_moments_merge_matches_sequential(rng):
    x = rng.standard_normal(57)
    seq, a, b = _Moments(), _Moments(), _Moments()
    for v in x:
        seq.add(v)
    for v in x[:20]:
        a.add(v)
    for v in x[20:]:
        b.add(v)
    a.merge(b)
    assert a.count == seq.count
    assert a.result() == pytest.approx(seq.result(), rel=1e-12)
    assert seq.result()[0] == pytest.approx(x.mean())
    assert seq.result()[1] == pytest.approx(x.std(ddof=1) / np.sqrt(len(x)))


def test_moments_skip_nan_and_empty():
    m = _Moments()
    assert all(np.isnan(m.result()))
    m.add(float("nan"))
    m.add(2.0)
    assert m.result() == (2.0, 0.0)


def test_accumulator_merge_equals_single_run():
    cfg = dataclasses.replace(SMALL, n_mc=8)
    whole = simulate_point(cfg, 1, 0)
    a = simulate_point(cfg, 1, 0, range(0, 4))
    b = simulate_point(cfg, 1, 0, range(4, 8))
    a.merge(b)
    for name, mom in whole.moments.items():
        assert a.moments[name].result()[0] == pytest.approx(mom.result()[0], abs=1e-12)
    assert np.abs(a.pattern_law() - whole.pattern_law()).max() < 1e-12
    assert a.correlation()[0] == pytest.approx(whole.correlation()[0], abs=1e-12, nan_ok=True)


def test_accumulator_merge_rejects_other_point():
    a = PointAccumulator(1e-14, 2, ("distinguishable",))
    with pytest.raises(ValueError):
        a.merge(PointAccumulator(1e-14, 3, ("distinguishable",)))


def test_realization_is_deterministic_and_seeded():
    r1 = simulate_realization(SMALL, 1, 0, 3)
    r2 = simulate_realization(SMALL, 1, 0, 3)
    assert np.array_equal(r1.eps, r2.eps) and r1.metrics == r2.metrics
    assert not np.array_equal(r1.eps, simulate_realization(SMALL, 1, 0, 4).eps)
    other = dataclasses.replace(SMALL, master_seed=2)
    assert not np.array_equal(r1.eps, simulate_realization(other, 1, 0, 3).eps)


def test_realization_fidelity_structure():
    rec = simulate_realization(SMALL, 1, 1, 0)
    m = rec.metrics
    assert abs(m["fidelity_conditional"] - 1) < 1e-10
    assert abs(m["fidelity_unconditional"] - (1 - m["mean_eps"])) < 1e-10
    assert m["p_succ"] == pytest.approx(np.prod(1 - rec.eps))
    assert rec.pattern_probs.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope="module")
def small_rows():
    return run_sweep(SMALL)


def test_sweep_shape_and_ranges(small_rows):
    assert len(small_rows) == 2 * 2 * 2
    assert [(r.n_modes, r.cn2, r.regime) for r in small_rows[:2]] == [
        (2, 1e-15, "distinguishable"),
        (2, 1e-15, "indistinguishable"),
    ]
    for r in small_rows:
        assert r.n_mc == 6
        for f in ROW_FIELDS:
            if f.endswith("_se"):
                v = getattr(r, f)
                assert np.isnan(v) or v >= 0
        for f in ("p_all_kept_mean", "p_collision_mean", "mean_eps_mean", "p_succ_mean"):
            assert 0 <= getattr(r, f) <= 1


def same_rows(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        tx, ty = dataclasses.astuple(x), dataclasses.astuple(y)
        if tx[:3] != ty[:3]:
            return False
        if not np.array_equal(np.array(tx[3:], dtype=float), np.array(ty[3:], dtype=float), equal_nan=True):
            return False
    return True


def test_sweep_deterministic(small_rows):
    assert same_rows(run_sweep(SMALL), small_rows)


def test_sweep_independent_of_workers(small_rows):
    assert same_rows(run_sweep(SMALL, workers=2), small_rows)


def test_seed_changes_values_not_structure(small_rows):
    other = run_sweep(dataclasses.replace(SMALL, master_seed=99))
    assert len(other) == len(small_rows)
    assert [(r.cn2, r.n_modes, r.regime) for r in other] == [(r.cn2, r.n_modes, r.regime) for r in small_rows]
    assert any(a.mean_eps_mean != b.mean_eps_mean for a, b in zip(other, small_rows))


def test_n_mc_override_carried_into_rows():
    rows = run_sweep(with_overrides(SMALL, ["n_mc = 3", "n_modes_sweep = 2", "cn2_sweep = 1e-14"]))
    assert [r.n_mc for r in rows] == [3, 3]


def test_vacuum_sweep():
    cfg = dataclasses.replace(SMALL, cn2_sweep=(0.0,), n_modes_sweep=(2, 5), n_mc=2)
    for r in run_sweep(cfg):
        assert abs(r.p_all_kept_mean - 1) < 1e-6
        assert abs(r.p_collision_mean) < 1e-12
        assert abs(r.mean_eps_mean) < 1e-6
        assert abs(r.p_succ_mean - 1) < 1e-6
        assert r.erasure_saturated


def test_write_and_read_results(tmp_path, small_rows):
    path = tmp_path / "out.csv"
    meta_path = write_results(small_rows, path, SMALL, 1.5)
    with open(path) as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == ROW_FIELDS
    back = read_results(path)
    assert len(back) == len(small_rows)
    assert float(back[0]["p_all_kept_mean"]) == small_rows[0].p_all_kept_mean
    meta = json.loads(meta_path.read_text())
    assert meta["rows"] == len(small_rows) and meta["wall_clock_seconds"] == 1.5
    assert meta["config"]["n_mc"] == 6 and "artifact_version" in meta


def test_realization_failure_reports_identifiers(monkeypatch):
    import turbmimo.experiment as ex

    def boom(*a, **k):
        raise ValueError("kaboom")

    monkeypatch.setattr(ex, "propagate_realization", boom)
    with pytest.raises(RuntimeError, match=r"cn2=1e-14, n=2, indices 0\.\.1: kaboom"):
        simulate_point(dataclasses.replace(SMALL, n_mc=2), 1, 0)
