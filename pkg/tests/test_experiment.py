"""Unit coverage for the experiment layer: result tables, the reference
cache (hashing + locking), prediction dispatch, and the evaluate/export
plumbing that the CLI tests only exercise end to end."""

import os
import time

import numpy as np
import pytest

from mdapnn.cli import resolve_config_path
from mdapnn.config import build_networks, config_hash, parse_config
from mdapnn.errors import ConfigurationError, ContractViolation
from mdapnn.experiment import (ResultTable, _CacheLock, build_samples,
                               export_results, load_trained, predict_rho,
                               predict_T, reference_cache_path,
                               reference_hash, reference_Tr, run_evaluate,
                               run_experiment, run_reference)
from mdapnn.net import init_network
from mdapnn.sampling import gauss_legendre


def constant_net(labels, values):
    """Single affine layer with zero weights: output == bias everywhere."""
    values = np.atleast_1d(np.asarray(values, dtype=np.float64))
    net = init_network((len(labels), values.size), labels, "identity", seed=0)
    net.weights[0].value[:] = 0.0
    net.biases[0].value[:] = values
    return net


def tiny_material_config(tmp_path, **over):
    base = {
        "problem.t_max": "0.05",
        "outputs.slice_times": "0.02 0.04",
        "outputs.eval_points": "32",
        "reference.n_cells": "16",
        "reference.label_grid": "8 8",
        "sampling.n_data": "10",
    }
    base.update(over)
    ovr = [f"{k}={v}" for k, v in base.items()]
    return parse_config(resolve_config_path("ex53-1-kinetic"), overrides=ovr)


# -- result table ----------------------------------------------------------

def test_result_table_rejects_negative_error():
    with pytest.raises(ContractViolation):
        ResultTable([("rho", 0.1, -1e-9)])


def test_result_table_lookup():
    table = ResultTable([("rho", 0.1, 0.5), ("rho", 0.2, 0.25),
                         ("T", 0.1, 0.125)])
    assert table.lookup("rho", 0.2) == 0.25
    assert table.lookup("rho") == [0.5, 0.25]
    with pytest.raises(KeyError):
        table.lookup("T", 0.9)
    with pytest.raises(KeyError):
        table.lookup("nope")


def test_result_table_roundtrips(tmp_path):
    rows = [("rho", 1 / 3, 0.1 + 1e-17), ("T_e_probe_x0.0025", 1.0, 7e-300)]
    table = ResultTable(rows)
    table.to_csv(tmp_path / "r.csv")
    table.to_json(tmp_path / "r.json")
    assert ResultTable.from_csv(tmp_path / "r.csv").rows == table.rows
    assert ResultTable.from_json(tmp_path / "r.json").rows == table.rows


def test_result_table_header_check(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b,c\nrho,0,0\n")
    with pytest.raises(ContractViolation):
        ResultTable.from_csv(tmp_path / "bad.csv")


# -- cache hash and lock ---------------------------------------------------

def test_reference_hash_ignores_model_choices():
    base = parse_config(resolve_config_path("ex52"))
    tweaked = parse_config(resolve_config_path("ex52"), overrides=[
        "problem.variant=pinn", "networks.I=2 8 8 1", "networks.T=1 8 8 1",
        "weights.lambda1=2", "optimizer.lr=1e-4", "sampling.seed=9"])
    assert reference_hash(tweaked) == reference_hash(base)
    assert config_hash(tweaked) != config_hash(base)


def test_reference_hash_tracks_problem_and_grid():
    base = parse_config(resolve_config_path("ex52"))
    h = reference_hash(base)
    assert len(h) == 12 and all(c in "0123456789abcdef" for c in h)
    for ovr in ("problem.eps=1e-3", "reference.n_cells=64"):
        other = parse_config(resolve_config_path("ex52"), overrides=[ovr])
        assert reference_hash(other) != h, ovr


def test_reference_cache_path_layout(tmp_path):
    cfg = parse_config(resolve_config_path("ex52"))
    path = reference_cache_path(cfg, str(tmp_path))
    assert path == str(tmp_path / "cache" / f"ref-{reference_hash(cfg)}.npz")


def test_cache_lock_blocks_then_times_out(tmp_path):
    target = str(tmp_path / "entry.npz")
    with _CacheLock(target):
        assert os.path.exists(target + ".lock")
        t0 = time.monotonic()
        with pytest.raises(TimeoutError, match="remove it"):
            with _CacheLock(target, timeout=0.2):
                pass
        assert time.monotonic() - t0 >= 0.2
    assert not os.path.exists(target + ".lock")
    # released locks can be retaken
    with _CacheLock(target, timeout=0.2):
        pass


def test_run_reference_reuses_cache(tmp_path):
    cfg = parse_config(resolve_config_path("ex52"),
                       overrides=["reference.n_cells=24"])
    out = str(tmp_path)
    first = run_reference(cfg, out)
    cache = reference_cache_path(cfg, out)
    assert os.path.exists(cache)
    assert not os.path.exists(cache + ".lock")
    stamp = os.path.getmtime(cache)
    second = run_reference(cfg, out)
    assert os.path.getmtime(cache) == stamp  # untouched, loaded
    assert np.array_equal(first.rho, second.rho)
    third = run_reference(cfg, out, force=True)
    assert np.array_equal(first.rho, third.rho)  # deterministic resolve


# -- mode plumbing ---------------------------------------------------------

def test_build_samples_data_variant_needs_reference(tmp_path):
    cfg = tiny_material_config(tmp_path)
    assert cfg.variant == "mdapnn"
    with pytest.raises(ContractViolation, match="needs labels"):
        build_samples(cfg, ref=None)


def test_load_trained_requires_state(tmp_path):
    cfg = parse_config(resolve_config_path("ex52"))
    with pytest.raises(FileNotFoundError, match="run the 'train' mode first"):
        load_trained(cfg, str(tmp_path))


def test_export_rejects_unknown_format(tmp_path):
    with pytest.raises(ConfigurationError):
        export_results(str(tmp_path), "xml")


def test_run_experiment_rejects_unknown_mode(tmp_path):
    cfg = parse_config(resolve_config_path("ex52"))
    with pytest.raises(ConfigurationError, match="unknown mode"):
        run_experiment(cfg, "optimize", str(tmp_path))


# -- prediction dispatch ---------------------------------------------------

def test_predict_dispatch_micro_macro_nets():
    rule = gauss_legendre(6)
    spec = parse_config(resolve_config_path("ex53-1-kinetic")).spec
    nets = {"g": constant_net(("t", "x", "mu"), 0.0),
            "rho_T": constant_net(("t", "x"), (0.25, 0.75))}
    pts = np.array([[0.1, 0.05], [0.5, 0.2]])
    assert np.allclose(predict_rho(nets, pts, spec, rule), 0.25)
    assert np.allclose(predict_T(nets, pts), 0.75)


def test_predict_rho_averages_intensity_net():
    rule = gauss_legendre(6)
    spec = parse_config(resolve_config_path("ex511")).spec
    # I = 2 + 3 mu has angular mean 2 under the 1/2-normalized quadrature
    net = init_network((3, 1), ("t", "x", "mu"), "identity", seed=0)
    net.weights[0].value[:] = 0.0
    net.weights[0].value[0, 2] = 3.0
    net.biases[0].value[:] = 2.0
    pts = np.array([[0.0, 0.5], [1.0, 0.25]])
    assert np.allclose(predict_rho({"I": net}, pts, spec, rule), 2.0)


def test_reference_tr_closed_form(tmp_path):
    cfg = tiny_material_config(tmp_path)
    ref = run_reference(cfg, str(tmp_path))
    x = np.linspace(0.0, 0.25, 9)
    got = reference_Tr(ref, cfg.spec, 0.02, x)
    rho = ref.interpolate(0.02, x, "rho")
    assert np.allclose(got, (cfg.spec.s_d * rho / (cfg.spec.a * cfg.spec.c))
                       ** 0.25, rtol=1e-14)


# -- material-problem evaluation -------------------------------------------

def test_material_self_check_rows_and_series(tmp_path):
    cfg = tiny_material_config(tmp_path)
    run_reference(cfg, str(tmp_path))
    table, series = run_evaluate(cfg, str(tmp_path), self_check=True)
    expect = [("T_r", 0.02), ("T_e", 0.02), ("T_r", 0.04), ("T_e", 0.04),
              ("T_e_probe_x0.0025", 0.05)]
    assert [(q, t) for q, t, _ in table] == expect
    assert all(e == 0.0 for _, _, e in table)
    assert set(series) == {("T_r", "t0.02"), ("T_e", "t0.02"),
                           ("T_r", "t0.04"), ("T_e", "t0.04"),
                           ("T_e_probe_x0.0025", "series")}
    probe = series[("T_e_probe_x0.0025", "series")]
    assert probe["pred"][0].shape == (101,)  # time axis, not space
    for name in ("T_r", "T_e", "T_e_probe_x0.0025"):
        assert (tmp_path / "figures" / f"{name}.png").is_file()
    got = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert "T_r_t0.02_pred.csv" in got and "T_e_probe_x0.0025_series_ref.csv" in got
    assert len(got) == 10
