import io
import math

import numpy as np
import pytest

from locobf import (
    Location,
    LocationDomain,
    ObfuscationMatrix,
    build_matrix_constant,
    load_domain,
    load_matrix_rows,
    load_metrics,
    load_partition,
    save_domain,
)
from locobf.cli import (
    ALGORITHMS,
    SWEEP_METRICS,
    SweepConfig,
    aggregate_cells,
    main,
    parse_sweep_config,
    run_sweep,
    worker_travel_distance,
)
from locobf.cli import _parse_synth_spec


@pytest.fixture
def line6_file(tmp_path, line6):
    path = tmp_path / "line6.csv"
    save_domain(line6, path)
    return str(path)


def test_synth_writes_a_loadable_dataset(tmp_path):
    out = tmp_path / "dom.csv"
    assert main(["synth", "--n", "20", "--seed", "4", "--out", str(out)]) == 0
    dom = load_domain(str(out))
    assert dom.n == 20
    assert dom.personal_eps is None


def test_synth_eps_range(tmp_path):
    out = tmp_path / "dom.csv"
    code = main([
        "synth", "--n", "15", "--seed", "4", "--eps-range", "0.5,1.5",
        "--out", str(out),
    ])
    assert code == 0
    dom = load_domain(str(out))
    assert dom.personal_eps is not None
    assert (dom.personal_eps >= 0.5).all() and (dom.personal_eps <= 1.5).all()


def test_synth_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["synth", "--n", "20", "--seed", "4", "--eps-range", "0.5,1.5"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_rejects_overfull_grid(tmp_path, capsys):
    code = main(["synth", "--n", "300", "--out", str(tmp_path / "x.csv")])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_partition_command(tmp_path, line6, line6_file, capsys):
    out = tmp_path / "part.csv"
    code = main([
        "partition", "--dataset", line6_file, "--eps", "0.1", "--em", "0.4",
        "--out", str(out),
    ])
    assert code == 0
    assert "k=3" in capsys.readouterr().out
    part = load_partition(line6, str(out))
    assert sorted(p.members for p in part.plss) == [(0, 1), (2, 3), (4, 5)]


def test_partition_command_qk_deterministic(tmp_path, line6_file):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = [
        "partition", "--dataset", line6_file, "--algorithm", "qk",
        "--eps", "0.1", "--em", "0.4", "--seed", "7",
    ]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_partition_infeasible_params(line6_file, capsys):
    code = main([
        "partition", "--dataset", line6_file, "--eps", "1.0", "--em", "10.0",
    ])
    assert code == 2
    assert "infeasible" in capsys.readouterr().err


def test_partition_rejects_baseline(line6_file, capsys):
    code = main([
        "partition", "--dataset", line6_file, "--algorithm", "em-baseline",
        "--eps", "1.0", "--em", "0.1",
    ])
    assert code == 1
    assert "usage error" in capsys.readouterr().err


def test_evaluate_command(tmp_path, line6_file):
    part = tmp_path / "part.csv"
    main(["partition", "--dataset", line6_file, "--eps", "0.1", "--em", "0.4",
          "--out", str(part)])
    metrics_out = tmp_path / "metrics.csv"
    matrix_out = tmp_path / "matrix.csv"
    code = main([
        "evaluate", "--dataset", line6_file, "--partition", str(part),
        "--matrix-out", str(matrix_out), "--out", str(metrics_out),
    ])
    assert code == 0
    loaded = load_metrics(str(metrics_out))
    assert set(loaded) == {"exp_err", "qloss", "cond_err", "avg_err", "success"}
    assert min(loaded["cond_err"].values()) >= 0.4
    rows = load_matrix_rows(str(matrix_out))
    assert rows.shape == (6, 6)
    assert rows.sum(axis=1) == pytest.approx(np.ones(6), abs=1e-9)


def test_evaluate_metric_subset(tmp_path, line6_file):
    part = tmp_path / "part.csv"
    main(["partition", "--dataset", line6_file, "--eps", "0.1", "--em", "0.4",
          "--out", str(part)])
    out = tmp_path / "metrics.csv"
    code = main([
        "evaluate", "--dataset", line6_file, "--partition", str(part),
        "--metrics", "qloss,exp_err", "--out", str(out),
    ])
    assert code == 0
    assert set(load_metrics(str(out))) == {"qloss", "exp_err"}


def test_evaluate_unknown_metric(tmp_path, line6_file, capsys):
    part = tmp_path / "part.csv"
    main(["partition", "--dataset", line6_file, "--eps", "0.1", "--em", "0.4",
          "--out", str(part)])
    code = main([
        "evaluate", "--dataset", line6_file, "--partition", str(part),
        "--metrics", "qloss,entropy",
    ])
    assert code == 1
    err = capsys.readouterr().err
    assert "entropy" in err and "cond_err" in err


def test_evaluate_partition_dataset_mismatch(tmp_path, line6_file, capsys):
    part = tmp_path / "part.csv"
    main(["partition", "--dataset", line6_file, "--eps", "0.1", "--em", "0.4",
          "--out", str(part)])
    other = tmp_path / "other.csv"
    main(["synth", "--n", "6", "--seed", "9", "--out", str(other)])
    code = main([
        "evaluate", "--dataset", str(other), "--partition", str(part),
    ])
    assert code == 3
    assert "does not match" in capsys.readouterr().err


def test_parse_sweep_config():
    text = """
    # comment line
    dataset = synth:n=16
    eps_values = 0.5, 1.0
    em_values = 0.05
    algorithms = hilbert, qk
    seeds = 1,2,3
    output_dir = out
    """
    config = parse_sweep_config(io.StringIO(text))
    assert config.eps_values == (0.5, 1.0)
    assert config.em_values == (0.05,)
    assert config.algorithms == ("hilbert", "qk")
    assert config.seeds == (1, 2, 3)


_SWEEP_BASE = (
    "dataset = synth:n=16\neps_values = 0.5\nem_values = 0.05\n"
    "algorithms = hilbert\nseeds = 1\noutput_dir = out\n"
)


@pytest.mark.parametrize(
    "text, fragment",
    [
        (_SWEEP_BASE + "dataset = twice\n", "duplicate"),
        (_SWEEP_BASE.replace("seeds = 1\n", ""), "missing config keys"),
        (_SWEEP_BASE + "surprise = 1\n", "unknown config keys"),
        (
            _SWEEP_BASE.replace("= hilbert", "= hilbert, voronoi"),
            "unknown algorithm",
        ),
        (_SWEEP_BASE.replace("eps_values = 0.5", "eps_values = a,b"),
         "could not convert"),
        (_SWEEP_BASE + "no equals sign\n", "expected key = value"),
    ],
)
def test_parse_sweep_config_errors(text, fragment):
    with pytest.raises(ValueError, match=fragment):
        parse_sweep_config(io.StringIO(text))


def test_parse_synth_spec():
    kwargs = _parse_synth_spec("synth:n=12,grid_side=8,cell_km=2.0")
    assert kwargs == {"n": 12, "grid_side": 8, "cell_km": 2.0}
    with pytest.raises(ValueError, match="unknown synth"):
        _parse_synth_spec("synth:n=12,shape=disc")
    with pytest.raises(ValueError, match="n="):
        _parse_synth_spec("synth:grid_side=8")


def test_run_sweep_layout(tmp_path):
    config = SweepConfig(
        dataset="synth:n=16",
        eps_values=(1.0,),
        em_values=(0.05,),
        algorithms=("hilbert", "qk"),
        seeds=(1, 2),
        output_dir=str(tmp_path / "sweep"),
    )
    out_dir = run_sweep(config)
    results = (out_dir / "results.csv").read_text().splitlines()
    assert results[0] == "algorithm,eps,em,seed,metric,value"
    assert len(results) == 1 + 2 * 2 * len(SWEEP_METRICS)
    assert not any(",NA" in line for line in results[1:])
    for metric in SWEEP_METRICS:
        for algorithm in ("hilbert", "qk"):
            table = (out_dir / f"{metric}__{algorithm}.csv").read_text().splitlines()
            assert table[0] == "eps,em,seed,value"
            assert [r.split(",")[:3] for r in table[1:]] == [
                ["1", "0.05", "1"], ["1", "0.05", "2"],
            ]


def test_run_sweep_marks_infeasible_cells(tmp_path):
    config = SweepConfig(
        dataset="synth:n=16",
        eps_values=(1.0,),
        em_values=(0.05, 50.0),
        algorithms=("hilbert",),
        seeds=(1,),
        output_dir=str(tmp_path / "sweep"),
    )
    out_dir = run_sweep(config)
    rows = (out_dir / "results.csv").read_text().splitlines()[1:]
    na_rows = [r for r in rows if r.endswith(",NA")]
    assert len(na_rows) == len(SWEEP_METRICS)
    assert all(",50," in r for r in na_rows)


def test_aggregate_cells_is_pure():
    cells = [
        ("hilbert", 1.0, 0.05, 1, {m: 1.5 for m in SWEEP_METRICS}),
        ("qk", 1.0, 0.05, 1, None),
    ]
    first = aggregate_cells(cells)
    second = aggregate_cells(cells)
    assert first == second
    long_rows, tables = first
    assert ("qk", "1", "0.05", "1", "qloss", "NA") in long_rows
    assert tables[("qloss", "hilbert")] == [("1", "0.05", "1", "1.5")]


def test_sweep_command(tmp_path):
    config_file = tmp_path / "sweep.cfg"
    config_file.write_text(
        "dataset = synth:n=16\neps_values = 1.0\nem_values = 0.05\n"
        "algorithms = em-baseline\nseeds = 3\n"
        f"output_dir = {tmp_path / 'out'}\n"
    )
    assert main(["sweep", "--config", str(config_file)]) == 0
    rows = (tmp_path / "out" / "results.csv").read_text().splitlines()
    by_metric = {r.split(",")[4]: r.split(",")[5] for r in rows[1:]}
    assert by_metric["num_pls"] == "1"
    assert float(by_metric["qloss"]) > 0


@pytest.fixture
def line12():
    return LocationDomain(
        [Location(i, (float(i), 0.0), 1 / 12) for i in range(12)]
    )


def test_wtd_identity_matches_plain_assignment(line12):
    tasks = np.array([[2.0, 0.0], [9.0, 0.0]])
    ident = ObfuscationMatrix(np.eye(12))
    got = worker_travel_distance(line12, ident, tasks, 5, np.random.default_rng(5))
    idle = np.sort(np.random.default_rng(5).choice(12, size=5, replace=False))
    expect = []
    for task in tasks:
        dists = np.linalg.norm(line12.positions[idle] - task, axis=1)
        chosen = np.lexsort((idle, dists))[:3]
        expect.append(dists[chosen].mean())
    assert got == pytest.approx(float(np.mean(expect)))


def test_wtd_three_workers_use_everyone():
    dom = LocationDomain([
        Location(0, (0.0, 0.0), 1 / 3),
        Location(1, (4.0, 0.0), 1 / 3),
        Location(2, (10.0, 0.0), 1 / 3),
    ])
    ident = ObfuscationMatrix(np.eye(3))
    task = np.array([[4.0, 0.0]])
    got = worker_travel_distance(dom, ident, task, 3, np.random.default_rng(0))
    assert got == pytest.approx((4.0 + 0.0 + 6.0) / 3)


def test_wtd_input_validation(line12):
    ident = ObfuscationMatrix(np.eye(12))
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="at least 3"):
        worker_travel_distance(line12, ident, [[0.0, 0.0]], 2, rng)
    with pytest.raises(ValueError, match="exceeds"):
        worker_travel_distance(line12, ident, [[0.0, 0.0]], 13, rng)
    with pytest.raises(ValueError, match="planar"):
        worker_travel_distance(line12, ident, [[0.0, 0.0, 0.0]], 3, rng)


def test_wtd_grows_with_flatter_rows(line12):
    """Noisier reports send farther workers; 100-trial means, wide gap."""
    tasks = np.column_stack([np.linspace(0, 11, 8), np.zeros(8)])
    sharp = build_matrix_constant(line12, 0.5, 1.0)
    flat = build_matrix_constant(line12, 6.0, 1.0)
    mean_sharp = np.mean([
        worker_travel_distance(line12, sharp, tasks, 6, np.random.default_rng([9, t]))
        for t in range(100)
    ])
    mean_flat = np.mean([
        worker_travel_distance(line12, flat, tasks, 6, np.random.default_rng([9, t]))
        for t in range(100)
    ])
    assert mean_flat > mean_sharp


def test_wtd_command(tmp_path, capsys):
    dataset = tmp_path / "dom.csv"
    main(["synth", "--n", "30", "--seed", "2", "--out", str(dataset)])
    out = tmp_path / "wtd.csv"
    argv = [
        "wtd", "--dataset", str(dataset), "--eps", "1.0", "--em", "0.1",
        "--tasks", "20", "--idle", "10", "--seed", "3", "--out", str(out),
    ]
    assert main(argv) == 0
    assert "wtd_km=" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == "metric,value"
    values = dict(line.split(",") for line in lines[1:])
    assert set(values) == {"wtd_km", "nonprivate_km"}
    assert float(values["wtd_km"]) > 0
    first = out.read_bytes()
    assert main(argv) == 0
    assert out.read_bytes() == first


def test_main_usage_and_io_errors(tmp_path, capsys):
    assert main(["no-such-command"]) == 1
    assert main([
        "partition", "--dataset", str(tmp_path / "missing.csv"),
        "--eps", "1.0", "--em", "0.1",
    ]) == 3
    capsys.readouterr()


def test_algorithm_names_are_stable():
    assert ALGORITHMS == ("hilbert", "qk", "qk-personalized", "em-baseline")
    assert SWEEP_METRICS == ("qloss", "exp_err", "min_cond_err", "avg_diam", "num_pls")
