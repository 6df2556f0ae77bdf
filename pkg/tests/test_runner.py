import json

import pytest

from carnotmax.errors import InputError
from carnotmax.verify import runner

MINI = """\
[run]
groups = euclidean1
seed = 3
workers = 1
regression = {store}

[euclidean1]
suites = constant_symbol, ef_balance, weak_type
h = 1/64
half_extent = 2
margin = 1
radii = 1/16, 1/8
function_radius = 1/2
betas = 0.5
symbols = power
"""


def write_config(tmp_path, text=MINI, store="store.json"):
    path = tmp_path / "run.ini"
    path.write_text(text.format(store=tmp_path / store))
    return path


def test_parse_numbers():
    assert runner.parse_number("1/256") == 1 / 256
    assert runner.parse_number(" 0.5 ") == 0.5
    assert runner.parse_number("inf") == float("inf")
    assert runner.parse_numbers("1, 1/2,") == (1.0, 0.5)
    for bad in ("abc", "1/0", "nan"):
        with pytest.raises(InputError):
            runner.parse_number(bad)


def test_parse_exponents():
    (a, b) = runner.parse_exponents("lebesgue 0.5 1.5; spanne 0.3 2 1", 4)
    assert a.relation == "lebesgue" and b.lam == 1.0
    with pytest.raises(InputError):
        runner.parse_exponents("spanne 0.5 1.5", 1)
    with pytest.raises(InputError):
        runner.parse_exponents("spanne 0.5 1.5 0.6", 1)


def test_default_config_plans(tmp_path):
    config = runner.load_config(runner.Path(__file__).parents[1] / "src/carnotmax/data/default.ini")
    jobs = runner.plan(config)
    assert {j.group for j in jobs} == {"euclidean1", "euclidean2", "heisenberg1"}
    keys = [j.key for j in jobs if j.key]
    assert len(keys) == len(set(keys))
    store = runner.load_store(runner.store_path(config))
    assert set(keys) == set(store)


def test_config_validation(tmp_path):
    path = write_config(tmp_path)
    config = runner.load_config(path)
    assert config.seed == 3 and config.groups == ("euclidean1",)
    bad = tmp_path / "bad.ini"
    bad.write_text(MINI.format(store="x") + "colour = blue\n")
    with pytest.raises(InputError):
        runner.load_config(bad)
    bad.write_text("[euclidean1]\nh = 1\n")
    with pytest.raises(InputError):
        runner.load_config(bad)
    bad.write_text(MINI.format(store="x") + "\n[euclidean1.weak_type]\nexponents = spanne 0.5 1.5 0.6\n"
                   "[euclidean1.morrey]\nexponents = spanne 0.5 1.5 0.6\n")
    config = runner.load_config(bad)
    with pytest.raises(InputError, match="lambda|λ"):
        runner._plan_suite(config, runner.get_group("euclidean1"), "morrey", 0)
    with pytest.raises(InputError):
        runner.plan(runner.load_config(path), ["heisenberg1"])


def test_execute_is_deterministic_and_worker_independent(tmp_path):
    config = runner.load_config(write_config(tmp_path))
    jobs = runner.plan(config)
    constants = runner.calibrate_groups([j.group for j in jobs], tmp_path / "cal.txt")
    jobs = runner.attach(jobs, constants, {})
    one = runner.execute(jobs, 1)
    two = runner.execute(jobs, 2)
    assert [r for _, reps in one for r in reps] == [r for _, reps in two for r in reps]
    store = runner.freeze(one, {})
    assert len(store) == 1 and all(k.startswith("euclidean1/weak_type/") for k in store)
    runner.save_store(tmp_path / "store.json", store, "mini")
    assert json.loads((tmp_path / "store.json").read_text())["id"] == "mini"


def test_refine_reports_relative_change(tmp_path):
    config = runner.load_config(write_config(tmp_path))
    jobs = runner.plan(config)
    constants = runner.calibrate_groups([j.group for j in jobs], tmp_path / "cal.txt")
    jobs = runner.attach(jobs, constants, {})
    (rep,) = runner.refine(jobs)
    assert rep.suite == "refine:weak_type" and rep.detail("h") == str(1 / 64)
    base, refined = float(rep.detail("base")), float(rep.detail("refined"))
    assert rep.value == pytest.approx(abs(refined / base - 1))


def test_suite_error_names_the_job(tmp_path):
    config = runner.load_config(write_config(tmp_path))
    job = runner.plan(config)[0]
    broken = runner.replace(job, settings=tuple((k, -1.0 if k == "h" else v) for k, v in job.settings))
    with pytest.raises(runner.SuiteError, match="euclidean1/constant_symbol"):
        runner.execute([broken])
