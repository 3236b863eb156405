"""Tests for LP/MPS/OPB emission, solution parsing, PGM and model JSON."""

import json

import numpy as np
import pytest

from binreg.branch_bound import SolveConfig, solve
from binreg.dataset import BinaryDataset
from binreg.emitters import (
    load_model,
    opb_varmap_path,
    parse_lp,
    parse_mps,
    parse_solution,
    render_weights_pgm,
    save_model,
    write_lp,
    write_mps,
    write_opb,
)
from binreg.encoder import Hyperparams, TrainedModel, build_mip, build_pbo, decode_solution
from binreg.evaluator import accuracy
from binreg.model_ir import EQ, GE, LE, Domain, LinearExpr, ModelIR

from _datagen import random_binary_dataset


def toy_dataset():
    X = np.array([[1, 0], [0, 1], [1, 1]], dtype=np.uint8)
    labels = np.array([0, 1, 0], dtype=np.int64)
    return BinaryDataset(X, labels, 2, 2)


def pair_model():
    m = ModelIR("pair")
    x = m.add_variable("x", Domain.BINARY)
    y = m.add_variable("y", Domain.BINARY)
    m.add_constraint(LinearExpr({x: 1, y: 1}), LE, 1, "c0")
    m.set_objective(LinearExpr({x: 1, y: 1}))
    return m


def nasty_model():
    # exercises signs, magnitudes, negative bounds and an objective constant
    m = ModelIR("nasty")
    wp = m.add_variable("w+_0_0", Domain.BINARY)
    wm = m.add_variable("w-_0_0", Domain.BINARY)
    b = m.add_variable("b_0", Domain.INTEGER, -7, 7)
    y = m.add_variable("y_0_0", Domain.INTEGER, -14, 14)
    m.add_constraint(LinearExpr({wp: 1, wm: 1}), LE, 1, "pair_0_0")
    m.add_constraint(LinearExpr({wp: 3, wm: -3, b: 1, y: -1}), EQ, 0, "score_0_0")
    m.add_constraint(LinearExpr({y: 2, b: -5}), GE, -9, "margin_0_1")
    m.set_objective(LinearExpr({wp: 2, wm: -1, y: 5}, constant=-4))
    return m


def random_assignments(model, count, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(count):
        out.append(
            {v.id: int(rng.integers(v.lower, v.upper + 1)) for v in model.variables}
        )
    return out


def assert_equivalent(original, parsed, count, seed):
    assert [v.name for v in parsed.variables] == sorted(
        (v.name for v in original.variables),
        key=lambda n: parsed.var_by_name(n).id,
    )
    for assignment in random_assignments(original, count, seed):
        by_name = {
            original.variables[vid].name: val for vid, val in assignment.items()
        }
        translated = {
            parsed.var_by_name(name).id: val for name, val in by_name.items()
        }
        assert parsed.evaluate(translated) == original.evaluate(assignment)


# -- LP ------------------------------------------------------------------------


def test_lp_single_constraint_line(tmp_path):
    path = tmp_path / "pair.lp"
    write_lp(pair_model(), path)
    assert " c0: x + y <= 1" in path.read_text().splitlines()


def test_lp_negative_unit_coefficient_rendering(tmp_path):
    path = tmp_path / "nasty.lp"
    write_lp(nasty_model(), path)
    text = path.read_text()
    assert "- 1 w-_0_0" in text
    assert "2 w+_0_0" in text


def test_lp_round_trip_toy_mip(tmp_path):
    model, _ = build_mip(toy_dataset(), Hyperparams(1, 2))
    path = tmp_path / "toy.lp"
    write_lp(model, path)
    assert_equivalent(model, parse_lp(path), 100, seed=31)


def test_lp_round_trip_toy_pbo(tmp_path):
    model, _ = build_pbo(toy_dataset(), Hyperparams(2, 5))
    path = tmp_path / "toy_pbo.lp"
    write_lp(model, path)
    assert_equivalent(model, parse_lp(path), 100, seed=32)


def test_lp_round_trip_nasty(tmp_path):
    model = nasty_model()
    path = tmp_path / "nasty.lp"
    write_lp(model, path)
    parsed = parse_lp(path)
    assert_equivalent(model, parsed, 50, seed=33)
    assert parsed.objective.constant == -4
    assert [c.sense for c in parsed.constraints] == [LE, EQ, GE]
    assert [c.name for c in parsed.constraints] == [
        "pair_0_0",
        "score_0_0",
        "margin_0_1",
    ]


def test_lp_rejects_duplicate_row_names(tmp_path):
    m = ModelIR()
    x = m.add_variable("x", Domain.BINARY)
    m.add_constraint(LinearExpr({x: 1}), LE, 1, "dup")
    m.add_constraint(LinearExpr({x: 1}), GE, 0, "dup")
    with pytest.raises(ValueError):
        write_lp(m, tmp_path / "dup.lp")


def test_lp_parse_rejects_undeclared_variable(tmp_path):
    path = tmp_path / "bad.lp"
    path.write_text("Minimize\n obj: z\nSubject To\nEnd\n")
    with pytest.raises(ValueError):
        parse_lp(path)


# -- MPS -----------------------------------------------------------------------


def test_mps_sections_and_markers(tmp_path):
    path = tmp_path / "nasty.mps"
    write_mps(nasty_model(), path)
    text = path.read_text()
    intorg = text.index("'INTORG'")
    intend = text.index("'INTEND'")
    assert intorg < text.index("w+_0_0") < intend
    lines = [ln.split() for ln in text.splitlines()]
    assert ["E", "score_0_0"] in lines
    assert ["BV", "BND", "w-_0_0"] in lines
    assert ["LO", "BND", "b_0", "-7"] in lines


def test_mps_round_trip_toy_mip(tmp_path):
    model, _ = build_mip(toy_dataset(), Hyperparams(1, 2))
    path = tmp_path / "toy.mps"
    write_mps(model, path)
    assert_equivalent(model, parse_mps(path), 100, seed=41)


def test_mps_round_trip_toy_pbo(tmp_path):
    model, _ = build_pbo(toy_dataset(), Hyperparams(5, 10))
    path = tmp_path / "toy_pbo.mps"
    write_mps(model, path)
    assert_equivalent(model, parse_mps(path), 100, seed=42)


def test_mps_round_trip_preserves_objective_constant(tmp_path):
    model = nasty_model()
    path = tmp_path / "nasty.mps"
    write_mps(model, path)
    parsed = parse_mps(path)
    assert parsed.objective.constant == -4
    assert_equivalent(model, parsed, 50, seed=43)


def test_mps_rejects_objective_name_collision(tmp_path):
    m = ModelIR()
    x = m.add_variable("x", Domain.BINARY)
    m.add_constraint(LinearExpr({x: 1}), LE, 1, "obj")
    with pytest.raises(ValueError):
        write_mps(m, tmp_path / "bad.mps")


# -- OPB -----------------------------------------------------------------------


def test_opb_normalizes_le_constraint(tmp_path):
    path = tmp_path / "pair.opb"
    write_opb(pair_model(), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "* #variable= 2 #constraint= 1"
    assert lines[1] == "min: +1 x1 +1 x2 ;"
    assert lines[2] == "-1 x1 -1 x2 >= -1 ;"


def test_opb_splits_equality(tmp_path):
    m = ModelIR()
    x = m.add_variable("x", Domain.BINARY)
    y = m.add_variable("y", Domain.BINARY)
    m.add_constraint(LinearExpr({x: 1, y: -2}), EQ, 1, "eq")
    m.set_objective(LinearExpr({x: 1}))
    path = tmp_path / "eq.opb"
    write_opb(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "* #variable= 2 #constraint= 2"
    assert lines[2] == "+1 x1 -2 x2 >= 1 ;"
    assert lines[3] == "-1 x1 +2 x2 >= -1 ;"


def test_opb_varmap_sidecar(tmp_path):
    path = tmp_path / "pair.opb"
    write_opb(pair_model(), path)
    assert (tmp_path / "pair.opb.varmap").read_text() == "x1 x\nx2 y\n"
    assert opb_varmap_path(path) == str(tmp_path / "pair.opb.varmap")


def test_opb_rejects_integer_variables(tmp_path):
    model, _ = build_mip(toy_dataset(), Hyperparams(1))
    with pytest.raises(ValueError):
        write_opb(model, tmp_path / "bad.opb")


def test_opb_objective_matches_model_under_name_map(tmp_path):
    model, _ = build_pbo(toy_dataset(), Hyperparams(2, 5))
    path = tmp_path / "toy.opb"
    write_opb(model, path)
    min_line = path.read_text().splitlines()[1]
    assert min_line.startswith("min: ") and min_line.endswith(" ;")
    tokens = min_line[len("min: ") : -len(" ;")].split()
    terms = {}
    for coef, var in zip(tokens[::2], tokens[1::2]):
        terms[int(var[1:]) - 1] = int(coef)
    for assignment in random_assignments(model, 20, seed=44):
        file_obj = sum(coef * assignment[vid] for vid, coef in terms.items())
        assert file_obj == model.objective.value(assignment)


def test_opb_matches_golden_file(tmp_path):
    model, _ = build_pbo(toy_dataset(), Hyperparams(1, 2))
    path = tmp_path / "toy.opb"
    write_opb(model, path)
    golden = open("tests/data/toy.opb", "rb").read()
    assert path.read_bytes() == golden


# -- solution files --------------------------------------------------------------


def test_parse_solution_name_value_lines(tmp_path):
    model = pair_model()
    path = tmp_path / "sol.txt"
    path.write_text("x 1\ny 0\n")
    sol = parse_solution(path, model)
    assert sol.assignments == {"x": 1, "y": 0}
    assert sol.id_assignment(model) == {0: 1, 1: 0}


def test_parse_solution_v_line(tmp_path):
    model = pair_model()
    path = tmp_path / "sol.opb.txt"
    path.write_text("s OPTIMUM FOUND\no 1\nv x1 -x2\n")
    sol = parse_solution(path, model)
    assert sol.assignments == {"x": 1, "y": 0}
    assert sol.objective == 1


def test_parse_solution_missing_vars_default_with_warning(tmp_path):
    model = nasty_model()
    path = tmp_path / "partial.txt"
    path.write_text("w+_0_0 1\n")
    with pytest.warns(UserWarning):
        sol = parse_solution(path, model)
    assert sol.assignments["b_0"] == -7
    assert sol.assignments["y_0_0"] == -14
    assert sol.assignments["w-_0_0"] == 0


def test_parse_solution_errors(tmp_path):
    model = pair_model()
    bad_name = tmp_path / "a.txt"
    bad_name.write_text("zz 1\nx 0\ny 0\n")
    with pytest.raises(ValueError):
        parse_solution(bad_name, model)
    bad_value = tmp_path / "b.txt"
    bad_value.write_text("x 1.5\ny 0\n")
    with pytest.raises(ValueError):
        parse_solution(bad_value, model)
    bad_literal = tmp_path / "c.txt"
    bad_literal.write_text("v x1 -x9\n")
    with pytest.raises(ValueError):
        parse_solution(bad_literal, model)


def test_parsed_solution_reproduces_trained_model(tmp_path):
    ds = toy_dataset()
    model, layout = build_mip(ds, Hyperparams(1, 2))
    res = solve(model, SolveConfig(time_limit_secs=60))
    assert res.status == "Optimal"
    path = tmp_path / "sol.txt"
    with open(path, "w") as fh:
        for var in model.variables:
            fh.write(f"{var.name} {res.incumbent[var.id]}\n")
    sol = parse_solution(path, model)
    direct = decode_solution(layout, res.incumbent)
    reparsed = decode_solution(layout, sol.id_assignment(model))
    assert np.array_equal(direct.W, reparsed.W)
    assert np.array_equal(direct.b, reparsed.b)


# -- PGM rendering ----------------------------------------------------------------


def model_with_single_weight(f, c, width, height, C=3, sign=1):
    W = np.zeros((width * height, C), dtype=np.int8)
    W[f, c] = sign
    return TrainedModel(W, np.zeros(C, dtype=np.int64), width * height, C)


def read_pgm(path):
    data = open(path, "rb").read()
    header, raster = data.split(b"\n255\n", 1)
    magic, dims = header.split(b"\n", 1)
    width, height = map(int, dims.split())
    return magic, width, height, raster


def test_pgm_all_zero_column_is_uniform_gray(tmp_path):
    m = TrainedModel(
        np.zeros((6, 2), dtype=np.int8), np.zeros(2, dtype=np.int64), 6, 2
    )
    path = tmp_path / "c0.pgm"
    render_weights_pgm(m, 0, 3, 2, path)
    magic, width, height, raster = read_pgm(path)
    assert (magic, width, height) == (b"P5", 3, 2)
    assert raster == b"\x80" * 6


def test_pgm_pixel_feature_mapping(tmp_path):
    width, height = 4, 2
    m = model_with_single_weight(0, 1, width, height)
    path = tmp_path / "first.pgm"
    render_weights_pgm(m, 1, width, height, path)
    raster = read_pgm(path)[3]
    assert raster[0] == 0 and set(raster[1:]) == {128}

    f = 1 * width + 2  # row 1, column 2
    m = model_with_single_weight(f, 0, width, height, sign=-1)
    path2 = tmp_path / "neg.pgm"
    render_weights_pgm(m, 0, width, height, path2)
    raster = read_pgm(path2)[3]
    assert raster[f] == 255
    assert set(raster) == {128, 255}


def test_pgm_byte_values_restricted(tmp_path):
    rng = np.random.Generator(np.random.PCG64(7))
    W = rng.integers(-1, 2, size=(12, 4)).astype(np.int8)
    m = TrainedModel(W, np.zeros(4, dtype=np.int64), 12, 4)
    for c in range(4):
        path = tmp_path / f"c{c}.pgm"
        render_weights_pgm(m, c, 4, 3, path)
        assert set(read_pgm(path)[3]) <= {0, 128, 255}


def test_pgm_dimension_mismatch(tmp_path):
    m = model_with_single_weight(0, 0, 3, 2)
    with pytest.raises(ValueError):
        render_weights_pgm(m, 0, 4, 2, tmp_path / "bad.pgm")
    with pytest.raises(ValueError):
        render_weights_pgm(m, 5, 3, 2, tmp_path / "bad2.pgm")


# -- model persistence -------------------------------------------------------------


def test_save_load_identity(tmp_path):
    rng = np.random.Generator(np.random.PCG64(11))
    W = rng.integers(-1, 2, size=(5, 3)).astype(np.int8)
    b = rng.integers(-9, 10, size=3).astype(np.int64)
    m = TrainedModel(W, b, 5, 3)
    path = tmp_path / "model.json"
    save_model(m, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.W, W)
    assert np.array_equal(loaded.b, b)
    assert (loaded.F_size, loaded.C_size) == (5, 3)


def test_load_rejects_out_of_domain_weight(tmp_path):
    path = tmp_path / "bad.json"
    doc = {"F_size": 1, "C_size": 2, "W": [[2, 0]], "b": [0, 0]}
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValueError):
        load_model(path)


def test_load_rejects_shape_mismatch(tmp_path):
    path = tmp_path / "shape.json"
    doc = {"F_size": 2, "C_size": 2, "W": [[1, 0]], "b": [0, 0]}
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)


def test_loaded_model_reproduces_eval_report(tmp_path):
    rng = np.random.Generator(np.random.PCG64(12))
    ds = random_binary_dataset(13, 10, 4, 3)
    W = rng.integers(-1, 2, size=(4, 3)).astype(np.int8)
    b = rng.integers(-3, 4, size=3).astype(np.int64)
    m = TrainedModel(W, b, 4, 3)
    path = tmp_path / "model.json"
    save_model(m, path)
    assert accuracy(load_model(path), ds) == accuracy(m, ds)
