"""Serialization: LP/MPS/OPB files, solution parsing, PGM maps, model JSON.

The LP and MPS writers emit a small, self-consistent dialect (variable names
may contain ``+`` and ``-``, so tokens are strictly whitespace separated) and
the parsers read exactly that dialect back.  OPB output follows the
pseudo-Boolean competition conventions: every constraint is normalized to
``>=`` over variables renamed x1..xn, with a sidecar file mapping those names
back to the model's.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encoder import TrainedModel
from .model_ir import EQ, GE, LE, Domain, LinearExpr, ModelIR, VarId

__all__ = [
    "SolutionFile",
    "write_lp",
    "parse_lp",
    "write_mps",
    "parse_mps",
    "write_opb",
    "opb_varmap_path",
    "parse_solution",
    "render_weights_pgm",
    "save_model",
    "load_model",
]


# -- shared helpers ----------------------------------------------------------


def _is_int_token(tok: str) -> bool:
    body = tok[1:] if tok[:1] in "+-" else tok
    return body.isdigit()


def _parse_int(tok: str, what: str) -> int:
    if not _is_int_token(tok):
        raise ValueError(f"non-integer {what}: {tok!r}")
    return int(tok)


def _check_row_names(model: ModelIR) -> None:
    seen = set()
    for con in model.constraints:
        if con.name in seen:
            raise ValueError(f"duplicate constraint name {con.name!r}; cannot serialize")
        seen.add(con.name)


# -- LP format ---------------------------------------------------------------


def _lp_expr(model: ModelIR, expr: LinearExpr) -> str:
    parts: list[str] = []
    for vid in sorted(expr.terms):
        coef = expr.terms[vid]
        name = model.variables[vid].name
        if coef < 0:
            parts.append(f"- {-coef} {name}")
        elif parts:
            mag = "" if coef == 1 else f"{coef} "
            parts.append(f"+ {mag}{name}")
        else:
            mag = "" if coef == 1 else f"{coef} "
            parts.append(f"{mag}{name}")
    if expr.constant > 0:
        parts.append(f"+ {expr.constant}" if parts else f"{expr.constant}")
    elif expr.constant < 0:
        parts.append(f"- {-expr.constant}")
    if not parts:
        return "0"
    return " ".join(parts)


def write_lp(model: ModelIR, path) -> None:
    """Write the model as LP-format text (Minimize / Subject To / Bounds /
    Binaries / Generals / End).

    Coefficients print exactly as integers; a coefficient of +1 omits the
    magnitude while negative coefficients always spell it ("- 1 x").  Each
    row stays on a single line.  Constraint names must be unique.
    """
    _check_row_names(model)
    lines = [f"\\ {model.name}", "Minimize", f" obj: {_lp_expr(model, model.objective)}"]
    lines.append("Subject To")
    for con in model.constraints:
        lines.append(f" {con.name}: {_lp_expr(model, con.expr)} {con.sense} {con.rhs}")
    generals = [v for v in model.variables if v.domain is Domain.INTEGER]
    binaries = [v for v in model.variables if v.domain is Domain.BINARY]
    if generals:
        lines.append("Bounds")
        for var in generals:
            lines.append(f" {var.lower} <= {var.name} <= {var.upper}")
    if binaries:
        lines.append("Binaries")
        for start in range(0, len(binaries), 8):
            chunk = binaries[start : start + 8]
            lines.append(" " + " ".join(v.name for v in chunk))
    if generals:
        lines.append("Generals")
        for start in range(0, len(generals), 8):
            chunk = generals[start : start + 8]
            lines.append(" " + " ".join(v.name for v in chunk))
    lines.append("End")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


_LP_SECTIONS = {
    "minimize": "objective",
    "subject to": "constraints",
    "bounds": "bounds",
    "binaries": "binaries",
    "generals": "generals",
    "end": "end",
}


def _parse_terms(tokens: list[str]) -> tuple[list[tuple[str, int]], int]:
    """Decode expression tokens into (name, coefficient) pairs plus constant."""
    terms: list[tuple[str, int]] = []
    constant = 0
    sign = 1
    mag: int | None = None
    for tok in tokens:
        if tok == "+" or tok == "-":
            if mag is not None:
                constant += sign * mag
                mag = None
            sign = 1 if tok == "+" else -1
        elif _is_int_token(tok):
            if mag is not None:
                constant += sign * mag
                sign = 1
            mag = int(tok)
        else:
            coef = sign * (1 if mag is None else mag)
            terms.append((tok, coef))
            sign, mag = 1, None
    if mag is not None:
        constant += sign * mag
    return terms, constant


def parse_lp(path) -> ModelIR:
    """Parse a file produced by :func:`write_lp` back into a ModelIR."""
    state = None
    obj_tokens: list[str] = []
    raw_cons: list[tuple[str, list[str], str, int]] = []
    bounds: dict[str, tuple[int, int]] = {}
    binaries: list[str] = []
    generals: list[str] = []
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("\\"):
                continue
            section = _LP_SECTIONS.get(line.lower())
            if section is not None:
                state = section
                continue
            tokens = line.split()
            if state == "objective":
                if tokens and tokens[0].endswith(":"):
                    tokens = tokens[1:]
                obj_tokens.extend(tokens)
            elif state == "constraints":
                name = ""
                if tokens[0].endswith(":"):
                    name = tokens[0][:-1]
                    tokens = tokens[1:]
                sense_at = next(
                    (i for i, t in enumerate(tokens) if t in (LE, GE, EQ)), None
                )
                if sense_at is None or sense_at != len(tokens) - 2:
                    raise ValueError(f"malformed constraint line: {line!r}")
                rhs = _parse_int(tokens[-1], "right-hand side")
                raw_cons.append((name, tokens[:sense_at], tokens[sense_at], rhs))
            elif state == "bounds":
                if len(tokens) != 5 or tokens[1] != LE or tokens[3] != LE:
                    raise ValueError(f"malformed bounds line: {line!r}")
                lo = _parse_int(tokens[0], "lower bound")
                up = _parse_int(tokens[4], "upper bound")
                bounds[tokens[2]] = (lo, up)
            elif state == "binaries":
                binaries.extend(tokens)
            elif state == "generals":
                generals.extend(tokens)
            elif state == "end":
                raise ValueError(f"content after End: {line!r}")
            else:
                raise ValueError(f"content before Minimize: {line!r}")

    model = ModelIR(os.path.splitext(os.path.basename(os.fspath(path)))[0])
    for name in binaries:
        model.add_variable(name, Domain.BINARY)
    for name in generals:
        if name not in bounds:
            raise ValueError(f"integer variable {name!r} has no bounds line")
        lo, up = bounds[name]
        model.add_variable(name, Domain.INTEGER, lo, up)

    def to_expr(tokens: list[str]) -> LinearExpr:
        named, constant = _parse_terms(tokens)
        pairs = []
        for name, coef in named:
            if not model.has_var(name):
                raise ValueError(f"undeclared variable {name!r}")
            pairs.append((model.var_by_name(name).id, coef))
        return LinearExpr.from_terms(pairs, constant)

    model.set_objective(to_expr(obj_tokens))
    for name, expr_tokens, sense, rhs in raw_cons:
        model.add_constraint(to_expr(expr_tokens), sense, rhs, name)
    return model


# -- MPS format --------------------------------------------------------------

_MPS_SENSE = {LE: "L", GE: "G", EQ: "E"}
_MPS_SENSE_BACK = {"L": LE, "G": GE, "E": EQ}
_OBJ_ROW = "obj"


def _mps_body(*fields: str) -> str:
    # nominal fixed-format column starts, padded wider when names overflow
    widths = (2, 9, 9, 13, 9, 13)
    out = ""
    for text, width in zip(fields, widths):
        out += " " + text.ljust(width)
    return out.rstrip()


def write_mps(model: ModelIR, path) -> None:
    """Write the model in MPS layout (ROWS/COLUMNS/RHS/BOUNDS).

    All variables sit inside an INTORG/INTEND marker pair; binaries use the
    BV bound type and integers explicit LO/UP lines.  A nonzero objective
    constant k is stored as an RHS entry of -k on the objective row.
    """
    _check_row_names(model)
    if any(con.name == _OBJ_ROW for con in model.constraints):
        raise ValueError(f"constraint name {_OBJ_ROW!r} collides with the objective row")
    by_var: dict[VarId, list[tuple[str, int]]] = {v.id: [] for v in model.variables}
    for con in model.constraints:
        for vid, coef in con.expr.terms.items():
            by_var[vid].append((con.name, coef))

    lines = [f"NAME {model.name}", "ROWS", _mps_body("N", _OBJ_ROW)]
    for con in model.constraints:
        lines.append(_mps_body(_MPS_SENSE[con.sense], con.name))
    lines.append("COLUMNS")
    lines.append(_mps_body("", "MARK0000", "'MARKER'", "", "'INTORG'"))
    for var in model.variables:
        entries = [(_OBJ_ROW, model.objective.terms.get(var.id, 0))] + by_var[var.id]
        for start in range(0, len(entries), 2):
            chunk = entries[start : start + 2]
            fields = ["", var.name]
            for row, coef in chunk:
                fields += [row, str(coef)]
            lines.append(_mps_body(*fields))
    lines.append(_mps_body("", "MARK0001", "'MARKER'", "", "'INTEND'"))
    lines.append("RHS")
    rhs_entries = [(con.name, con.rhs) for con in model.constraints if con.rhs != 0]
    if model.objective.constant != 0:
        rhs_entries.insert(0, (_OBJ_ROW, -model.objective.constant))
    for start in range(0, len(rhs_entries), 2):
        chunk = rhs_entries[start : start + 2]
        fields = ["", "RHS"]
        for row, val in chunk:
            fields += [row, str(val)]
        lines.append(_mps_body(*fields))
    lines.append("BOUNDS")
    for var in model.variables:
        if var.domain is Domain.BINARY:
            lines.append(_mps_body("BV", "BND", var.name))
        else:
            lines.append(_mps_body("LO", "BND", var.name, str(var.lower)))
            lines.append(_mps_body("UP", "BND", var.name, str(var.upper)))
    lines.append("ENDATA")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_mps(path) -> ModelIR:
    """Parse a file produced by :func:`write_mps` back into a ModelIR."""
    section = None
    model_name = "model"
    rows: list[tuple[str, str]] = []
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, int]]] = {}
    integer_cols: set[str] = set()
    rhs: dict[str, int] = {}
    bv: set[str] = set()
    lo: dict[str, int] = {}
    up: dict[str, int] = {}
    integer_mode = False
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            if not raw.strip() or raw.lstrip().startswith("*"):
                continue
            if not raw[0].isspace():
                tokens = raw.split()
                section = tokens[0].upper()
                if section == "NAME" and len(tokens) > 1:
                    model_name = tokens[1]
                continue
            tokens = raw.split()
            if section == "ROWS":
                rows.append((tokens[0].upper(), tokens[1]))
            elif section == "COLUMNS":
                if "'MARKER'" in tokens:
                    integer_mode = "'INTORG'" in tokens
                    continue
                col = tokens[0]
                if col not in col_entries:
                    col_entries[col] = []
                    col_order.append(col)
                    if integer_mode:
                        integer_cols.add(col)
                for j in range(1, len(tokens), 2):
                    val = _parse_int(tokens[j + 1], "coefficient")
                    col_entries[col].append((tokens[j], val))
            elif section == "RHS":
                for j in range(1, len(tokens), 2):
                    rhs[tokens[j]] = _parse_int(tokens[j + 1], "right-hand side")
            elif section == "BOUNDS":
                btype = tokens[0].upper()
                if btype == "BV":
                    bv.add(tokens[2])
                elif btype == "LO":
                    lo[tokens[2]] = _parse_int(tokens[3], "bound")
                elif btype == "UP":
                    up[tokens[2]] = _parse_int(tokens[3], "bound")
                else:
                    raise ValueError(f"unsupported bound type: {btype!r}")
            elif section == "ENDATA":
                raise ValueError("content after ENDATA")
            else:
                raise ValueError(f"unsupported MPS section: {section!r}")

    obj_rows = [name for sense, name in rows if sense == "N"]
    if len(obj_rows) != 1:
        raise ValueError("expected exactly one objective (N) row")
    obj_row = obj_rows[0]

    model = ModelIR(model_name)
    for col in col_order:
        if col not in integer_cols:
            raise ValueError(f"continuous column {col!r} not supported")
        if col in bv:
            model.add_variable(col, Domain.BINARY)
        elif col in lo and col in up:
            model.add_variable(col, Domain.INTEGER, lo[col], up[col])
        else:
            raise ValueError(f"column {col!r} missing LO/UP bounds")

    per_row: dict[str, list[tuple[VarId, int]]] = {name: [] for _, name in rows}
    for col, entries in col_entries.items():
        vid = model.var_by_name(col).id
        for row, coef in entries:
            if row not in per_row:
                raise ValueError(f"entry references unknown row {row!r}")
            per_row[row].append((vid, coef))

    model.set_objective(
        LinearExpr.from_terms(per_row[obj_row], -rhs.get(obj_row, 0))
    )
    for sense, name in rows:
        if sense == "N":
            continue
        if sense not in _MPS_SENSE_BACK:
            raise ValueError(f"unknown row sense: {sense!r}")
        expr = LinearExpr.from_terms(per_row[name])
        model.add_constraint(expr, _MPS_SENSE_BACK[sense], rhs.get(name, 0), name)
    return model


# -- OPB format --------------------------------------------------------------


def opb_varmap_path(path) -> str:
    return os.fspath(path) + ".varmap"


def _opb_terms(terms: dict[VarId, int]) -> str:
    return " ".join(f"{coef:+d} x{vid + 1}" for vid, coef in sorted(terms.items()))


def write_opb(model: ModelIR, path) -> None:
    """Write an all-binary model in OPB format.

    Variables are renamed x1..xn in id order (the mapping goes to a
    ``.varmap`` sidecar next to the output).  Every constraint becomes a
    ``>=`` line: ``<=`` is negated and ``=`` splits into the ``>=`` half
    followed by the negated half.  Raises if any variable is non-binary or
    the objective carries a constant, which OPB cannot express.
    """
    for var in model.variables:
        if var.domain is not Domain.BINARY:
            raise ValueError(f"non-binary variable {var.name!r}; OPB requires binaries")
    if model.objective.constant != 0:
        raise ValueError("objective constant not representable in OPB")
    body: list[str] = []
    for con in model.constraints:
        if con.sense in (GE, EQ):
            body.append(f"{_opb_terms(con.expr.terms)} >= {con.rhs} ;")
        if con.sense in (LE, EQ):
            negated = {vid: -coef for vid, coef in con.expr.terms.items()}
            body.append(f"{_opb_terms(negated)} >= {-con.rhs} ;")
    lines = [f"* #variable= {model.num_vars} #constraint= {len(body)}"]
    if model.objective.terms:
        lines.append(f"min: {_opb_terms(model.objective.terms)} ;")
    lines.extend(body)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(opb_varmap_path(path), "w", encoding="ascii") as fh:
        for var in model.variables:
            fh.write(f"x{var.id + 1} {var.name}\n")


# -- solution files ----------------------------------------------------------


@dataclass
class SolutionFile:
    """Total assignment read from a solver's output, keyed by variable name."""

    assignments: dict[str, int] = field(default_factory=dict)
    objective: int | None = None

    def id_assignment(self, model: ModelIR) -> dict[VarId, int]:
        return {
            model.var_by_name(name).id: value
            for name, value in self.assignments.items()
        }


def parse_solution(path, model: ModelIR) -> SolutionFile:
    """Read a solution file against a model.

    Accepts plain ``<name> <value>`` lines and pseudo-Boolean solver output:
    ``v`` lines of literals (``x3`` true, ``-x3`` false, indices mapping to
    variable ids in order), ``o <value>`` objective lines, and ignored
    ``s``/``c``/``*``/``#`` status or comment lines.  Variables absent from
    the file default to their lower bound with a warning.
    """
    sol = SolutionFile()
    with open(path, "r", encoding="ascii") as fh:
        for raw in fh:
            tokens = raw.split()
            if not tokens or tokens[0] in ("*", "#") or raw.lstrip()[0] in "*#":
                continue
            if tokens[0] == "v":
                for lit in tokens[1:]:
                    value = 0 if lit.startswith("-") else 1
                    body = lit[1:] if lit.startswith("-") else lit
                    if not (body.startswith("x") and body[1:].isdigit()):
                        raise ValueError(f"malformed literal: {lit!r}")
                    vid = int(body[1:]) - 1
                    if not (0 <= vid < model.num_vars):
                        raise ValueError(f"unknown variable name: {body!r}")
                    sol.assignments[model.variables[vid].name] = value
            elif tokens[0] == "s":
                continue
            elif tokens[0] == "o" and len(tokens) == 2:
                sol.objective = _parse_int(tokens[1], "objective")
            elif len(tokens) == 2:
                name, value = tokens
                if not model.has_var(name):
                    raise ValueError(f"unknown variable name: {name!r}")
                sol.assignments[name] = _parse_int(value, "value")
            else:
                raise ValueError(f"malformed solution line: {raw.strip()!r}")
    missing = [v for v in model.variables if v.name not in sol.assignments]
    if missing:
        warnings.warn(
            f"solution file leaves {len(missing)} variables unset;"
            " defaulting them to their lower bounds",
            stacklevel=2,
        )
        for var in missing:
            sol.assignments[var.name] = var.lower
    return sol


# -- weight map rendering ----------------------------------------------------


def render_weights_pgm(
    model: TrainedModel, class_index: int, width: int, height: int, path
) -> None:
    """Render one class's weight column as a binary PGM (P5) image.

    Pixel codes: 0 (black) where the weight is +1, 255 (white) where it is
    -1, 128 (gray) where it is 0.  Feature f maps to row f // width,
    column f % width.
    """
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    if width * height != model.F_size:
        raise ValueError(
            f"width*height = {width * height} does not match F_size = {model.F_size}"
        )
    if not (0 <= class_index < model.C_size):
        raise ValueError(f"class index {class_index} out of range")
    column = model.W[:, class_index]
    raster = np.full(model.F_size, 128, dtype=np.uint8)
    raster[column == 1] = 0
    raster[column == -1] = 255
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


# -- model persistence -------------------------------------------------------


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "F_size": model.F_size,
        "C_size": model.C_size,
        "W": [[int(w) for w in row] for row in model.W],
        "b": [int(v) for v in model.b],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed model file: {exc}") from exc
    missing = {"F_size", "C_size", "W", "b"} - set(doc)
    if missing:
        raise ValueError(f"model file missing keys: {sorted(missing)}")
    F_size, C_size = doc["F_size"], doc["C_size"]
    if not (isinstance(F_size, int) and isinstance(C_size, int)):
        raise ValueError("F_size and C_size must be integers")
    W = np.asarray(doc["W"])
    if W.shape != (F_size, C_size):
        raise ValueError(f"W shape {W.shape} does not match ({F_size}, {C_size})")
    if W.size and not np.isin(W, (-1, 0, 1)).all():
        raise ValueError("W entry outside {-1, 0, 1}")
    b = doc["b"]
    if len(b) != C_size or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in b
    ):
        raise ValueError("b must be a list of C_size integers")
    return TrainedModel(
        W.astype(np.int8).reshape(F_size, C_size),
        np.asarray(b, dtype=np.int64),
        F_size,
        C_size,
    )
