"""Study-file ingestion and serialization.

JSON is the full-fidelity format: catalog, per-study coefficients with any
of the covariance shapes, feature flags, and moderator definitions.  CSV
covers only the single-focal-coefficient workflow (one slope with its
standard error or variance per study) that the univariate pool needs.

Parse errors carry the path of the offending field
(``studies[3].cov: ...``) so files can be fixed without guesswork.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .design import ModeratorSpec
from .exceptions import InputError
from .studies import (
    INTERCEPT,
    FullCovariance,
    PredictorCatalog,
    Provenance,
    SlopeCovariance,
    StandardErrors,
    StandardErrorsWithCommonCorr,
    StudyRegression,
    XtXInverseWithMse,
)

#: the coefficient label used for CSV (single focal slope) inputs
CSV_SLOPE_LABEL = "slope"

_CSV_COLUMNS = {"study_id", "slope", "se", "variance", "n"}


@dataclass
class StudyFile:
    """Parsed contents of a study file."""

    catalog: PredictorCatalog
    studies: list[StudyRegression]
    moderators: list[ModeratorSpec] = field(default_factory=list)


# ---------------------------------------------------------------------------
# helpers: typed field access with path-precise diagnostics
# ---------------------------------------------------------------------------


def _fail(path: str, message: str):
    raise InputError(f"{path}: {message}")


def _get(obj: dict, key: str, path: str, required: bool = False):
    if key not in obj:
        if required:
            _fail(path, f"missing required field {key!r}")
        return None
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


def _matrix(value, path: str, dim: int) -> np.ndarray:
    """Accept a full square matrix or upper-triangle rows (mirrored)."""
    if not isinstance(value, list) or not all(isinstance(row, list) for row in value):
        _fail(path, "expected a list of rows")
    lengths = [len(row) for row in value]
    if lengths == [dim] * dim:
        rows = [[_number(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)]
                for i, row in enumerate(value)]
        return np.array(rows)
    if lengths == list(range(dim, 0, -1)):
        out = np.zeros((dim, dim))
        for i, row in enumerate(value):
            for j, v in enumerate(row):
                out[i, i + j] = _number(v, f"{path}[{i}][{j}]")
                out[i + j, i] = out[i, i + j]
        return out
    _fail(
        path,
        f"expected a {dim}x{dim} matrix or its upper triangle "
        f"(row lengths {dim}..1), got row lengths {lengths}",
    )


def compile_when(expr: str, catalog: PredictorCatalog, path: str = "when"):
    """Compile a moderator predicate from its textual form.

    Atoms: ``flag`` (a study feature), ``has:label`` (the study reports
    that coefficient); either may be negated with a leading ``!``;
    conjunction with ``&``.
    """
    if not isinstance(expr, str) or not expr.strip():
        _fail(path, "expected a non-empty predicate string")

    atoms = []
    for raw in expr.split("&"):
        token = raw.strip()
        negate = token.startswith("!")
        if negate:
            token = token[1:].strip()
        if not token:
            _fail(path, f"empty atom in predicate {expr!r}")
        if token.startswith("has:"):
            label = token[4:].strip()
            if label not in catalog:
                _fail(path, f"predicate references unknown coefficient {label!r}")
            atoms.append((negate, "has", label))
        else:
            atoms.append((negate, "flag", token))

    def predicate(study: StudyRegression) -> bool:
        for negate, kind, name in atoms:
            if kind == "has":
                value = name in study.coefficients
            else:
                value = bool(study.features.get(name, False))
            if negate:
                value = not value
            if not value:
                return False
        return True

    return predicate


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _parse_catalog(obj, path: str = "catalog") -> PredictorCatalog:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    predictors = _get(obj, "predictors", path, required=True)
    if not isinstance(predictors, list) or not all(isinstance(p, str) for p in predictors):
        _fail(f"{path}.predictors", "expected a list of strings")
    has_intercept = obj.get("intercept", True)
    if not isinstance(has_intercept, bool):
        _fail(f"{path}.intercept", "expected true or false")
    names = ([INTERCEPT] if has_intercept else []) + list(predictors)
    try:
        return PredictorCatalog(names, has_intercept=has_intercept)
    except InputError as exc:
        _fail(path, str(exc))


def _parse_study(obj, catalog: PredictorCatalog, path: str) -> StudyRegression:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    sid = _get(obj, "id", path, required=True)
    if not isinstance(sid, str) or not sid:
        _fail(f"{path}.id", "expected a non-empty string")
    n = _get(obj, "n", path, required=True)
    if isinstance(n, bool) or not isinstance(n, int):
        _fail(f"{path}.n", f"expected an integer case count, got {n!r}")

    coeffs_obj = _get(obj, "coefficients", path, required=True)
    if not isinstance(coeffs_obj, dict) or not coeffs_obj:
        _fail(f"{path}.coefficients", "expected a non-empty label -> value object")
    coefficients = {}
    for lab, val in coeffs_obj.items():
        if lab not in catalog:
            _fail(f"{path}.coefficients.{lab}", "label not in catalog")
        coefficients[lab] = _number(val, f"{path}.coefficients.{lab}")
    dim = len(coefficients)

    mse = obj.get("mse")
    if mse is not None:
        mse = _number(mse, f"{path}.mse")
    dfe = obj.get("dfe")
    if dfe is not None and (isinstance(dfe, bool) or not isinstance(dfe, int)):
        _fail(f"{path}.dfe", f"expected an integer, got {dfe!r}")

    cov_keys = [key for key in ("cov", "se", "xtx_inverse") if key in obj]
    if len(cov_keys) > 1:
        _fail(path, f"give at most one of 'cov', 'se', 'xtx_inverse', got {cov_keys}")
    if "rho" in obj and "se" not in obj:
        _fail(f"{path}.rho", "'rho' is only meaningful alongside 'se'")
    cov_spec = None
    try:
        if "cov" in obj:
            cov_spec = FullCovariance(_matrix(obj["cov"], f"{path}.cov", dim))
        elif "se" in obj:
            se = obj["se"]
            if not isinstance(se, list):
                _fail(f"{path}.se", "expected a list of standard errors")
            se_vals = [_number(v, f"{path}.se[{i}]") for i, v in enumerate(se)]
            if len(se_vals) != dim:
                _fail(f"{path}.se", f"expected {dim} entries, got {len(se_vals)}")
            if "rho" in obj:
                rho = _number(obj["rho"], f"{path}.rho")
                cov_spec = StandardErrorsWithCommonCorr(se_vals, rho)
            else:
                cov_spec = StandardErrors(se_vals)
        elif "xtx_inverse" in obj:
            if mse is None:
                _fail(f"{path}.xtx_inverse", "requires 'mse' on the study")
            cov_spec = XtXInverseWithMse(_matrix(obj["xtx_inverse"], f"{path}.xtx_inverse", dim), mse)
    except InputError as exc:
        if str(exc).startswith(path):
            raise
        _fail(path, str(exc))

    features_obj = obj.get("features", {})
    if not isinstance(features_obj, dict):
        _fail(f"{path}.features", "expected an object of boolean flags")
    features = {}
    for key, val in features_obj.items():
        if not isinstance(val, bool):
            _fail(f"{path}.features.{key}", f"expected true or false, got {val!r}")
        features[key] = val

    known = {"id", "n", "dfe", "mse", "coefficients", "cov", "se", "rho", "xtx_inverse", "features"}
    unknown = sorted(set(obj) - known)
    if unknown:
        _fail(path, f"unknown fields {unknown}")

    try:
        return StudyRegression(
            id=sid, n=n, coefficients=coefficients, cov_spec=cov_spec,
            mse=mse, dfe=dfe, features=features,
        )
    except InputError as exc:
        _fail(path, str(exc))


def _parse_moderator(obj, catalog: PredictorCatalog, path: str) -> ModeratorSpec:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    name = _get(obj, "name", path, required=True)
    target = _get(obj, "target", path, required=True)
    when = _get(obj, "when", path, required=True)
    if not isinstance(name, str) or not name:
        _fail(f"{path}.name", "expected a non-empty string")
    if not isinstance(target, str) or target not in catalog:
        _fail(f"{path}.target", f"expected a catalog label, got {target!r}")
    predicate = compile_when(when, catalog, f"{path}.when")
    return ModeratorSpec(name=name, target=target, applies_when=predicate, source=when)


def parse_study_json(source: Union[str, TextIO]) -> StudyFile:
    """Parse the JSON study format from a string, stream, or parsed dict."""
    if isinstance(source, str):
        text = source
    else:
        text = source.read()
    try:
        root = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"not valid JSON: {exc}") from None
    if not isinstance(root, dict):
        _fail("$", "expected a top-level object")
    unknown = sorted(set(root) - {"catalog", "studies", "moderators"})
    if unknown:
        _fail("$", f"unknown top-level fields {unknown}")

    catalog = _parse_catalog(_get(root, "catalog", "$", required=True))
    studies_obj = _get(root, "studies", "$", required=True)
    if not isinstance(studies_obj, list):
        _fail("studies", "expected a list")
    if not studies_obj:
        _fail("studies", "at least one study required")
    studies = [_parse_study(s, catalog, f"studies[{i}]") for i, s in enumerate(studies_obj)]

    moderators_obj = root.get("moderators", [])
    if not isinstance(moderators_obj, list):
        _fail("moderators", "expected a list")
    moderators = [
        _parse_moderator(mod, catalog, f"moderators[{i}]")
        for i, mod in enumerate(moderators_obj)
    ]
    return StudyFile(catalog=catalog, studies=studies, moderators=moderators)


def serialize_study_json(study_file: StudyFile, indent: int = 2) -> str:
    """Inverse of ``parse_study_json``; numbers round-trip exactly."""
    catalog = study_file.catalog
    predictors = list(catalog.names[1:] if catalog.has_intercept else catalog.names)
    root: dict = {"catalog": {"intercept": catalog.has_intercept, "predictors": predictors}}

    out_studies = []
    for study in study_file.studies:
        entry: dict = {"id": study.id, "n": study.n, "dfe": study.dfe}
        if study.mse is not None:
            entry["mse"] = study.mse
        entry["coefficients"] = dict(study.coefficients)
        spec = study.cov_spec
        if isinstance(spec, FullCovariance):
            entry["cov"] = spec.matrix.tolist()
        elif isinstance(spec, StandardErrorsWithCommonCorr):
            entry["se"] = spec.se.tolist()
            entry["rho"] = spec.rho
        elif isinstance(spec, StandardErrors):
            entry["se"] = spec.se.tolist()
        elif isinstance(spec, XtXInverseWithMse):
            entry["xtx_inverse"] = spec.matrix.tolist()
            entry.setdefault("mse", spec.mse)
        if study.features:
            entry["features"] = dict(study.features)
        out_studies.append(entry)
    root["studies"] = out_studies

    if study_file.moderators:
        mods = []
        for mod in study_file.moderators:
            if mod.source is None:
                raise InputError(
                    f"moderator {mod.name!r} has a programmatic predicate and "
                    "cannot be serialized; give it a textual 'source'"
                )
            mods.append({"name": mod.name, "target": mod.target, "when": mod.source})
        root["moderators"] = mods
    return json.dumps(root, indent=indent)


# ---------------------------------------------------------------------------
# CSV (single focal slope per study)
# ---------------------------------------------------------------------------


def parse_study_csv(source: Union[str, TextIO]) -> StudyFile:
    """Parse the CSV format: one row per study, columns ``study_id``,
    ``slope``, ``se`` or ``variance``, and ``n``."""
    stream = io.StringIO(source) if isinstance(source, str) else source
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise InputError("empty CSV input")
    header = [h.strip() for h in reader.fieldnames]
    unknown = sorted(set(header) - _CSV_COLUMNS)
    if unknown:
        raise InputError(
            f"unsupported CSV columns {unknown}: the CSV format carries only "
            "study_id, slope, se or variance, and n (use JSON for covariance data)"
        )
    for required in ("study_id", "slope", "n"):
        if required not in header:
            raise InputError(f"CSV is missing required column {required!r}")
    if "se" not in header and "variance" not in header:
        raise InputError("CSV needs an 'se' or 'variance' column")
    if "se" in header and "variance" in header:
        raise InputError("give either 'se' or 'variance', not both")

    catalog = PredictorCatalog((CSV_SLOPE_LABEL,), has_intercept=False)
    studies = []
    for lineno, row in enumerate(reader, start=2):
        where = f"line {lineno}"
        sid = (row.get("study_id") or "").strip()
        if not sid:
            raise InputError(f"{where}: empty study_id")

        def _cell(col: str) -> float:
            raw = (row.get(col) or "").strip()
            try:
                return float(raw)
            except ValueError:
                raise InputError(f"{where}, column {col!r}: not a number: {raw!r}") from None

        slope = _cell("slope")
        if "se" in header:
            se = _cell("se")
            if se <= 0:
                raise InputError(f"{where}: se must be positive, got {se}")
        else:
            variance = _cell("variance")
            if variance <= 0:
                raise InputError(f"{where}: variance must be positive, got {variance}")
            se = float(np.sqrt(variance))
        n_raw = (row.get("n") or "").strip()
        if not n_raw.isdigit():
            raise InputError(f"{where}, column 'n': expected a positive integer, got {n_raw!r}")
        try:
            studies.append(
                StudyRegression(
                    id=sid, n=int(n_raw), coefficients={CSV_SLOPE_LABEL: slope},
                    cov_spec=StandardErrors([se]),
                )
            )
        except InputError as exc:
            raise InputError(f"{where}: {exc}") from None
    if not studies:
        raise InputError("at least one study required")
    return StudyFile(catalog=catalog, studies=studies)


def parse_study_file(
    path_or_stream,
    fmt: Optional[str] = None,
) -> StudyFile:
    """Parse a study file by path (format inferred from the suffix) or
    stream (format required)."""
    if hasattr(path_or_stream, "read"):
        if fmt not in ("json", "csv"):
            raise InputError("parsing a stream requires fmt='json' or fmt='csv'")
        return parse_study_json(path_or_stream) if fmt == "json" else parse_study_csv(path_or_stream)
    path = str(path_or_stream)
    if fmt is None:
        if path.endswith(".json"):
            fmt = "json"
        elif path.endswith(".csv"):
            fmt = "csv"
        else:
            raise InputError(f"cannot infer format of {path!r}; pass fmt='json' or 'csv'")
    if fmt not in ("json", "csv"):
        raise InputError(f"unknown study-file format {fmt!r}")
    with open(path, "r", encoding="utf-8") as handle:
        return parse_study_json(handle) if fmt == "json" else parse_study_csv(handle)


# ---------------------------------------------------------------------------
# Raw-data CSV (oracle input)
# ---------------------------------------------------------------------------


def parse_raw_csv(path_or_stream) -> "RawDataset":
    """Case-level CSV for the verification oracle.

    Header: ``study_id``, ``y``, then one column per predictor.  The
    intercept column is implicit.
    """
    from .oracle.rawdata import RawDataset  # local import to keep layering thin

    if hasattr(path_or_stream, "read"):
        stream = path_or_stream
        close = False
    else:
        stream = open(str(path_or_stream), "r", encoding="utf-8")
        close = True
    try:
        reader = csv.DictReader(stream)
        if reader.fieldnames is None:
            raise InputError("empty CSV input")
        header = [h.strip() for h in reader.fieldnames]
        if header[:2] != ["study_id", "y"]:
            raise InputError(
                f"raw-data CSV must start with columns study_id, y; got {header[:2]}"
            )
        predictors = header[2:]
        if not predictors:
            raise InputError("raw-data CSV needs at least one predictor column")
        labels, ys, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            sid = (row.get("study_id") or "").strip()
            if not sid:
                raise InputError(f"line {lineno}: empty study_id")
            try:
                ys.append(float(row["y"]))
                rows.append([float(row[p]) for p in predictors])
            except (ValueError, TypeError) as exc:
                raise InputError(f"line {lineno}: {exc}") from None
            labels.append(sid)
        if not rows:
            raise InputError("raw-data CSV has no cases")
        x = np.column_stack([np.ones(len(rows)), np.array(rows)])
        catalog = PredictorCatalog([INTERCEPT] + predictors)
        return RawDataset(
            x=x, y=np.array(ys), study_labels=np.array(labels, dtype=object), catalog=catalog
        )
    finally:
        if close:
            stream.close()


def provenance_tag(cov: SlopeCovariance) -> str:
    """Human-readable provenance, including the fill correlation when used."""
    if cov.provenance is Provenance.CORR_FILLED and cov.rho is not None:
        return f"{cov.provenance.value}(rho={cov.rho:g})"
    return cov.provenance.value
