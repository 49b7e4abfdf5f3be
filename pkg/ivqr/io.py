#!/usr/bin/env python

"""
io
==

Reading and writing of datasets, networks and result documents.

Dataset CSV layout: a header with ``cluster,y,x,w_1..w_dw,z_1..z_dz`` and an
optional ``v`` (observation weights). Floats are written with the shortest
decimal that reads back to the same double, so export and import are exact.

Result documents carry the schema tag ``ivqr-results/1`` and the resolved run
configuration.

:Example:

from ivqr import io
data = io.load_csv("data.csv")
open("results.json", "wb").write(io.emit_results([result], "json", config.to_dict()))
"""

import io as _io
import json
import logging
import re

import numpy as np
import pandas as pd

from .models import (
    ClusteredDataset, ConfidenceSet, IvqrFit, MissingColumn, Network, NonFinite, ParseError, RESULT_FIELDS,
    TestResult, ValidationError)


logger = logging.getLogger(__name__)

SCHEMA = "ivqr-results/1"

REQUIRED_COLUMNS = ["cluster", "y", "x", "z_1"]


def _numbered(columns, prefix):
    pattern = re.compile(r"^%s_(\d+)$" % prefix)
    found = sorted((int(pattern.match(c).group(1)), c) for c in columns if pattern.match(c))
    indices = [i for i, _ in found]
    if indices != list(range(1, len(indices) + 1)):
        raise MissingColumn("Columns %s_* must be numbered 1..%i without gaps, got %s." % (
            prefix, len(indices), [c for _, c in found]))
    return [c for _, c in found]


def _to_float(frame, column):
    """
    Column as floats. Python's float() rounds the decimal text to the nearest
    double, so written values read back exactly.
    """
    values = np.empty(frame.shape[0])
    for row, text in enumerate(frame[column]):
        try:
            values[row] = float(text)
        except ValueError:
            raise ParseError("column '%s': cannot parse '%s' as a number." % (column, text), row + 2)
        if not np.isfinite(values[row]):
            raise NonFinite("line %i: column '%s' is not finite (%s)." % (row + 2, column, text))
    return values


def load_csv(path, add_intercept=True):
    """
    Read a dataset.

    :param path: CSV file (UTF-8, decimal point).
    :type path: str
    :param add_intercept: Prepend a column of ones to W.
    :type add_intercept: bool
    :rtype: ivqr.models.ClusteredDataset
    :raises ParseError: on ragged rows or cells that are not numbers (with the line number).
    :raises MissingColumn: when ``cluster``, ``y``, ``x`` or ``z_1`` is absent.
    :raises NonFinite: on nan or infinite entries.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[], encoding="utf-8")
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(str(e), int(match.group(1)) if match else None)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty.", 1)
    frame.columns = [c.strip() for c in frame.columns]

    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumn("Missing column(s): %s." % ", ".join(missing))
    if frame.shape[0] == 0:
        raise ParseError("no data rows.", 2)
    if (frame["cluster"].str.strip() == "").any():
        row = int(np.flatnonzero((frame["cluster"].str.strip() == "").values)[0])
        raise ParseError("empty cluster label.", row + 2)

    w_columns = _numbered(frame.columns, "w")
    z_columns = _numbered(frame.columns, "z")
    numeric = ["y", "x"] + w_columns + z_columns + (["v"] if "v" in frame.columns else [])
    values = dict((column, _to_float(frame, column)) for column in numeric)

    n = frame.shape[0]
    w = np.column_stack([values[c] for c in w_columns]) if w_columns else np.zeros((n, 0))
    z = np.column_stack([values[c] for c in z_columns])
    dataset = ClusteredDataset(
        values["y"], values["x"], w, z, list(frame["cluster"].str.strip()), v=values.get("v"),
        add_intercept=add_intercept)
    logger.info("Loaded %s: %r", path, dataset)
    return dataset


def dump_csv(dataset, path):
    """
    Write a dataset in the layout read by `load_csv`, floats at full precision.
    """
    frame = dataset.asDataFrame()
    for column in frame.columns[1:]:
        frame[column] = [repr(float(value)) for value in frame[column]]
    frame.to_csv(path, index=False)


def load_edges(path, n=None):
    """
    Read an undirected edge list: two integer node columns (a header is
    allowed), comma or whitespace separated.

    :param n: Number of nodes (default: largest node index + 1).
    :rtype: ivqr.models.Network
    """
    try:
        frame = pd.read_csv(path, sep=r"[,\s]+", engine="python", header=None, comment="#", dtype=str)
    except pd.errors.EmptyDataError:
        raise ParseError("edge list is empty.", 1)
    if frame.shape[1] < 2:
        raise ParseError("edge list needs two columns.", 1)
    frame = frame.iloc[:, :2]
    if not frame.iloc[0].str.strip().str.lstrip("-").str.isdigit().all():
        frame = frame.iloc[1:]
    edges = list()
    for row, (source, target) in enumerate(frame.itertuples(index=False), start=1):
        try:
            edges.append((int(source), int(target)))
        except ValueError:
            raise ParseError("node ids must be integers, got '%s,%s'." % (source, target), row)
    edges = np.array(edges, dtype=int).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if edges.size else 0
    return Network(n, edges)


def dump_partition(partition, path):
    """Write ``node,label`` rows (-1 marks dropped nodes)."""
    partition.asDataFrame().to_csv(path, index=False)


def _plain(value):
    """numpy scalars and arrays to JSON types."""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError("Cannot serialize %r." % type(value))


def _record(result):
    """(kind, ordered record) of one result object."""
    from .simulation import RejectionTable
    if isinstance(result, TestResult):
        return "test", result.to_dict()
    if isinstance(result, ConfidenceSet):
        return "confidence_set", result.to_dict()
    if isinstance(result, IvqrFit):
        return "fit", result.to_dict()
    if isinstance(result, RejectionTable):
        return "rejection_table", result.to_dict()
    raise ValidationError("Cannot emit results of type %s." % type(result).__name__)


def _csv_block(kind, results):
    if kind == "test":
        frame = pd.DataFrame([r.to_dict() for r in results], columns=RESULT_FIELDS)
        frame["beta0"] = [json.dumps(b, default=_plain) if isinstance(b, (list, dict)) else b for b in frame["beta0"]]
        frame["metadata"] = [json.dumps(m, sort_keys=True, default=_plain) for m in frame["metadata"]]
        return frame
    if kind == "confidence_set":
        rows = list()
        for r in results:
            for lower, upper in (r.intervals or [(np.nan, np.nan)]):
                rows.append({"method": r.method, "tau": r.tau, "alpha": r.alpha, "lower": lower, "upper": upper})
        return pd.DataFrame(rows, columns=["method", "tau", "alpha", "lower", "upper"])
    if kind == "fit":
        rows = [{"tau": t, "beta": r[t].beta, "boundary": r[t].boundary} for r in results for t in r.taus]
        return pd.DataFrame(rows, columns=["tau", "beta", "boundary"])
    frames = list()
    for r in results:
        frame = r.asDataFrame()
        failures = r.failures.copy()
        failures.columns = ["failures_%s_%s" % (h, t) for h, t in failures.columns]
        frames.append(pd.concat([frame, failures], axis=1))
    return pd.concat(frames)


def emit_results(results, fmt="json", config=None):
    """
    Serialize results into a versioned document.

    :param results: `TestResult`, `ConfidenceSet`, `IvqrFit` or `RejectionTable` objects.
    :type results: list
    :param fmt: "json" or "csv".
    :type fmt: str
    :param config: Resolved run configuration, echoed in the document.
    :type config: dict
    :rtype: bytes

    JSON documents are ``{"schema", "config", "results": [{"kind", ...}]}``
    with fields in a fixed order. CSV documents start with ``# schema:`` and
    ``# config:`` lines, then one table per kind of result, each announced by a
    ``# <kind>`` line; rejection tables have one row per method and one column
    per (hypothesis, tau).
    """
    records = [_record(r) for r in results]
    if fmt == "json":
        document = {
            "schema": SCHEMA, "config": config or dict(),
            "results": [dict([("kind", kind)] + list(record.items())) for kind, record in records]}
        return (json.dumps(document, indent=2, default=_plain) + "\n").encode("utf-8")
    if fmt != "csv":
        raise ValidationError("Unknown output format '%s'." % fmt)

    handle = _io.StringIO()
    handle.write("# schema: %s\n" % SCHEMA)
    handle.write("# config: %s\n" % json.dumps(config or dict(), sort_keys=True, default=_plain))
    kinds = list()
    for kind, _ in records:
        if kind not in kinds:
            kinds.append(kind)
    for kind in kinds:
        handle.write("# %s\n" % kind)
        same = [r for r, (k, _) in zip(results, records) if k == kind]
        _csv_block(kind, same).to_csv(handle, index=kind == "rejection_table", lineterminator="\n")
    return handle.getvalue().encode("utf-8")


def read_results(data):
    """
    Parse a JSON result document.

    :param data: Document bytes or text.
    :returns: (config, results); test records come back as `TestResult`
        objects, other kinds as plain dicts.
    :rtype: tuple
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    document = json.loads(data)
    if document.get("schema") != SCHEMA:
        raise ValidationError("Unknown result schema '%s'." % document.get("schema"))
    results = list()
    for record in document["results"]:
        record = dict(record)
        kind = record.pop("kind")
        results.append(TestResult.from_dict(record) if kind == "test" else record)
    return document["config"], results
