"""Plain-text interchange formats.

Graph files are a sequence of ``[section]`` blocks. A plain graph has
``[header]`` (``key value`` lines), ``[vertices]`` (``id mu``) and ``[edges]``
(``u v w tag``). Cylinders add ``[base.*]`` sections for their base graph,
glued manifolds add ``[backbone.*]`` and ``[pieceN.*]`` graphs, an
``[embeddings]`` index with one line per piece, ``[NAME.map]`` vertex maps
(``source ambient isometric``) and ``[glue.pieceN]`` bridge records.
Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly.
"""
from __future__ import annotations

import io
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import DataError
from .graph import (CylinderGraph, Embedding, GluedManifold, GlueRecord, WeightedGraphManifold)
from .spectral import SpectralDecomposition

FORMAT_TAG = "rieszlab-graph 1"


def _f(x) -> str:
    return format(float(x), ".17g")


# writing -----------------------------------------------------------------------------

def _write_graph(out, g: WeightedGraphManifold, prefix: str):
    p = f"{prefix}." if prefix else ""
    out.write(f"[{p}header]\n")
    kind = "cylinder" if isinstance(g, CylinderGraph) else "manifold"
    out.write(f"kind {kind}\nname {g.name or '-'}\ndim_hint {g.dim_hint}\n")
    out.write(f"vertices {g.n_vertices}\nedges {g.n_edges}\n")
    if isinstance(g, CylinderGraph):
        out.write(f"axis_steps {g.axis_steps}\nspacing {_f(g.spacing)}\naxis_boundary {g.axis_boundary}\n")
    out.write(f"[{p}vertices]\n")
    for i, m in enumerate(g.mu):
        out.write(f"{i} {_f(m)}\n")
    out.write(f"[{p}edges]\n")
    tags = g.tags()
    for (u, v), w, t in zip(g.edges, g.weights, tags):
        out.write(f"{u} {v} {_f(w)} {t}\n")
    if isinstance(g, CylinderGraph):
        _write_graph(out, g.base, f"{p}base")


def dumps_graph(obj) -> str:
    out = io.StringIO()
    out.write(f"# {FORMAT_TAG}\n")
    if isinstance(obj, GluedManifold):
        _write_graph(out, obj.ambient, "")
        out.write(f"[glued]\nbridge_policy {obj.bridge_policy}\npieces {len(obj.pieces)}\n")
        _write_graph(out, obj.backbone, "backbone")
        for j, piece in enumerate(obj.pieces):
            _write_graph(out, piece, f"piece{j}")
        out.write("[embeddings]\n")
        for j, emb in enumerate(obj.embeddings):
            out.write(f"piece{j} site {emb.site} glue_level {emb.glue_level} cut {emb.cut}\n")
        for sec, emb in [("backbone.map", obj.backbone_embedding)] + \
                [(f"piece{j}.map", e) for j, e in enumerate(obj.embeddings)]:
            out.write(f"[{sec}]\n")
            for v, (a, iso) in enumerate(zip(emb.index_map, emb.isometric)):
                out.write(f"{v} {a} {int(iso)}\n")
        for j, rec in enumerate(obj.glue_records):
            out.write(f"[glue.piece{j}]\nsites {rec.piece_site} {rec.backbone_site}\n")
            out.write("piece_boundary " + " ".join(map(str, rec.piece_boundary)) + "\n")
            out.write("backbone_boundary " + " ".join(map(str, rec.backbone_boundary)) + "\n")
            for (u, v), w in zip(rec.bridge_edges, rec.bridge_weights):
                out.write(f"{u} {v} {_f(w)}\n")
    else:
        _write_graph(out, obj, "")
    return out.getvalue()


def write_graph(obj, path) -> None:
    Path(path).write_text(dumps_graph(obj))


# reading -----------------------------------------------------------------------------

def _sections(text: str) -> "OrderedDict[str, list[str]]":
    secs: OrderedDict[str, list[str]] = OrderedDict()
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1]
            if cur in secs:
                raise DataError(f"line {lineno}: duplicate section [{cur}]")
            secs[cur] = []
        elif cur is None:
            raise DataError(f"line {lineno}: content before the first section")
        else:
            secs[cur].append(line)
    return secs


def _header(lines) -> dict:
    out = {}
    for line in lines:
        key, _, val = line.partition(" ")
        out[key] = val.strip()
    return out


def _read_graph(secs, prefix: str) -> WeightedGraphManifold:
    p = f"{prefix}." if prefix else ""
    try:
        hdr = _header(secs[f"{p}header"])
        vlines = secs[f"{p}vertices"]
        elines = secs[f"{p}edges"]
        nv, ne = int(hdr["vertices"]), int(hdr["edges"])
        if len(vlines) != nv or len(elines) != ne:
            raise DataError(f"[{p}header] counts do not match the listed vertices/edges")
        mu = np.empty(nv)
        for line in vlines:
            i, m = line.split()
            mu[int(i)] = float(m)
        edges = np.empty((ne, 2), dtype=np.int64)
        w = np.empty(ne)
        tags = []
        for k, line in enumerate(elines):
            u, v, ww, t = line.split()
            edges[k] = int(u), int(v)
            w[k] = float(ww)
            tags.append(t)
        name = "" if hdr.get("name", "-") == "-" else hdr["name"]
        if hdr.get("kind") == "cylinder":
            base = _read_graph(secs, f"{p}base")
            g = CylinderGraph(base, int(hdr["axis_steps"]), float(hdr["spacing"]), hdr["axis_boundary"],
                              name=name)
            if not (np.array_equal(g.mu, mu) and np.array_equal(g.weights, w[np.lexsort((edges[:, 1], edges[:, 0]))])):
                raise DataError(f"[{p}] cylinder data disagree with its base and axis parameters")
            return g
        return WeightedGraphManifold(mu, edges, w, tags, dim_hint=int(hdr["dim_hint"]), name=name)
    except KeyError as exc:
        raise DataError(f"missing section or key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(str(exc)) from exc


def _read_embedding(secs, name, source, meta) -> Embedding:
    rows = np.array([list(map(int, l.split())) for l in secs[f"{name}.map"]], dtype=np.int64)
    rows = rows.reshape(-1, 3)
    if rows.shape[0] != source.n_vertices:
        raise DataError(f"[{name}.map] has {rows.shape[0]} rows for {source.n_vertices} vertices")
    imap = rows[:, 1].copy()
    iso = rows[:, 2].astype(bool)
    imap.setflags(write=False)
    iso.setflags(write=False)
    return Embedding(source, imap, iso, meta["site"], meta["glue_level"], meta["cut"])


def _embedding_index(lines) -> dict:
    out = {}
    for line in lines:
        name, *rest = line.split()
        out[name] = dict(zip(rest[0::2], map(int, rest[1::2])))
    return out


def _read_glue(secs, j) -> GlueRecord:
    lines = secs[f"glue.piece{j}"]
    ps, bs = map(int, lines[0].split()[1:])
    pb = np.array(list(map(int, lines[1].split()[1:])), dtype=np.int64)
    bb = np.array(list(map(int, lines[2].split()[1:])), dtype=np.int64)
    rows = [l.split() for l in lines[3:]]
    be = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    bw = np.array([float(r[2]) for r in rows])
    for a in (pb, bb, be, bw):
        a.setflags(write=False)
    return GlueRecord(ps, bs, pb, bb, be, bw)


def loads_graph(text: str):
    secs = _sections(text)
    try:
        if "glued" in secs:
            meta = _header(secs["glued"])
            ambient = _read_graph(secs, "")
            backbone = _read_graph(secs, "backbone")
            pieces = tuple(_read_graph(secs, f"piece{j}") for j in range(int(meta["pieces"])))
            index = _embedding_index(secs["embeddings"])
            embs = tuple(_read_embedding(secs, f"piece{j}", pc, index[f"piece{j}"])
                         for j, pc in enumerate(pieces))
            bemb = _read_embedding(secs, "backbone", backbone, dict(site=-1, glue_level=-1, cut=0))
            recs = tuple(_read_glue(secs, j) for j in range(len(pieces)))
            return GluedManifold(ambient, backbone, pieces, embs, bemb, recs, meta["bridge_policy"])
        return _read_graph(secs, "")
    except (KeyError, IndexError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed graph file: {exc}") from exc


def read_graph(path):
    return loads_graph(Path(path).read_text())


# fields, decompositions, estimates ---------------------------------------------------------

def dumps_field(values) -> str:
    vals = np.asarray(getattr(values, "values", values), dtype=float)
    return "".join(f"{i} {_f(x)}\n" for i, x in enumerate(vals))


def loads_field(text: str, n: int = None) -> np.ndarray:
    pairs = [l.split() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    size = n if n is not None else (max(int(a) for a, _ in pairs) + 1 if pairs else 0)
    out = np.zeros(size)
    for a, b in pairs:
        out[int(a)] = float(b)
    return out


def dumps_decomposition(D: SpectralDecomposition) -> str:
    out = io.StringIO()
    n = len(D.eigenvalues)
    out.write(f"# rieszlab-spectrum 1\nsize {n}\nkernel_dim {D.kernel_dim}\n[eigenvalues]\n")
    out.write(" ".join(_f(x) for x in D.eigenvalues) + "\n[eigenvectors]\n")
    for row in D.eigenvectors:
        out.write(" ".join(_f(x) for x in row) + "\n")
    return out.getvalue()


def loads_decomposition(text: str, host) -> SpectralDecomposition:
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    try:
        n = int(lines[0].split()[1])
        k = int(lines[1].split()[1])
        lam = np.array([float(x) for x in lines[3].split()])
        V = np.array([[float(x) for x in l.split()] for l in lines[5:5 + n]])
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed decomposition: {exc}") from exc
    if V.shape != (n, n) or host.n_vertices != n:
        raise DataError("decomposition size does not match the host")
    return SpectralDecomposition(host, lam, V, k)


ESTIMATE_COLUMNS = ("host_id", "p", "value", "restarts", "converged", "witness_file")


def estimate_row(host_id: str, est, witness_file: str = "") -> dict:
    return dict(host_id=host_id, p=est.p, value=est.value, restarts=est.restarts,
                converged=int(est.converged), witness_file=witness_file)


def dumps_estimates(rows) -> str:
    out = io.StringIO()
    out.write(",".join(ESTIMATE_COLUMNS) + "\n")
    for r in rows:
        cells = []
        for c in ESTIMATE_COLUMNS:
            v = r[c]
            cells.append(format(v, ".12g") if isinstance(v, float) else str(v))
        out.write(",".join(cells) + "\n")
    return out.getvalue()
