"""Loading models, sequence policies and extinction specs from YAML or JSON.

A model document looks like::

    dimension: 1
    family: pair_geometric      # explicit | pair_table | pair_geometric | modified | scaled
    beta: 0.05
    gamma: 0.5
    sequence: ising_optimal     # l1_balls | ising_optimal | brute_force | {explicit: [...]}

Family payloads:

* ``explicit``: ``edges: [[[v1, v2, ...], J], ...]``
* ``pair_table``: ``couplings: [[offset, J], ...]`` (symmetrised)
* ``pair_geometric``: ``beta``, ``gamma``
* ``modified``: ``base: <model>``, ``overrides: [[[v1, v2, ...], J], ...]``
* ``scaled``: ``base: <model>``, ``factors: [[[v1, v2, ...], f], ...]``, ``default_factor``

Vertices are coordinate lists; in one dimension a bare integer also works.
An explicit sequence lists increments as lists of offsets from the centre.
JSON documents are valid YAML, so one loader reads both.
"""
from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml

from .errors import ModelError
from .extinction import ExtinctionSpec, TablePMF, VertexClass, galton_watson_spec
from .lattice import (
    ExplicitFinite,
    Interaction,
    Modified,
    PairGeometric,
    PairTable,
    Scaled,
    as_vertex,
)
from .optimize import POLICIES


def _load(source) -> Any:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError(f"{path}: expected a mapping at the top level")
    return doc


def _require(doc: dict, key: str):
    if key not in doc:
        raise ModelError(f"missing key {key!r}")
    return doc[key]


def _edge_list(items, what: str) -> dict:
    out = {}
    if not isinstance(items, list):
        raise ModelError(f"{what} must be a list of [vertices, value] pairs")
    for item in items:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ModelError(f"bad {what} entry {item!r}")
        verts, val = item
        key = tuple(tuple(v) if isinstance(v, list) else v for v in verts)
        if key in out:
            raise ModelError(f"duplicate {what} entry {verts!r}")
        out[key] = float(val)
    return out


def interaction_from_dict(doc: dict, dim: int | None = None) -> Interaction:
    dim = int(doc.get("dimension", dim) or 0)
    if dim not in (1, 2, 3):
        raise ModelError(f"dimension must be 1, 2 or 3, got {doc.get('dimension')!r}")
    family = _require(doc, "family")
    try:
        if family == "explicit":
            edges = _edge_list(doc.get("edges", []), "edges")
            return ExplicitFinite(dim, list(edges.items()))
        if family == "pair_table":
            couplings = {}
            for item in _require(doc, "couplings"):
                off, J = item
                couplings[as_vertex(off, dim)] = float(J)
            return PairTable(dim, couplings)
        if family == "pair_geometric":
            return PairGeometric(dim, float(_require(doc, "beta")), float(_require(doc, "gamma")))
        if family == "modified":
            base = interaction_from_dict(_require(doc, "base"), dim)
            return Modified(base, _edge_list(doc.get("overrides", []), "overrides"))
        if family == "scaled":
            base = interaction_from_dict(_require(doc, "base"), dim)
            return Scaled(base, _edge_list(doc.get("factors", []), "factors"),
                          float(doc.get("default_factor", 1.0)))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad {family} payload: {exc}") from exc
    raise ModelError(f"unknown family {family!r}")


def policy_from_value(value, dim: int):
    """Sequence policy from its document form."""
    if value is None:
        return "ising_optimal"
    if isinstance(value, str):
        if value not in POLICIES:
            raise ModelError(f"unknown sequence policy {value!r}")
        return value
    if isinstance(value, dict) and set(value) == {"explicit"}:
        incs = []
        for inc in value["explicit"]:
            if not inc:
                raise ModelError("explicit sequence has an empty increment")
            incs.append([as_vertex(o, dim) for o in inc])
        return ("explicit", incs)
    raise ModelError(f"bad sequence description {value!r}")


def load_model(source):
    """``(interaction, sequence_policy)`` from a path or an already parsed mapping."""
    doc = _load(source)
    J = interaction_from_dict(doc)
    return J, policy_from_value(doc.get("sequence"), J.dim)


def parse_vertex_list(text: str, dim: int) -> list:
    """Window from the command line: ``"0,1"`` in 1D or ``"0:0,1:0"`` / ``"[[0,0],[1,0]]"``."""
    text = text.strip()
    if text.startswith("["):
        items = yaml.safe_load(text)
    else:
        items = [[int(c) for c in tok.split(":")] for tok in text.split(",") if tok.strip()]
    try:
        out = [as_vertex(v, dim) for v in items]
    except (TypeError, ValueError) as exc:
        raise ModelError(f"bad vertex list {text!r}") from exc
    if len(set(out)) != len(out):
        raise ModelError("window has repeated vertices")
    return out


def _vertex(v):
    if isinstance(v, int):
        return (v,)
    if isinstance(v, list):
        return tuple(int(c) for c in v)
    raise ModelError(f"bad vertex {v!r}")


def extinction_spec_from_dict(doc: dict) -> ExtinctionSpec:
    """Extinction spec from a document.

    Either ``galton_watson: {offspring: [...], initial: n}`` or::

        classes:
          bulk:
            psi: [0.6, 0.4]
            mass: 1.0
            offsets: {1: [[1]]}       # or sizes: {1: 1}
          hot:
            vertices: [[0]]
            psi: [0.3, 0.7]
            offsets: {1: [[1], [-1]]}
        initial_set: [[0], [1]]
    """
    if "galton_watson" in doc:
        gw = doc["galton_watson"]
        return galton_watson_spec([float(p) for p in _require(gw, "offspring")],
                                  int(gw.get("initial", 1)))
    classes = {}
    for label, c in _require(doc, "classes").items():
        try:
            psi = TablePMF([float(p) for p in _require(c, "psi")])
            offsets = c.get("offsets")
            if offsets is not None:
                offsets = {int(l): [_vertex(o) for o in offs] for l, offs in offsets.items()}
            sizes = c.get("sizes")
            if sizes is not None:
                sizes = {int(l): int(n) for l, n in sizes.items()}
            verts = c.get("vertices")
            if verts is not None:
                verts = tuple(_vertex(v) for v in verts)
            classes[label] = VertexClass(psi, float(c.get("mass", 1.0)), offsets=offsets,
                                         sizes=sizes, vertices=verts)
        except (TypeError, ValueError, AttributeError) as exc:
            raise ModelError(f"bad class {label!r}: {exc}") from exc
    initial = [_vertex(v) for v in doc.get("initial_set", [])]
    return ExtinctionSpec(classes, initial)


def load_extinction_spec(source) -> ExtinctionSpec:
    return extinction_spec_from_dict(_load(source))
