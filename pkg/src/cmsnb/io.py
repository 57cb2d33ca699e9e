"""File formats: panel CSVs, neighbour weights and persisted posterior draws.

Counts CSV: ``area_id,week,count``. Covariates CSV (long form):
``area_id,week,name,value``. Neighbours CSV: ``from_area,to_area,weight``
meaning ``from_area`` is a neighbour of ``to_area`` with that weight; rows are
undirected (mirrored) unless the loader is told the weights are asymmetric.
Patient-sample CSV: ``area_id,neighborhood_id,n``.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from collections import defaultdict

import numpy as np

from .draws import PosteriorDraws, WaicAccumulator
from .model import PanelData

DRAWS_FORMAT = "cmsnb-draws"
DRAWS_VERSION = 1


class PanelFormatError(ValueError):
    """A malformed input file; the message names the file and line."""


def _rows(path, required):
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, 1)
                 if line.strip() and not line.lstrip().startswith("#")]
    if not lines:
        raise PanelFormatError(f"{path}: empty file")
    reader = csv.reader([line for _, line in lines])
    header = [h.strip() for h in next(reader)]
    missing = [c for c in required if c not in header]
    if missing:
        raise PanelFormatError(f"{path}:{lines[0][0]}: missing columns {missing}")
    pos = {c: header.index(c) for c in required}
    for (n, _), rec in zip(lines[1:], reader):
        if len(rec) != len(header):
            raise PanelFormatError(f"{path}:{n}: expected {len(header)} fields, got {len(rec)}")
        yield n, {c: rec[pos[c]].strip() for c in required}


def _number(path, n, field, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise PanelFormatError(f"{path}:{n}: bad {field} {text!r}") from None


def load_panel(counts_path, covariates_path=None, neighbors_path=None, *,
               emission_covariates=None, transition_covariates=None, standardize: bool = True,
               asymmetric: bool = False, initial_state_dist=None) -> PanelData:
    """Read and validate a panel.

    Areas are ordered by first appearance in the counts file and weeks by
    value. Covariates are centred and scaled when ``standardize`` is set;
    ``PanelData.transforms`` records (mean, sd) per covariate. Emission and
    transition covariates default to every covariate in the file.
    """
    counts = {}
    areas, weeks = [], set()
    seen = {}
    for n, r in _rows(counts_path, ("area_id", "week", "count")):
        a = r["area_id"]
        w = _number(counts_path, n, "week", r["week"], int)
        c = _number(counts_path, n, "count", r["count"], int)
        if c < 0:
            raise PanelFormatError(f"{counts_path}:{n}: negative count {c}")
        if (a, w) in counts:
            raise PanelFormatError(f"{counts_path}:{n}: duplicate cell ({a}, {w}), first at "
                                   f"line {seen[(a, w)]}")
        if a not in counts and a not in areas:
            areas.append(a)
        counts[(a, w)] = c
        seen[(a, w)] = n
        weeks.add(w)
    weeks = sorted(weeks)
    aidx = {a: i for i, a in enumerate(areas)}
    widx = {w: t for t, w in enumerate(weeks)}
    N, T = len(areas), len(weeks)
    y = np.full((N, T), -1, dtype=np.int64)
    for (a, w), c in counts.items():
        y[aidx[a], widx[w]] = c
    if (y < 0).any():
        i, t = np.argwhere(y < 0)[0]
        raise PanelFormatError(f"{counts_path}: missing count for area {areas[i]} week {weeks[t]}")

    names, cube = [], None
    transforms = {}
    if covariates_path:
        vals = defaultdict(dict)
        for n, r in _rows(covariates_path, ("area_id", "week", "name", "value")):
            a, name = r["area_id"], r["name"]
            if a not in aidx:
                raise PanelFormatError(f"{covariates_path}:{n}: unknown area id {a!r}")
            w = _number(covariates_path, n, "week", r["week"], int)
            if w not in widx:
                raise PanelFormatError(f"{covariates_path}:{n}: unknown week {w}")
            if (aidx[a], widx[w]) in vals[name]:
                raise PanelFormatError(f"{covariates_path}:{n}: duplicate {name} for ({a}, {w})")
            vals[name][(aidx[a], widx[w])] = _number(covariates_path, n, "value", r["value"])
        names = list(vals)
        cube = np.zeros((N, T, len(names)))
        for q, name in enumerate(names):
            if len(vals[name]) != N * T:
                have = vals[name]
                i, t = next((i, t) for i in range(N) for t in range(T) if (i, t) not in have)
                raise PanelFormatError(f"{covariates_path}: covariate {name!r} missing for area "
                                       f"{areas[i]} week {weeks[t]}")
            for (i, t), v in vals[name].items():
                cube[i, t, q] = v
            col = cube[:, :, q]
            mu, sd = float(col.mean()), float(col.std())
            if not sd > 0:
                raise PanelFormatError(f"{covariates_path}: covariate {name!r} is constant")
            if standardize:
                cube[:, :, q] = (col - mu) / sd
                transforms[name] = (mu, sd)
    else:
        cube = np.zeros((N, T, 0))

    def pick(sel):
        sel = names if sel is None else list(sel)
        unknown = [s for s in sel if s not in names]
        if unknown:
            raise PanelFormatError(f"unknown covariates {unknown}")
        idx = [names.index(s) for s in sel]
        return cube[:, :, idx], tuple(sel)

    x, xn = pick(emission_covariates)
    z, zn = pick(transition_covariates)
    W = np.zeros((N, N))
    if neighbors_path:
        W = load_neighbors(neighbors_path, aidx, asymmetric)
    return PanelData(y=y, x=x, z=z, W=W, x_names=xn, z_names=zn,
                     initial_state_dist=initial_state_dist, area_ids=tuple(areas),
                     transforms=transforms)


def write_panel(data: PanelData, counts_path, covariates_path=None, neighbors_path=None,
                weeks=None) -> None:
    """Write a panel in the CSV layouts ``load_panel`` reads (covariates as stored)."""
    weeks = list(range(1, data.T + 1)) if weeks is None else list(weeks)
    ids = data.area_ids
    write_csv(counts_path, ("area_id", "week", "count"),
              [(ids[i], weeks[t], int(data.y[i, t])) for i in range(data.N) for t in range(data.T)])
    if covariates_path:
        cols = {}
        for names, cube in ((data.x_names, data.x), (data.z_names, data.z)):
            for q, name in enumerate(names):
                cols.setdefault(name, cube[:, :, q])
        write_csv(covariates_path, ("area_id", "week", "name", "value"),
                  [(ids[i], weeks[t], name, float(col[i, t])) for name, col in cols.items()
                   for i in range(data.N) for t in range(data.T)])
    if neighbors_path:
        write_neighbors(neighbors_path, data.W, ids)


def load_neighbors(path, aidx: dict, asymmetric: bool = False) -> np.ndarray:
    """W[i, j] = weight of area j on area i from a neighbours CSV."""
    N = len(aidx)
    W = np.zeros((N, N))
    where = {}
    for n, r in _rows(path, ("from_area", "to_area", "weight")):
        for key in ("from_area", "to_area"):
            if r[key] not in aidx:
                raise PanelFormatError(f"{path}:{n}: unknown area id {r[key]!r}")
        j, i = aidx[r["from_area"]], aidx[r["to_area"]]
        w = _number(path, n, "weight", r["weight"])
        if i == j:
            raise PanelFormatError(f"{path}:{n}: an area cannot neighbour itself")
        if not 0 < w <= 1:
            raise PanelFormatError(f"{path}:{n}: weight {w} outside (0, 1]")
        if (i, j) in where:
            raise PanelFormatError(f"{path}:{n}: duplicate edge, first at line {where[(i, j)]}")
        where[(i, j)] = n
        W[i, j] = w
    if not asymmetric:
        for (i, j), n in where.items():
            if (j, i) in where and W[j, i] != W[i, j]:
                raise PanelFormatError(f"{path}:{n}: weights differ by direction; load with "
                                       "asymmetric weights declared")
        W = np.maximum(W, W.T)
    return W


# ---------------------------------------------------------------------------
# spatial weights


def bhattacharyya_weight(p, q) -> float:
    """Overlap sum_l sqrt(p_l q_l) of two probability vectors."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("probability vectors must have the same length")
    for v in (p, q):
        if (v < 0).any() or abs(v.sum() - 1.0) > 1e-9:
            raise ValueError("inputs must be probability vectors")
    return float(min(1.0, np.sqrt(p * q).sum()))


def neighbours_from_distributions(P, k: int = 5) -> np.ndarray:
    """Keep each area's k largest positive overlaps as its neighbours.

    ``P`` has one probability row per area. Ties at the cut-off go to the
    lower area index. Returns W with W[i, j] the weight of j on i.
    """
    P = np.asarray(P, dtype=float)
    N = P.shape[0]
    B = np.sqrt(P[:, None, :] * P[None, :, :]).sum(-1)
    np.clip(B, 0.0, 1.0, out=B)
    W = np.zeros((N, N))
    for i in range(N):
        cand = [j for j in range(N) if j != i and B[i, j] > 0]
        cand.sort(key=lambda j: (-B[i, j], j))
        for j in cand[:k]:
            W[i, j] = B[i, j]
    return W


def patient_distributions(path):
    """Area ids and per-area patient-origin distributions from a patient-sample CSV."""
    counts = defaultdict(dict)
    areas, hoods = [], []
    for n, r in _rows(path, ("area_id", "neighborhood_id", "n")):
        a, h = r["area_id"], r["neighborhood_id"]
        c = _number(path, n, "n", r["n"])
        if c < 0:
            raise PanelFormatError(f"{path}:{n}: negative patient count")
        if a not in counts:
            areas.append(a)
        if h not in hoods:
            hoods.append(h)
        counts[a][h] = counts[a].get(h, 0.0) + c
    P = np.array([[counts[a].get(h, 0.0) for h in hoods] for a in areas])
    tot = P.sum(axis=1, keepdims=True)
    if (tot <= 0).any():
        bad = areas[int(np.flatnonzero(tot[:, 0] <= 0)[0])]
        raise PanelFormatError(f"{path}: area {bad!r} has no patients")
    return areas, P / tot


def write_neighbors(path, W, area_ids) -> None:
    rows = [(area_ids[j], area_ids[i], repr(float(W[i, j])))
            for i in range(W.shape[0]) for j in np.flatnonzero(W[i])]
    write_csv(path, ("from_area", "to_area", "weight"), rows)


# ---------------------------------------------------------------------------
# generic CSV and atomic writes


def atomic_write(path, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]
    atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_csv(path):
    """(header, rows) with numeric fields converted to int or float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse(x) for x in r] for r in reader if r]
    return header, rows


def _parse(x):
    for kind in (int, float):
        try:
            return kind(x)
        except ValueError:
            pass
    return x


# ---------------------------------------------------------------------------
# posterior draws


def _int_block(arr: np.ndarray, K: int, thin: int) -> bytes:
    n, N, T = arr.shape
    head = (f"CMSNB-STATES {DRAWS_VERSION} N={N} T={T} K={K} thin={thin} draws={n} "
            f"dtype={arr.dtype.str}\n")
    return head.encode() + np.ascontiguousarray(arr).tobytes()


def _read_int_block(path):
    with open(path, "rb") as fh:
        head = fh.readline().decode(errors="replace").split()
        body = fh.read()
    if len(head) != 8 or head[0] != "CMSNB-STATES":
        raise ValueError(f"{path}: corrupt state-file header")
    if int(head[1]) != DRAWS_VERSION:
        raise ValueError(f"{path}: unsupported state-file version {head[1]}")
    try:
        f = dict(h.split("=", 1) for h in head[2:])
        N, T, n = int(f["N"]), int(f["T"]), int(f["draws"])
        dtype = np.dtype(f["dtype"])
        thin, K = int(f["thin"]), int(f["K"])
    except (ValueError, KeyError, TypeError):
        raise ValueError(f"{path}: corrupt state-file header") from None
    if len(body) != n * N * T * dtype.itemsize:
        raise ValueError(f"{path}: truncated state file")
    return np.frombuffer(body, dtype=dtype).reshape(n, N, T).copy(), K, thin


def _waic_block(acc: WaicAccumulator) -> bytes:
    N, T = acc.mean.shape
    head = f"CMSNB-WAIC {DRAWS_VERSION} N={N} T={T} n={acc.n}\n".encode()
    return head + b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                           for a in (acc.lse, acc.mean, acc.m2))


def _read_waic_block(path) -> WaicAccumulator:
    with open(path, "rb") as fh:
        head = fh.readline().decode(errors="replace").split()
        body = fh.read()
    if len(head) != 5 or head[0] != "CMSNB-WAIC" or int(head[1]) != DRAWS_VERSION:
        raise ValueError(f"{path}: corrupt WAIC header")
    f = dict(h.split("=", 1) for h in head[2:])
    N, T, n = int(f["N"]), int(f["T"]), int(f["n"])
    if len(body) != 3 * N * T * 8:
        raise ValueError(f"{path}: truncated WAIC file")
    a = np.frombuffer(body, dtype="<f8").reshape(3, N, T).copy()
    return WaicAccumulator(n, a[0], a[1], a[2])


def persist_draws(draws: PosteriorDraws, directory, K: int | None = None) -> None:
    """Write draws to ``directory``: meta.json, one params CSV, state and WAIC files per chain."""
    os.makedirs(directory, exist_ok=True)
    if K is None:
        m = draws.config.get("model", {})
        K = int(m.get("absence", True)) + int(m.get("n_endemic", 2)) + int(m.get("n_outbreak", 4))
    meta = {"format": DRAWS_FORMAT, "version": DRAWS_VERSION, "param_names": list(draws.param_names),
            "thin": draws.thin, "n_chains": draws.n_chains, "K": K, "config": draws.config,
            "acceptance": [np.asarray(a).tolist() for a in draws.acceptance],
            "has_waic": len(draws.waic) == draws.n_chains and draws.n_chains > 0}
    for c in range(draws.n_chains):
        lines = [",".join(draws.param_names)]
        lines += [",".join(repr(float(v)) for v in row) for row in draws.params[c]]
        atomic_write(os.path.join(directory, f"params_chain{c}.csv"),
                     ("\n".join(lines) + "\n").encode())
        atomic_write(os.path.join(directory, f"states_chain{c}.bin"),
                     _int_block(draws.states[c], K, draws.thin))
        atomic_write(os.path.join(directory, f"last_chain{c}.bin"),
                     _int_block(draws.last_states[c][:, :, None], K, 1))
        if meta["has_waic"]:
            atomic_write(os.path.join(directory, f"waic_chain{c}.bin"), _waic_block(draws.waic[c]))
    atomic_write(os.path.join(directory, "meta.json"),
                 (json.dumps(meta, sort_keys=True, indent=1) + "\n").encode())


def load_draws(directory) -> PosteriorDraws:
    path = os.path.join(directory, "meta.json")
    try:
        with open(path) as fh:
            meta = json.load(fh)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: corrupt metadata ({e})") from None
    if meta.get("format") != DRAWS_FORMAT:
        raise ValueError(f"{path}: not a draws directory")
    if meta.get("version") != DRAWS_VERSION:
        raise ValueError(f"{path}: unsupported draws version {meta.get('version')}")
    names = tuple(meta["param_names"])
    params, states, last, waic = [], [], [], []
    for c in range(meta["n_chains"]):
        p = os.path.join(directory, f"params_chain{c}.csv")
        with open(p) as fh:
            lines = fh.read().splitlines()
        if not lines or tuple(lines[0].split(",")) != names:
            raise ValueError(f"{p}: header does not match the metadata")
        body = lines[1:]
        arr = np.array([[float(v) for v in ln.split(",")] for ln in body]) if body else \
            np.zeros((0, len(names)))
        if arr.ndim != 2 or arr.shape[1] != len(names):
            raise ValueError(f"{p}: malformed rows")
        params.append(arr)
        s, _, _ = _read_int_block(os.path.join(directory, f"states_chain{c}.bin"))
        states.append(s)
        ls, _, _ = _read_int_block(os.path.join(directory, f"last_chain{c}.bin"))
        last.append(ls[:, :, 0])
        if meta.get("has_waic"):
            waic.append(_read_waic_block(os.path.join(directory, f"waic_chain{c}.bin")))
    return PosteriorDraws(param_names=names, params=params, states=states, last_states=last,
                          thin=meta["thin"], config=meta["config"], waic=waic,
                          acceptance=[np.array(a) for a in meta["acceptance"]])
