"""Two-environment expression data with single-gene knockouts.

Files on disk
-------------
Matrix files are UTF-8, tab separated, with a header line
``#genes<TAB>name1<TAB>...<TAB>nameP`` followed by one sample per line.
The metadata sidecar is JSON::

    {"n1": 262, "n2": 1479, "p": 6170,
     "gene_names": [...],
     "knockouts": [{"row": 0, "gene_name": "YAL001C"}, ...]}

``gene_names`` is optional; when absent the observational header fixes the
gene order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

OBSERVATIONAL = "observational"
INTERVENTIONAL = "interventional"


class DataFormatError(ValueError):
    """A matrix or metadata file could not be parsed."""


class DatasetValidationError(ValueError):
    """Parsed data violates a Dataset invariant."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observational (``obs``) and knockout (``intv``) samples over ``p`` genes.

    ``knockout_map[r]`` is the index of the gene knocked out in row ``r`` of
    ``intv``. Arrays are made read-only on construction.
    """

    obs: np.ndarray
    intv: np.ndarray
    knockout_map: tuple
    gene_names: tuple
    _ko_row: dict = field(init=False, repr=False)

    def __post_init__(self):
        obs = np.array(self.obs, dtype=np.float64, copy=True)
        intv = np.array(self.intv, dtype=np.float64, copy=True)
        if obs.ndim != 2:
            raise DatasetValidationError("obs must be a 2-d matrix")
        p = obs.shape[1]
        if intv.ndim != 2:
            if intv.size == 0:
                intv = intv.reshape(0, p)
            else:
                raise DatasetValidationError("intv must be a 2-d matrix")
        if intv.shape[1] != p:
            raise DatasetValidationError(
                f"obs has {p} columns but intv has {intv.shape[1]}")
        if p < 2:
            raise DatasetValidationError(f"need at least 2 genes, got {p}")
        if obs.shape[0] < 2:
            raise DatasetValidationError(
                f"need at least 2 observational samples, got {obs.shape[0]}")
        if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(intv))):
            raise DatasetValidationError("expression values must be finite")
        kmap = tuple(int(g) for g in self.knockout_map)
        if len(kmap) != intv.shape[0]:
            raise DatasetValidationError(
                f"knockout_map has {len(kmap)} entries for {intv.shape[0]} "
                "interventional rows")
        for r, g in enumerate(kmap):
            if not 0 <= g < p:
                raise DatasetValidationError(
                    f"knockout_map[{r}]={g} outside [0, {p})")
        ko_row = {}
        for r, g in enumerate(kmap):
            if g in ko_row:
                raise DatasetValidationError(
                    f"gene {g} knocked out twice (rows {ko_row[g]} and {r})")
            ko_row[g] = r
        names = tuple(str(s) for s in self.gene_names)
        if len(names) != p:
            raise DatasetValidationError(
                f"{len(names)} gene names for {p} columns")
        if len(set(names)) != p:
            raise DatasetValidationError("gene names must be distinct")
        obs.flags.writeable = False
        intv.flags.writeable = False
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "intv", intv)
        object.__setattr__(self, "knockout_map", kmap)
        object.__setattr__(self, "gene_names", names)
        object.__setattr__(self, "_ko_row", ko_row)

    @property
    def p(self) -> int:
        return self.obs.shape[1]

    @property
    def n1(self) -> int:
        return self.obs.shape[0]

    @property
    def n2(self) -> int:
        return self.intv.shape[0]

    def knockout_row(self, gene: int):
        """Interventional row knocking out ``gene``, or None."""
        return self._ko_row.get(gene)

    @property
    def knocked_out(self) -> frozenset:
        return frozenset(self._ko_row)


@dataclass(frozen=True, eq=False)
class EnvironmentView:
    design: np.ndarray
    response: np.ndarray
    env_label: str
    predictor_genes: tuple = ()

    def __post_init__(self):
        if self.design.shape[0] != self.response.shape[0]:
            raise ValueError("design rows and response length differ")

    @property
    def n(self) -> int:
        return self.response.shape[0]


def environment_views(ds: Dataset, target_gene: int, predictor_genes: Sequence[int],
                      included_intv_rows=None):
    """Split ``ds`` into an observational and an interventional regression view.

    ``included_intv_rows`` defaults to every interventional row. Entries are
    taken verbatim from the dataset.
    """
    predictors = [int(g) for g in predictor_genes]
    if int(target_gene) in predictors:
        raise ValueError(f"target gene {target_gene} cannot predict itself")
    if not 0 <= target_gene < ds.p:
        raise ValueError(f"target gene {target_gene} outside [0, {ds.p})")
    if any(not 0 <= g < ds.p for g in predictors):
        raise ValueError("predictor index out of range")
    if included_intv_rows is None:
        rows = np.arange(ds.n2)
    else:
        rows = np.asarray(sorted(set(int(r) for r in included_intv_rows)), dtype=np.intp)
        if rows.size and (rows[0] < 0 or rows[-1] >= ds.n2):
            raise ValueError(f"interventional rows must lie in [0, {ds.n2})")
    cols = np.asarray(predictors, dtype=np.intp)
    obs_view = EnvironmentView(ds.obs[:, cols], ds.obs[:, target_gene],
                               OBSERVATIONAL, tuple(predictors))
    intv_view = EnvironmentView(ds.intv[np.ix_(rows, cols)], ds.intv[rows, target_gene],
                                INTERVENTIONAL, tuple(predictors))
    return obs_view, intv_view


def count_ground_truth_pairs(ds) -> int:
    """Number of ordered pairs with knockout ground truth, ``n2 * (p - 1)``.

    Accepts a Dataset or anything exposing ``n2`` and ``p``.
    """
    return int(ds.n2) * (int(ds.p) - 1)


# ---------------------------------------------------------------------------
# File IO

def _read_matrix(path, delimiter="\t"):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").rstrip("\r")
        if delimiter == "\t" and not header.startswith("#genes"):
            raise DataFormatError(f"{path}:1: header must start with '#genes'")
        names = header.split(delimiter)
        if names and names[0].startswith("#"):
            names = names[1:]
        if not names:
            raise DataFormatError(f"{path}:1: header lists no genes")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cells = line.split(delimiter)
            if len(cells) != len(names):
                raise DataFormatError(
                    f"{path}:{lineno}: row {len(rows)} has {len(cells)} cells, "
                    f"expected {len(names)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise DataFormatError(
                    f"{path}:{lineno}: row {len(rows)}: non-numeric cell ({exc})") from None
    mat = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if not np.all(np.isfinite(mat)):
        raise DataFormatError(f"{path}: non-finite values are not supported")
    return names, mat


def write_matrix(path, gene_names, mat):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("#genes\t" + "\t".join(gene_names) + "\n")
        for row in np.asarray(mat, dtype=np.float64):
            fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def load_dataset(obs_path, intv_path, meta_path, delimiter="\t") -> Dataset:
    """Read and validate a dataset; column order follows the metadata gene names.

    ``delimiter`` other than tab accepts headers without the ``#genes`` marker
    (used by ``knockbench convert``).
    """
    obs_names, obs = _read_matrix(obs_path, delimiter)
    intv_names, intv = _read_matrix(intv_path, delimiter)
    try:
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    gene_names = list(meta.get("gene_names", obs_names))
    index = {g: i for i, g in enumerate(gene_names)}
    if len(index) != len(gene_names):
        raise DatasetValidationError(f"{meta_path}: duplicate gene names")

    def reorder(names, mat, path):
        if sorted(names) != sorted(gene_names):
            raise DatasetValidationError(
                f"{path}: header genes do not match metadata gene names")
        order = [names.index(g) for g in gene_names] if names != gene_names else None
        return mat if order is None else mat[:, order]

    obs = reorder(obs_names, obs, obs_path)
    intv = reorder(intv_names, intv, intv_path)
    for key, actual in (("n1", obs.shape[0]), ("n2", intv.shape[0]), ("p", len(gene_names))):
        if key in meta and int(meta[key]) != actual:
            raise DatasetValidationError(
                f"{meta_path}: {key}={meta[key]} but data has {actual}")
    kos = meta.get("knockouts", [])
    kmap = [None] * intv.shape[0]
    for entry in kos:
        row, name = int(entry["row"]), entry["gene_name"]
        if not 0 <= row < intv.shape[0]:
            raise DatasetValidationError(f"{meta_path}: knockout row {row} out of range")
        if name not in index:
            raise DatasetValidationError(f"{meta_path}: unknown knockout gene {name!r}")
        if kmap[row] is not None:
            raise DatasetValidationError(f"{meta_path}: row {row} listed twice")
        kmap[row] = index[name]
    missing = [r for r, g in enumerate(kmap) if g is None]
    if missing:
        raise DatasetValidationError(
            f"{meta_path}: no knockout gene given for interventional rows {missing[:5]}")
    return Dataset(obs, intv, kmap, gene_names)


def save_dataset(ds: Dataset, out_dir, prefix="") -> tuple:
    """Write ``ds`` as ``<prefix>obs.tsv``, ``<prefix>intv.tsv``, ``<prefix>meta.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = (out_dir / f"{prefix}obs.tsv", out_dir / f"{prefix}intv.tsv",
             out_dir / f"{prefix}meta.json")
    write_matrix(paths[0], ds.gene_names, ds.obs)
    write_matrix(paths[1], ds.gene_names, ds.intv)
    meta = {
        "n1": ds.n1, "n2": ds.n2, "p": ds.p,
        "gene_names": list(ds.gene_names),
        "knockouts": [{"row": r, "gene_name": ds.gene_names[g]}
                      for r, g in enumerate(ds.knockout_map)],
    }
    paths[2].write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return paths
