"""File formats: JSON model specs, CSV tables and Matrix Market matrices."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fem import assemble_fem, build_mesh
from .latent import build_cov_model, build_generic, build_op_model
from .markov import build_markov_rational
from .matern import MaternParams, kappa_from_range, sigma_from_tau

__all__ = [
    "SpecError",
    "ModelSpec",
    "parse_spec",
    "load_spec",
    "read_csv_columns",
    "write_csv",
    "read_dataset",
    "read_mtx",
]

SPEC_SCHEMES = ("fem-cov", "fem-op", "markov", "generic")


class SpecError(ValueError):
    """A model specification violates the schema; ``field`` names the culprit."""

    def __init__(self, field_name, msg):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


def _req(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise SpecError(f"{where}.{key}" if where else key, "required field is missing")
    return d[key]


def _num(v, name, positive=True):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise SpecError(name, f"expected a number, got {v!r}") from None
    if not math.isfinite(x) or (positive and not x > 0):
        raise SpecError(name, f"expected a positive number, got {v!r}")
    return x


@dataclass
class ModelSpec:
    """Validated model specification (see :func:`parse_spec`)."""

    scheme: str
    m: int
    nu: float
    d: int = 1
    sigma: float | None = None
    kappa: float | None = None
    tau: float | None = None
    method: str | None = None
    lb: float | str | None = None
    mesh: dict = field(default_factory=dict)
    nonstationary: dict | None = None
    gen_type: str = "covariance"
    fixed: dict = field(default_factory=dict)
    base_dir: str = "."
    raw: dict = field(default_factory=dict)

    def path(self, p):
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @property
    def params(self):
        return MaternParams(sigma=self.sigma, nu=self.nu, kappa=self.kappa, d=self.d)

    def mesh_obj(self):
        if "nodes_csv" in self.mesh:
            cols = read_csv_columns(self.path(self.mesh["nodes_csv"]))
            key = "loc" if "loc" in cols else next(iter(cols))
            return build_mesh(nodes=cols[key])
        return build_mesh(self.mesh["a"], self.mesh["b"], int(self.mesh["n"]))

    def nodal_fields(self):
        ns = self.nonstationary
        out = []
        for name in ("kappa", "tau"):
            key = f"{name}_nodes_csv"
            if key not in ns:
                out.append(None)
                continue
            cols = read_csv_columns(self.path(ns[key]))
            # a column named after the field wins, otherwise the last column
            out.append(cols.get(name, cols.get("value", cols[list(cols)[-1]])))
        return out

    def build(self):
        """Construct the model object described by the spec."""
        if self.scheme == "markov":
            kw = {"method": self.method} if self.method else {}
            lb = None if self.lb in (None, "auto") else self.lb
            return build_markov_rational(self.params, m=self.m, lb=lb, **kw)
        if self.scheme == "generic":
            C = read_mtx(self.path(self.mesh["C_mtx"]))
            L = read_mtx(self.path(self.mesh["L_mtx"]))
            tau = self.tau
            if self.nonstationary:
                tau = self.nodal_fields()[1]
            return build_generic(C, L, beta=(self.nu + self.d / 2.0) / 2.0, tau=tau,
                                 scale_factor=float(self.mesh["scale_factor"]), m=self.m,
                                 type=self.gen_type, method=self.method, lb=self.lb, d=self.d)
        fem = assemble_fem(self.mesh_obj())
        builder = build_cov_model if self.scheme == "fem-cov" else build_op_model
        if self.nonstationary:
            kappa, tau = self.nodal_fields()
            return builder(fem, m=self.m, method=self.method, lb=self.lb,
                           kappa=kappa, tau=tau, nu=self.nu, d=self.d)
        return builder(fem, self.params, m=self.m, method=self.method, lb=self.lb)


def parse_spec(doc, base_dir="."):
    """Validate a spec document and return a :class:`ModelSpec`.

    Raises
    ------
    SpecError
        Naming the first offending field.
    """
    if not isinstance(doc, dict):
        raise SpecError("spec", "top level must be a JSON object")
    scheme = _req(doc, "scheme", "")
    if scheme not in SPEC_SCHEMES:
        raise SpecError("scheme", f"must be one of {SPEC_SCHEMES}, got {scheme!r}")
    params = _req(doc, "params", "")
    if not isinstance(params, dict):
        raise SpecError("params", "must be an object")
    nu = _num(_req(params, "nu", "params"), "params.nu")
    d = params.get("d", 1)
    if not isinstance(d, int) or d < 1:
        raise SpecError("params.d", f"must be a positive integer, got {d!r}")
    m = doc.get("m", 1)
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise SpecError("m", f"must be a positive integer, got {m!r}")
    rational = doc.get("rational", {}) or {}
    if not isinstance(rational, dict):
        raise SpecError("rational", "must be an object")
    method = rational.get("method")
    if method is not None and method not in ("chebfunLB", "chebfun", "brasil"):
        raise SpecError("rational.method", f"unknown method {method!r}")
    lb = rational.get("lb")
    if lb is not None and lb != "auto":
        lb = _num(lb, "rational.lb", positive=False)
        if not 0 <= lb < 1:
            raise SpecError("rational.lb", f"must lie in [0, 1), got {lb!r}")
    nonstat = doc.get("nonstationary")
    if nonstat is not None:
        for key in ("kappa_nodes_csv", "tau_nodes_csv"):
            if scheme == "generic" and key == "kappa_nodes_csv":
                continue
            _req(nonstat, key, "nonstationary")
        if scheme == "markov":
            raise SpecError("nonstationary", "not available for the markov scheme")
    has = {k: k in params for k in ("sigma", "tau", "range", "kappa")}
    spec = ModelSpec(scheme=scheme, m=m, nu=nu, d=d, method=method, lb=lb,
                     nonstationary=nonstat, base_dir=base_dir, raw=doc)
    if scheme == "generic":
        mesh = _req(doc, "mesh", "")
        for key in ("C_mtx", "L_mtx", "scale_factor"):
            _req(mesh, key, "mesh")
        _num(mesh["scale_factor"], "mesh.scale_factor")
        spec.mesh = mesh
        gen_type = doc.get("type", "covariance")
        if gen_type not in ("covariance", "operator"):
            raise SpecError("type", f"must be 'covariance' or 'operator', got {gen_type!r}")
        spec.gen_type = gen_type
        if nonstat is None:
            spec.tau = _num(_req(params, "tau", "params"), "params.tau")
    else:
        if has["sigma"] == has["tau"]:
            raise SpecError("params.sigma", "give exactly one of sigma and tau")
        if has["range"] == has["kappa"]:
            raise SpecError("params.range", "give exactly one of range and kappa")
        kappa = (_num(params["kappa"], "params.kappa") if has["kappa"]
                 else kappa_from_range(_num(params["range"], "params.range"), nu))
        if has["sigma"]:
            sigma = _num(params["sigma"], "params.sigma")
        else:
            sigma = sigma_from_tau(_num(params["tau"], "params.tau"), nu, kappa, d)
        spec.sigma, spec.kappa = sigma, kappa
        if scheme != "markov":
            mesh = _req(doc, "mesh", "")
            if not isinstance(mesh, dict):
                raise SpecError("mesh", "must be an object")
            if "nodes_csv" not in mesh:
                for key in ("a", "b", "n"):
                    _req(mesh, key, "mesh")
                a = _num(mesh["a"], "mesh.a", positive=False)
                b = _num(mesh["b"], "mesh.b", positive=False)
                if not a < b:
                    raise SpecError("mesh.b", "must exceed mesh.a")
                if not isinstance(mesh["n"], int) or mesh["n"] < 3:
                    raise SpecError("mesh.n", "must be an integer >= 3")
            spec.mesh = mesh
        elif d != 1:
            raise SpecError("params.d", "the markov scheme needs d = 1")
    fixed = doc.get("fixed", {})
    if isinstance(fixed, list):
        fixed = {k: None for k in fixed}
    if not isinstance(fixed, dict):
        raise SpecError("fixed", "must be a list of names or an object")
    spec.fixed = fixed
    return spec


def load_spec(path):
    """Read and validate a JSON spec file."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError("spec", f"invalid JSON: {exc}") from None
    return parse_spec(doc, base_dir=os.path.dirname(os.path.abspath(path)))


def read_csv_columns(path):
    """Read a header-row CSV of numbers into ``{name: ndarray}``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError(f"{path}: empty CSV")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    cols = {}
    for j, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[j]) for r in rows])
        except (ValueError, IndexError):
            raise ValueError(f"{path}: column {name!r} has a non-numeric or missing entry") from None
    return cols


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path_or_file, header, columns):
    """Write equal-length ``columns`` under ``header`` ('.' decimals, LF endings)."""
    rows = zip(*[np.asarray(c).ravel() for c in columns])
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if own:
            fh.close()


def read_dataset(path):
    """Dataset CSV: columns ``y``, ``loc``, optional ``repl``; the rest are covariates."""
    from .inference import Dataset

    cols = read_csv_columns(path)
    for key in ("y", "loc"):
        if key not in cols:
            raise SpecError(f"data.{key}", "required column is missing")
    covs = [k for k in cols if k not in ("y", "loc", "repl")]
    X = np.column_stack([cols[k] for k in covs]) if covs else None
    repl = cols["repl"].astype(int) if "repl" in cols else None
    return Dataset(cols["y"], cols["loc"], X, repl), covs


def read_mtx(path):
    """Matrix Market file as a CSC matrix."""
    return sp.csc_matrix(scipy.io.mmread(path))
