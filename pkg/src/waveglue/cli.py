"""Command-line front end.

Usage::

    waveglue <subcommand> [--config FILE] [--out DIR] [--override key=value ...]

Config files hold ``key = value`` lines, optionally grouped under
``[section]`` headers; sections only organise the file, all keys share one
namespace. Every subcommand writes ``summary.json`` (and, for time runs,
``series.csv``) into ``--out`` and exits with status 0 only when all of its
checks pass.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dg1d import assemble_dg1d_blocks
from .hybrid1d import assemble_hybrid1d, inverse_constant, stability_threshold, _capacity
from .hybrid2d import Hybrid2D, build_hybrid2d
from .mesh2d import read_mesh_files, structured_interface_mesh
from .nma import nma_report
from .projection import (
    build_projection_pair,
    compatibility_residual,
    verify_accuracy,
)
from .sbp import borrowing_capacity, build_sbp
from .snell import SnellSolution
from .timestepper import TimeStepError, discrete_energy, estimate_dt, integrate

log = logging.getLogger("waveglue")

SUBCOMMANDS = ("run1d", "run2d", "convergence", "nma", "verify-ops", "build-projection")
MESH_CONFIGS = (
    "every_point_structured",
    "every_point_unstructured",
    "every_third_structured",
    "every_third_unstructured",
)

DEFAULTS = {
    # 1D
    "n": "41",
    "length": "2.0",
    "initial": "auto",
    # 2D
    "n2d": "31",
    "mesh": "every_third_structured",
    "mesh_node": "",
    "mesh_ele": "",
    "perturb": "0.2",
    "b1": "1.0",
    "b2": "0.25",
    "wavenumber": "1.0",
    "levels": "31,61,121",
    # shared
    "tau": "auto",
    "tau_w": "auto",
    "tau_u": "auto",
    "T": "2.0",
    "steps": "0",
    "cfl": "0.5",
    "seed": "0",
    "drift_tol": "1e-6",
    "growth_factor": "10",
    "snapshot": "false",
    # projection
    "pair": "pair1",
    "dg_stride": "1",
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Resolved settings for one subcommand run."""

    problem: str
    values: dict = field(default_factory=dict)

    def get(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{key} = {self.get(key)!r} is not a number") from exc

    def int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{key} = {self.get(key)!r} is not an integer") from exc

    def penalty(self, key: str):
        v = self.get(key).strip().lower()
        return None if v == "auto" else self.float(key)

    def bool(self, key: str) -> bool:
        return self.get(key).strip().lower() in ("1", "true", "yes", "on")


def parse_config_text(text: str) -> dict:
    """Flatten ``key = value`` text with optional ``[section]`` headers."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"bad config: {exc}") from exc
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            if k in out and out[k] != v:
                raise ConfigError(f"key {k!r} set twice with different values")
            out[k] = v
    return out


def load_config(problem: str, path=None, overrides=()) -> ExperimentConfig:
    values = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        values.update(parse_config_text(p.read_text()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    unknown = sorted(set(values) - set(DEFAULTS) - {"problem"})
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if values.get("problem", problem) != problem:
        raise ConfigError(f"config is for {values['problem']!r}, not {problem!r}")
    values.pop("problem", None)
    cfg = ExperimentConfig(problem, values)
    if cfg.get("mesh") not in MESH_CONFIGS:
        raise ConfigError(f"mesh must be one of {MESH_CONFIGS}")
    if not cfg.float("cfl") > 0:
        raise ConfigError("cfl must be positive")
    return cfg


# ---------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in r])


def write_matrix(path: Path, A) -> None:
    """Plain-text sparse matrix: ``rows cols nnz`` then ``i j value`` (0-based)."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {float(A.data[k])!r}\n")


def read_matrix(path) -> sp.csr_matrix:
    lines = Path(path).read_text().split("\n")
    m, n, nnz = (int(v) for v in lines[0].split())
    body = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(body) != nnz:
        raise ConfigError(f"{path}: header announces {nnz} entries, found {len(body)}")
    if nnz == 0:
        return sp.csr_matrix((m, n))
    r = np.array([int(b[0]) for b in body])
    c = np.array([int(b[1]) for b in body])
    v = np.array([float(b[2]) for b in body])
    return sp.csr_matrix((v, (r, c)), shape=(m, n))


def write_grid(path: Path, X, Y, V) -> None:
    """Field snapshot as ``x y value`` lines."""
    np.savetxt(path, np.column_stack([X, Y, V]), fmt="%.17g")


# ---------------------------------------------------------------------------
# energy monitor


@dataclass
class EnergyTrace:
    """Discrete energy per step, plus the squared ``Ht``-norm of the state."""

    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    norm2: list = field(default_factory=list)
    error: list = field(default_factory=list)
    blowup_time: float | None = None

    @property
    def drift(self) -> float:
        """Max relative change of the discrete energy from step 1 on.

        Row 0 holds the semidiscrete energy of the initial data, since the
        two-level quantity needs one step of history.
        """
        E = np.array(self.energy[1:])
        if E.size == 0 or E[0] == 0:
            return 0.0 if E.size == 0 or np.all(E == 0) else float("inf")
        return float(np.abs(E - E[0]).max() / abs(E[0]))

    @property
    def growth(self) -> float:
        N = np.array(self.norm2)
        if N.size == 0 or N[0] == 0:
            return 0.0 if N.size == 0 or np.all(N == 0) else float("inf")
        return float(N.max() / N[0])


BLOWUP = 1e12


class _BlowUp(RuntimeError):
    pass


def monitored_run(Q, Ht, z0, v0, T, dt, g=None, g_t=None, g_tt=None, exact=None, Hnorm=None):
    """Integrate and record energy, state norm and (optionally) the error each step.

    The recorded energy is the quantity conserved exactly by the unforced
    two-step scheme, so drift measures round-off and forcing only. The first
    row is the initial state.
    """
    trace = EnergyTrace()
    Hn = Ht if Hnorm is None else Hnorm

    def err(t, z):
        if exact is None:
            return float("nan")
        e = z - exact(t)
        return float(np.sqrt(e @ (Hn @ e)))

    trace.t.append(0.0)
    trace.energy.append(float(v0 @ (Ht @ v0) - z0 @ (Ht @ (Q @ z0))))
    trace.norm2.append(float(z0 @ (Ht @ z0)))
    trace.error.append(err(0.0, z0))

    def cb(integ):
        trace.t.append(integ.t)
        trace.energy.append(discrete_energy(Q, integ, Ht))
        trace.norm2.append(float(integ.z @ (Ht @ integ.z)))
        trace.error.append(err(integ.t, integ.z))
        last[0] = integ
        if not trace.norm2[-1] < BLOWUP * max(trace.norm2[0], 1e-300):
            raise _BlowUp

    last = [None]
    try:
        with np.errstate(over="raise", invalid="raise"):
            integ = integrate(Q, z0, v0, T, dt, g, g_t, g_tt, callback=cb)
    except (_BlowUp, TimeStepError, FloatingPointError):
        integ = last[0]
        trace.blowup_time = integ.t if integ is not None else 0.0
        log.warning("run stopped: state norm exceeded %g times its initial value", BLOWUP)
    return integ, trace


# ---------------------------------------------------------------------------
# 1D


def _run1d(cfg: ExperimentConfig) -> dict:
    n, L = cfg.int("n"), cfg.float("length")
    h = L / (n - 1)
    tau = cfg.penalty("tau")
    blocks = assemble_dg1d_blocks(3, h, 25.0)
    allow = tau is not None and tau < stability_threshold(_capacity((4, 2)), inverse_constant(3).beta_inv)
    sys1 = assemble_hybrid1d(build_sbp((4, 2), n, h), blocks, n - 1, tau=tau, allow_unstable=allow)
    x = sys1.coordinates()
    dt, rho = estimate_dt(sys1, cfg.float("cfl"))
    steps = cfg.int("steps")
    T = steps * dt if steps > 0 else cfg.float("T")
    initial = cfg.get("initial")
    if initial == "auto":
        initial = "pulse" if steps > 0 else "cosine"
    if initial == "cosine":
        U = lambda t: np.cos(x - t)  # noqa: E731
        Ut = lambda t: np.sin(x - t)  # noqa: E731

        def bc(t, d):
            return tuple(np.real((-1j) ** d * np.exp(1j * (xx - t))) for xx in (-L, L))

        g = lambda t: sys1.forcing(*bc(t, 0))  # noqa: E731
        g_t = lambda t: sys1.forcing(*bc(t, 1))  # noqa: E731
        g_tt = lambda t: sys1.forcing(*bc(t, 2))  # noqa: E731
        exact = U
        z0, v0 = U(0.0), Ut(0.0)
    elif initial in ("pulse", "zero"):
        z0 = np.exp(-(((x + 0.5 * L) / (0.1 * L)) ** 2)) if initial == "pulse" else np.zeros_like(x)
        v0 = np.zeros_like(x)
        g = g_t = g_tt = exact = None
    else:
        raise ConfigError(f"initial must be cosine, pulse or zero for run1d, got {initial!r}")
    integ, trace = monitored_run(sys1.Q, sys1.Ht, z0, v0, T, dt, g, g_t, g_tt, exact)
    homogeneous = g is None
    checks = {"stable": trace.blowup_time is None}
    if homogeneous:
        checks["energy_drift"] = trace.drift < cfg.float("drift_tol")
        checks["no_growth"] = trace.growth < cfg.float("growth_factor")
    return {
        "dims": 1, "n": n, "h": h, "dt": integ.dt, "steps": integ.steps, "rho": rho, "T": integ.t,
        "tau": sys1.tau, "tau_fd_bc": sys1.tau_fd_bc, "tau_dg_bc": sys1.tau_dg_bc,
        "beta": sys1.beta, "beta_inv": sys1.beta_inv, "initial": initial,
        "energy_drift": trace.drift, "norm_growth": trace.growth, "blowup_time": trace.blowup_time,
        "final_error": trace.error[-1], "checks": checks, "_trace": trace,
    }


# ---------------------------------------------------------------------------
# 2D


def make_mesh(cfg: ExperimentConfig, n: int):
    if cfg.get("mesh_node"):
        return read_mesh_files(cfg.get("mesh_node"), cfg.get("mesh_ele"), 0.0)
    kind = cfg.get("mesh")
    base = kind.rsplit("_", 1)[0]
    perturb = cfg.float("perturb") if kind.endswith("unstructured") else 0.0
    return structured_interface_mesh(n, base, domain=(0.0, 10.0, -2.0, 0.0), perturb=perturb, seed=cfg.int("seed"))


def area_error(sys2: Hybrid2D, e: np.ndarray) -> float:
    """Discrete l2 error: ``h1^2`` per FD point plus the DG mass norm."""
    ef, ed = sys2.split(e)
    return float(np.sqrt(sys2.h1**2 * ef @ ef + ed @ (sys2.dg.M @ ed)))


def error_weight(sys2: Hybrid2D) -> sp.csr_matrix:
    return sp.block_diag([sp.identity(sys2.nfd) * sys2.h1**2, sys2.dg.M]).tocsr()


def build_2d(cfg: ExperimentConfig, n: int) -> Hybrid2D:
    mesh = make_mesh(cfg, n)
    return build_hybrid2d(
        n, mesh, b1=cfg.float("b1"), b2=cfg.float("b2"),
        tau_w=cfg.penalty("tau_w"), tau_u=cfg.penalty("tau_u"),
        allow_unstable=cfg.penalty("tau_w") is not None or cfg.penalty("tau_u") is not None,
    )


def snell_run(sys2: Hybrid2D, sol: SnellSolution, T: float, cfl: float, monitor: bool = False):
    """Run the refraction problem with exact initial and boundary data."""
    c2 = (sol.c * sol.wavenumber) ** 2
    U = lambda t: (lambda x, y: sol(x, y, t))  # noqa: E731
    Ut = lambda t: (lambda x, y: sol(x, y, t, dt=1))  # noqa: E731
    dt, rho = estimate_dt(sys2, cfl, tol=1e-3)
    g = lambda t: sys2.forcing(U(t))  # noqa: E731
    g_t = lambda t: sys2.forcing(Ut(t))  # noqa: E731
    g_tt = lambda t: -c2 * sys2.forcing(U(t))  # noqa: E731
    z0, v0 = sys2.sample(U(0.0)), sys2.sample(Ut(0.0))
    if monitor:
        integ, trace = monitored_run(
            sys2.Q, sys2.Ht, z0, v0, T, dt, g, g_t, g_tt,
            exact=lambda t: sys2.sample(U(t)), Hnorm=error_weight(sys2),
        )
    else:
        integ, trace = integrate(sys2.Q, z0, v0, T, dt, g, g_t, g_tt), None
    err = area_error(sys2, integ.z - sys2.sample(U(integ.t)))
    return integ, rho, err, trace


def _run2d(cfg: ExperimentConfig) -> dict:
    n = cfg.int("n2d")
    sys2 = build_2d(cfg, n)
    steps = cfg.int("steps")
    initial = cfg.get("initial")
    if initial == "auto":
        initial = "gaussian" if steps > 0 else "snell"
    cfl = cfg.float("cfl")
    out = {
        "dims": 2, "n": n, "mesh": cfg.get("mesh"), "triangles": sys2.dg.mesh.n_triangles,
        "unknowns": sys2.size, "b1": sys2.b1, "b2": sys2.b2,
        "tau_w": sys2.tau_w, "sigma_u": sys2.sigma_u, "tau_u": sys2.tau_u, "sigma_w": sys2.sigma_w,
        "tau_bc": sys2.tau_bc, "beta": sys2.beta, "C_tr": sys2.dg.C_tr,
        "tau_w_bound": 1.0 / (4.0 * sys2.beta), "tau_u_bound": 1.0 / sys2.dg.C_tr, "initial": initial,
    }
    if initial == "snell":
        sol = SnellSolution(sys2.b1, sys2.b2, cfg.float("wavenumber"))
        T = cfg.float("T")
        integ, rho, err, trace = snell_run(sys2, sol, T, cfl, monitor=True)
        out.update(dt=integ.dt, steps=integ.steps, rho=rho, T=integ.t, l2_error=err,
                   blowup_time=trace.blowup_time, checks={"stable": trace.blowup_time is None})
    elif initial in ("gaussian", "zero"):
        dt, rho = estimate_dt(sys2, cfl, tol=1e-3)
        T = steps * dt if steps > 0 else cfg.float("T")
        amp = 1.0 if initial == "gaussian" else 0.0
        f = lambda x, y: amp * np.exp(-((x - 5.0) ** 2 + (y - 2.0) ** 2))  # noqa: E731
        z0 = sys2.sample(f, lambda x, y: 0.0 * x)
        integ, trace = monitored_run(sys2.Q, sys2.Ht, z0, np.zeros_like(z0), T, dt)
        out.update(
            dt=integ.dt, steps=integ.steps, rho=rho, T=integ.t,
            energy_drift=trace.drift, norm_growth=trace.growth, blowup_time=trace.blowup_time,
            checks={
                "stable": trace.blowup_time is None,
                "energy_drift": trace.drift < cfg.float("drift_tol"),
                "no_growth": trace.growth < cfg.float("growth_factor"),
            },
        )
    else:
        raise ConfigError(f"initial must be snell, gaussian or zero for run2d, got {initial!r}")
    if cfg.bool("snapshot"):
        out["_snapshot"] = (sys2, integ.z)
    out["_trace"] = trace
    return out


def convergence_study(cfg: ExperimentConfig) -> dict:
    """Refraction problem on each level; discrete l2 errors and log2 rates."""
    levels = [int(v) for v in cfg.get("levels").split(",")]
    if len(levels) < 3:
        raise ConfigError("convergence needs at least 3 levels")
    sol = SnellSolution(cfg.float("b1"), cfg.float("b2"), cfg.float("wavenumber"))
    rows = []
    for n in levels:
        sys2 = build_2d(cfg, n)
        integ, rho, err, _ = snell_run(sys2, sol, cfg.float("T"), cfg.float("cfl"))
        rows.append({"n": n, "l2_error": err, "dt": integ.dt, "steps": integ.steps, "unknowns": sys2.size})
        log.info("n=%d error=%.4e", n, err)
    errs = np.array([r["l2_error"] for r in rows])
    rates = np.log2(errs[:-1] / errs[1:]) / np.log2((np.array(levels[1:]) - 1) / (np.array(levels[:-1]) - 1))
    for r, q in zip(rows[1:], rates):
        r["rate"] = float(q)
    return {
        "mesh": cfg.get("mesh"), "levels": levels, "table": rows, "rates": rates,
        "checks": {"converging": bool(np.all(rates > 0)), "finite": bool(np.all(np.isfinite(errs)))},
    }


# ---------------------------------------------------------------------------
# operator checks


def verify_ops(cfg: ExperimentConfig) -> dict:
    """Fast invariant suite over all modules; each entry is a pass/fail flag."""
    from .dg1d import local_mass
    from .hybrid2d import sat_truncation_survey  # noqa: F401
    from .ipdg2d import DgSpace2D, trace_constant

    checks, values = {}, {}
    for n in (16, 32):
        op = build_sbp((4, 2), n, 1.0 / (n - 1))
        x = op.grid()
        D = op.D()
        checks[f"sbp_quadratic_exact_n{n}"] = bool(np.abs(D @ x**2 - 2).max() < 1e-9)
        A = op.A.toarray()
        checks[f"sbp_A_symmetric_n{n}"] = bool(np.abs(A - A.T).max() < 1e-12 * np.abs(A).max())
    b = borrowing_capacity(build_sbp((4, 2), 32, 1.0))
    values["beta"] = b.beta
    checks["beta_value"] = bool(abs(b.beta - 0.2508560248534195) < 1e-7)
    checks["dg_mass_k3"] = bool(abs(local_mass(3, 1.0).sum() - 1.0) < 1e-14)
    h = 0.1
    s1 = assemble_hybrid1d(build_sbp((4, 2), 21, h), assemble_dg1d_blocks(3, h, 25.0), 20)
    A = (s1.Ht @ s1.Q).toarray()
    checks["hybrid1d_symmetric"] = bool(np.abs(A - A.T).max() < 1e-10 * np.abs(A).max())
    checks["hybrid1d_nsd"] = bool(np.linalg.eigvalsh(0.5 * (A + A.T)).max() < 1e-7 * np.abs(A).max())
    xs = np.linspace(0, 1, 25)
    for pair in ("pair1", "pair2"):
        P = build_projection_pair(xs, xs[::3], pair)
        r = compatibility_residual(P.H, P.P_d2f, P.M_d, P.P_f2d)
        checks[f"projection_{pair}_compatible"] = bool(r < 1e-12)
    ctr = trace_constant(DgSpace2D(1))
    checks["trace_constant_p1"] = bool(abs(ctr - 1.0 / (2 * (2 + np.sqrt(2)))) < 1e-13)
    m = structured_interface_mesh(13, "every_point", domain=(0, 1, -0.25, 0), ny=3)
    s2 = build_hybrid2d(13, m)
    A = s2.HQ.toarray()
    values["C_tr_desk"] = s2.dg.C_tr
    checks["hybrid2d_symmetric"] = bool(np.abs(A - A.T).max() < 1e-10 * np.abs(A).max())
    checks["hybrid2d_nsd"] = bool(np.linalg.eigvalsh(0.5 * (A + A.T)).max() < 1e-7 * np.abs(A).max())
    sol = SnellSolution()
    checks["snell_continuity"] = bool(abs(sol.upper(0.3, 0.0, 0.7) - sol.lower(0.3, 0.0, 0.7)) < 1e-13)
    return {"checks": checks, "values": values}


def build_projection(cfg: ExperimentConfig, out: Path) -> dict:
    n = cfg.int("n")
    stride = cfg.int("dg_stride")
    xs = np.linspace(0.0, cfg.float("length"), n)
    if (n - 1) % stride:
        raise ConfigError(f"dg_stride {stride} does not divide n - 1 = {n - 1}")
    P = build_projection_pair(xs, xs[::stride], cfg.get("pair"))
    write_matrix(out / "P_f2d.txt", P.P_f2d)
    write_matrix(out / "P_d2f.txt", P.P_d2f)
    xd = P.dg_mesh.nodes()
    edge_d = (xd < xs[0] + 9 * (xs[1] - xs[0])) | (xd > xs[-1] - 9 * (xs[1] - xs[0]))
    edge_f = (np.arange(n) < 6) | (np.arange(n) >= n - 6)
    acc_f2d = verify_accuracy(P.P_f2d, xs, xd, {"interior": ~edge_d, "edge": edge_d})
    acc_d2f = verify_accuracy(P.P_d2f, xd, xs, {"interior": ~edge_f, "edge": edge_f})
    r = compatibility_residual(P.H, P.P_d2f, P.M_d, P.P_f2d)
    good_f2d = P.acc_f2d[1] == 3
    good_d2f = P.acc_d2f[1] == 3
    checks = {
        "compatible": bool(r < 1e-12),
        "f2d_interior": acc_f2d.degree["interior"] >= 3,
        "d2f_interior": acc_d2f.degree["interior"] >= 3,
        "f2d_edge": acc_f2d.degree["edge"] == (2 if good_f2d else 1),
        "d2f_edge": acc_d2f.degree["edge"] == (2 if good_d2f else 1),
    }
    return {
        "pair": P.flavor, "n": n, "dg_stride": stride, "compatibility_residual": r,
        "acc_f2d": P.acc_f2d, "acc_d2f": P.acc_d2f,
        "exact_degree_f2d": acc_f2d.degree, "exact_degree_d2f": acc_d2f.degree, "checks": checks,
    }


# ---------------------------------------------------------------------------
# entry point


def _finish(out: Path, name: str, cfg: ExperimentConfig, result: dict) -> int:
    trace = result.pop("_trace", None)
    snap = result.pop("_snapshot", None)
    if trace is not None:
        write_csv(out / "series.csv", ["t", "energy", "norm2", "l2_error"],
                  zip(trace.t, trace.energy, trace.norm2, trace.error))
    if snap is not None:
        sys2, z = snap
        X, Y = sys2.fd_coordinates()
        w, u = sys2.split(z)
        write_grid(out / "field_fd.txt", X, Y, w)
        P = sys2.dg.node_coordinates()
        write_grid(out / "field_dg.txt", P[:, 0], P[:, 1], u)
    checks = result.get("checks", {})
    ok = all(bool(v) for v in checks.values())
    summary = {"subcommand": name, "config": dict(sorted(cfg.values.items())), "result": result, "passed": ok}
    write_json(out / "summary.json", summary)
    for k, v in checks.items():
        print(f"{'PASS' if v else 'FAIL'} {name}: {k}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="waveglue", description="Coupled SBP-FD / DG wave solvers.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value config file")
        s.add_argument("--out", default=".", help="output directory")
        s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.command, args.config, args.override)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".waveglue-write-test"
        probe.write_text("")
        probe.unlink()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run1d":
            result = _run1d(cfg)
        elif args.command == "run2d":
            result = _run2d(cfg)
        elif args.command == "convergence":
            result = convergence_study(cfg)
        elif args.command == "nma":
            tau = cfg.penalty("tau")
            rep = nma_report() if tau is None else nma_report(tau)
            result = {"report": rep, "checks": {"column_space_condition": rep["column_space_condition"],
                                                "single_null_singular_value": rep["null_count"] == 1}}
        elif args.command == "verify-ops":
            result = verify_ops(cfg)
        else:
            result = build_projection(cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return _finish(out, args.command, cfg, result)


if __name__ == "__main__":
    sys.exit(main())
