"""Experiment driver: ``gdno run <config>`` and ``gdno demo <config>``.

Configs are TOML (or JSON with the same layout).  Unknown keys are
rejected.  Every experiment writes ``<out>/<name>/summary.json`` plus CSV
samples and field containers; the bundle index is ``<out>/bundle.json``.
"""

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import io, oracle
from . import paralin as pl
from . import spectral as sp
from .errors import ConfigError, GdnoError, NonConvergence
from .expansion import gj_I, gj_II
from .geometry import make_regularizing_diffeo, make_trivial_diffeo
from .solver import SolverOpts, SurfaceState, gdno, make_divfree_vorticity, zcs_rhs

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXPERIMENTS = ("flat-multiplier", "route-compare", "slopes", "paralin")

DEFAULTS = {
    "run": {"experiments": ["flat-multiplier"], "out": "gdno-out", "seed": 0},
    "grid": {"Nx": 32, "Ny": 32, "Nw": 24, "h": 1.0, "Lx": 2 * np.pi, "Ly": 2 * np.pi},
    "physics": {"g": 9.81, "h0": None},
    "surface": {
        "eta": [[1, 0, 0.05, "cos"], [0, 2, 0.025, "sin"]],
        "Phi": [[1, 0, 0.1, "sin"], [1, 1, 0.05, "cos"]],
        "eta_file": None,
        "Phi_file": None,
    },
    "vorticity": {"potential": [[2, 1, 0, -1.0, "sin"]], "file": None},
    "diffeo": {"kind": "trivial", "delta": 0.1},
    "expansion": {"J": 3},
    "slopes": {"ladder": [0.08, 0.04, 0.02]},
    "paralin": {"delta": 0.9, "eps1": 0.1, "eps2": 0.45},
    "tolerances": {
        "multiplier": 1e-10,
        "slope": 0.3,
        "paralin_slope": 0.4,
        "route": 1e-2,
        "tol_fp": 1e-10,
        "max_iter": 200,
        "damping": 1.0,
    },
    "demo": {"dt": 0.01, "steps": 10, "snapshot_every": 1},
}


# configuration -----------------------------------------------------------

def _merge(base, user, path=""):
    out = copy.deepcopy(base)
    for k, v in user.items():
        where = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be a table")
            out[k] = _merge(base[k], v, where + ".")
        else:
            out[k] = v
    return out


def _validate(cfg):
    g = cfg["grid"]
    for k in ("Nx", "Ny", "Nw"):
        if not isinstance(g[k], int) or isinstance(g[k], bool):
            raise ConfigError(f"grid.{k} must be an integer")
    if g["Nx"] < 4 or g["Ny"] < 4 or g["Nx"] % 2 or g["Ny"] % 2:
        raise ConfigError("grid.Nx and grid.Ny must be even and >= 4")
    if g["Nw"] < 3:
        raise ConfigError("grid.Nw must be >= 3")
    if not g["h"] > 0:
        raise ConfigError("grid.h must be positive")
    ex = cfg["run"]["experiments"]
    if not isinstance(ex, list) or any(e not in EXPERIMENTS for e in ex):
        raise ConfigError(f"run.experiments must be a list drawn from {EXPERIMENTS}")
    lad = cfg["slopes"]["ladder"]
    if (not isinstance(lad, list) or len(lad) < 3
            or any(not isinstance(a, (int, float)) or a <= 0 for a in lad)):
        raise ConfigError("slopes.ladder needs at least three positive amplitudes")
    if any(b >= a for a, b in zip(lad, lad[1:])):
        raise ConfigError("slopes.ladder must be strictly decreasing")
    if cfg["diffeo"]["kind"] not in ("trivial", "regularizing"):
        raise ConfigError("diffeo.kind must be 'trivial' or 'regularizing'")
    J = cfg["expansion"]["J"]
    if not isinstance(J, int) or not 1 <= J <= 6:
        raise ConfigError("expansion.J must be an integer in 1..6")
    for key in ("eta", "Phi"):
        _check_modes(cfg["surface"][key], f"surface.{key}", 4)
    _check_modes(cfg["vorticity"]["potential"], "vorticity.potential", 5)
    d = cfg["demo"]
    if not d["dt"] > 0 or not isinstance(d["steps"], int) or d["steps"] < 0:
        raise ConfigError("demo.dt must be positive and demo.steps a non-negative integer")
    if not isinstance(d["snapshot_every"], int) or d["snapshot_every"] < 1:
        raise ConfigError("demo.snapshot_every must be a positive integer")
    return cfg


def _check_modes(modes, where, n):
    if not isinstance(modes, list):
        raise ConfigError(f"{where} must be a list of modes")
    for m in modes:
        if not isinstance(m, list) or len(m) != n or m[-1] not in ("cos", "sin"):
            raise ConfigError(f"{where}: each mode is a list of {n} entries ending in 'cos'|'sin'")


def load_config(path=None, overrides=None):
    """Parse a TOML or JSON config strictly and fill defaults."""
    user = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
        try:
            user = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
        except (ValueError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"cannot parse {p.name}: {e}") from e
    cfg = _merge(DEFAULTS, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return _validate(cfg)


# field builders ----------------------------------------------------------

def _modes_field(hg, modes, amp_scale=1.0):
    u = np.zeros(hg.shape)
    for kx, ky, a, kind in modes:
        arg = kx * hg.X * 2 * np.pi / hg.Lx + ky * hg.Y * 2 * np.pi / hg.Ly
        u += a * (np.cos(arg) if kind == "cos" else np.sin(arg))
    return u * amp_scale


def _surface(cfg, hg, key):
    f = cfg["surface"][f"{key}_file"]
    if f:
        vals, g2, _, _ = io.load_field(f)
        if g2 != hg:
            raise ConfigError(f"surface.{key}_file grid {g2!r} differs from {hg!r}")
        return vals
    return _modes_field(hg, cfg["surface"][key])


class Setup:
    """Grids, surface data, vorticity and solver options from a config."""

    def __init__(self, cfg):
        g = cfg["grid"]
        self.cfg = cfg
        self.hg = sp.HGrid(g["Nx"], g["Ny"], g["Lx"], g["Ly"])
        self.vg = sp.VGrid(g["Nw"], g["h"])
        self.h = g["h"]
        self.eta = _surface(cfg, self.hg, "eta")
        self.Phi = _surface(cfg, self.hg, "Phi")
        self.Phi -= self.hg.mean(self.Phi)
        t = cfg["tolerances"]
        self.opts = SolverOpts(tol_fp=t["tol_fp"], max_iter=t["max_iter"], damping=t["damping"])

    def diffeo(self, eta):
        c = self.cfg
        if c["diffeo"]["kind"] == "regularizing":
            return make_regularizing_diffeo(eta, self.h, c["diffeo"]["delta"], sp.BumpProfile(),
                                            self.hg, self.vg, h0=c["physics"]["h0"])
        return make_trivial_diffeo(eta, self.h, self.hg, self.vg, h0=c["physics"]["h0"])

    def omega(self, d):
        c = self.cfg["vorticity"]
        if c["file"]:
            vals, g2, vg2, _ = io.load_field(c["file"])
            if g2 != self.hg or vg2 is None or vg2.Nw != self.vg.Nw:
                raise ConfigError("vorticity.file grids do not match the config")
            return vals
        if not c["potential"]:
            return None
        V = np.zeros((3, self.vg.Nw) + self.hg.shape)
        for comp, kx, ky, a, kind in c["potential"]:
            V[int(comp)] += _modes_field(self.hg, [[kx, ky, a, kind]])
        return make_divfree_vorticity(V, d).omega


# experiments -------------------------------------------------------------

def exp_flat_multiplier(S, rng):
    hg, vg = S.hg, S.vg
    zero = np.zeros(hg.shape)
    Phi = rng.standard_normal(hg.shape)
    Phi = sp.dealias(hg, Phi - hg.mean(Phi))
    d = make_trivial_diffeo(zero, S.h, hg, vg)
    sol = gdno(SurfaceState(zero, Phi), None, d, S.opts, velocity=False)
    ph = hg.fft(Phi)
    mult = hg.kabs * np.tanh(S.h * hg.kabs)
    err = np.abs(hg.fft(sol.G) - mult * ph)
    scale = max(float(np.max(np.abs(mult * ph))), 1e-300)
    rel = float(np.max(err) / scale)
    tol = S.cfg["tolerances"]["multiplier"]
    summary = {"max_relative_error": rel, "tolerance": tol, "passed": rel <= tol}
    return summary, {"Phi": Phi, "G": sol.G}


def exp_route_compare(S, rng):
    hg, vg = S.hg, S.vg
    d = S.diffeo(S.eta)
    om = S.omega(d)
    J = S.cfg["expansion"]["J"]
    sol = gdno(SurfaceState(S.eta, S.Phi), om, d, S.opts, velocity=False)
    routes = {"solver": sol.G}
    notes = []
    if d.kind == "trivial":
        G_exp = sum(gj_I(S.eta, S.Phi, S.h, J, hg))
        if om is not None:
            G_exp = G_exp + sum(gj_II(S.eta, om, d, J=min(J, 2)))
        routes["expansion"] = G_exp
    else:
        notes.append("expansion route requires the trivial map")
    fg = oracle.FDGrid(hg.Nx, hg.Ny, max(hg.Nx, 16) + 1, S.h, hg.Lx, hg.Ly)
    phi_fd = oracle.fd_solve_phi(S.Phi, d, fg)
    tr = oracle.fd_surface_traces(phi=phi_fd, Phi=S.Phi, d=d, fg=fg)
    G_fd = tr["G_I"]
    if om is not None:
        def om_fd(w):
            return np.moveaxis(np.tensordot(vg.interp_matrix(w), om, axes=([1], [1])), 0, 1)
        A_fd = oracle.fd_solve_A(om_fd, d, fg)
        G_fd = G_fd + oracle.fd_surface_traces(A=A_fd, d=d, fg=fg)["G_II"]
    routes["oracle"] = G_fd
    names = sorted(routes)
    scale = max(float(np.max(np.abs(sol.G))), 1e-300)
    table = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            table[f"{a}-{b}"] = float(np.max(np.abs(routes[a] - routes[b])) / scale)
    tol = S.cfg["tolerances"]["route"]
    summary = {"routes": names, "relative_errors": table, "tolerance": tol,
               "iterations": {"phi": sol.info["phi"]["iterations"],
                              "A": sol.info["A"]["iterations"]},
               "passed": all(v <= tol for v in table.values()), "notes": notes}
    return summary, routes


def exp_slopes(S, rng):
    hg = S.hg
    ladder = S.cfg["slopes"]["ladder"]
    J = S.cfg["expansion"]["J"]
    tol = S.cfg["tolerances"]["slope"]
    out = {"ladder": ladder, "irrotational": {}, "rotational": {}}
    errs = {j: [] for j in range(1, J + 1)}
    for a in ladder:
        eta = a * S.eta / max(np.max(np.abs(S.eta)), 1e-300)
        d = make_trivial_diffeo(eta, S.h, hg, S.vg)
        G = gdno(SurfaceState(eta, S.Phi), None, d, S.opts, velocity=False).G
        terms = gj_I(eta, S.Phi, S.h, J, hg)
        for j in range(1, J + 1):
            errs[j].append(sp.l2_norm(hg, G - sum(terms[: j + 1])))
    ok = True
    for j, e in errs.items():
        p, r2 = oracle.slope_fit(list(zip(ladder, e)))
        good = abs(p - (j + 1)) <= tol
        ok &= good
        out["irrotational"][str(j)] = {"errors": e, "slope": p, "r2": r2, "passed": good}
    d0 = make_trivial_diffeo(np.zeros(hg.shape), S.h, hg, S.vg)
    om = S.omega(d0)
    if om is not None:
        rot = {j: [] for j in (1, 2)}
        for a in ladder:
            eta = a * S.eta / max(np.max(np.abs(S.eta)), 1e-300)
            d = make_trivial_diffeo(eta, S.h, hg, S.vg)
            G = gdno(SurfaceState(eta, np.zeros(hg.shape)), om, d, S.opts, velocity=False).G
            terms = gj_II(eta, om, d, J=2)
            for j in (1, 2):
                rot[j].append(sp.l2_norm(hg, G - sum(terms[: j + 1])))
        for j, e in rot.items():
            p, r2 = oracle.slope_fit(list(zip(ladder, e)))
            good = abs(p - (j + 1)) <= S.cfg["tolerances"]["paralin_slope"]
            ok &= good
            out["rotational"][str(j)] = {"errors": e, "slope": p, "r2": r2, "passed": good}
    out["passed"] = bool(ok)
    return out, {}


def exp_paralin(S, rng):
    hg = S.hg
    c = S.cfg["paralin"]
    cut = pl.Cutoff(c["eps1"], c["eps2"])
    ladder = S.cfg["slopes"]["ladder"]
    tol = S.cfg["tolerances"]["paralin_slope"]
    zero = np.zeros(hg.shape)
    d0 = make_trivial_diffeo(zero, S.h, hg, S.vg)
    om = S.omega(d0)
    base = {}
    res = {"I": [], "II": []}
    for a in [0.0] + list(ladder):
        eta = a * S.eta / max(np.max(np.abs(S.eta)), 1e-300)
        d = make_trivial_diffeo(eta, S.h, hg, S.vg)
        sol = gdno(SurfaceState(eta, S.Phi), om, d, S.opts, velocity=False)
        rI = pl.paralinearized_gI(eta, S.Phi, sol.G_I, cut, hg).residual
        rII = None
        if om is not None:
            sf = pl.strip_localize({"A": sol.A, "om": om}, d, c["delta"])
            rII = pl.paralinearized_gII(eta, sf.fields["om"], sf.fields["A"], c["delta"],
                                        S.vg, cut, G_exact=sol.G_II, grid=hg).residual
        if a == 0.0:
            base = {"I": rI, "II": rII}
            continue
        res["I"].append(sp.l2_norm(hg, rI - base["I"]))
        if rII is not None:
            res["II"].append(sp.l2_norm(hg, rII - base["II"]))
    out = {"ladder": ladder}
    ok = True
    for k, e in res.items():
        if not e:
            continue
        p, r2 = oracle.slope_fit(list(zip(ladder, e)))
        good = abs(p - 2.0) <= tol
        ok &= good
        out[k] = {"residuals": e, "slope": p, "r2": r2, "passed": good}
    out["passed"] = bool(ok)
    return out, {}


RUNNERS = {
    "flat-multiplier": exp_flat_multiplier,
    "route-compare": exp_route_compare,
    "slopes": exp_slopes,
    "paralin": exp_paralin,
}


def run(cfg, out=None, seed=None):
    """Run the configured experiments; returns the bundle index."""
    out = Path(out if out is not None else cfg["run"]["out"])
    seed = cfg["run"]["seed"] if seed is None else seed
    S = Setup(cfg)
    bundle = {"experiments": {}, "seed": seed}
    out.mkdir(parents=True, exist_ok=True)
    for name in cfg["run"]["experiments"]:
        rng = np.random.default_rng(seed)
        try:
            summary, fields = RUNNERS[name](S, rng)
        except GdnoError as e:
            e.experiment = name
            raise
        sub = out / name
        io.write_json(sub / "summary.json", summary)
        if fields:
            io.write_csv(sub / "fields.csv", io.field_samples(S.hg, **fields))
            for k, v in fields.items():
                io.save_field(sub / k, v, S.hg, name=k)
        bundle["experiments"][name] = {"passed": summary["passed"], "dir": name}
    io.write_json(out / "bundle.json", bundle)
    return bundle


def demo_timestep(cfg, out=None):
    """Fixed-step RK4 on the surface system (demonstration only)."""
    out = Path(out if out is not None else cfg["run"]["out"]) / "demo"
    S = Setup(cfg)
    hg = S.hg
    dm = cfg["demo"]
    dt, steps, every = dm["dt"], dm["steps"], dm["snapshot_every"]
    d = S.diffeo(S.eta)
    om = S.omega(d)
    if om is None:
        om = np.zeros((3, S.vg.Nw) + hg.shape)
    y = (S.eta.copy(), S.Phi.copy(), om)

    def rhs(state):
        e, p, o = state
        dd = S.diffeo(e)
        return zcs_rhs(SurfaceState(e, p), o, dd, S.opts, g=cfg["physics"]["g"])

    def axpy(a, x, b):
        return tuple(u + a * v for u, v in zip(x, b))

    series = {k: [] for k in ("t", "eta_l2", "gradPhi_l2", "omega_l2", "eta_mean")}

    def record(t, state):
        e, p, o = state
        series["t"].append(t)
        series["eta_l2"].append(sp.l2_norm(hg, e))
        series["gradPhi_l2"].append(float(np.sqrt(sum(sp.l2_norm(hg, gi) ** 2
                                                      for gi in sp.grad(hg, p)))))
        series["omega_l2"].append(float(np.sqrt(np.sum(o**2) / o[0].size)))
        series["eta_mean"].append(float(hg.mean(e)))

    snaps = 0
    record(0.0, y)
    io.save_field(out / f"eta_{snaps:05d}", y[0], hg, name="eta", meta={"t": 0.0})
    snaps += 1
    status = "completed"
    n_done = 0
    try:
        for n in range(steps):
            k1 = rhs(y)
            k2 = rhs(axpy(dt / 2, y, k1))
            k3 = rhs(axpy(dt / 2, y, k2))
            k4 = rhs(axpy(dt, y, k3))
            y = tuple(u + dt / 6 * (a + 2 * b + 2 * c + e)
                      for u, a, b, c, e in zip(y, k1, k2, k3, k4))
            n_done = n + 1
            t = n_done * dt
            record(t, y)
            if n_done % every == 0:
                io.save_field(out / f"eta_{snaps:05d}", y[0], hg, name="eta", meta={"t": t})
                snaps += 1
    except NonConvergence as e:
        status = f"aborted at step {n_done + 1}: {e}"
    io.write_csv(out / "series.csv", series)
    summary = {"status": status, "steps": n_done, "snapshots": snaps, "dt": dt,
               "label": "demo: fixed-step RK4, no stability guarantees"}
    io.write_json(out / "summary.json", summary)
    return summary


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gdno", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("run", "demo"))
    ap.add_argument("config", nargs="?", help="TOML or JSON config (defaults if omitted)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="random seed")
    ap.add_argument("--threads", type=int, default=None, help="BLAS/FFT thread cap")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        limit = None
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            from threadpoolctl import threadpool_limits
            limit = threadpool_limits(args.threads)
        try:
            if args.command == "run":
                bundle = run(cfg, args.out, args.seed)
                res = {k: v["passed"] for k, v in bundle["experiments"].items()}
                print(json.dumps(res, sort_keys=True))
            else:
                s = demo_timestep(cfg, args.out)
                print(json.dumps(s, sort_keys=True))
                if s["status"] != "completed":
                    return 3
        finally:
            if limit is not None:
                limit.restore_original_limits()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except GdnoError as e:
        where = getattr(e, "experiment", None)
        print(f"error{f' in {where}' if where else ''}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
