"""Command-line front end.

Every subcommand accepts ``--config run.json``; keys are the long option
names with dashes replaced by underscores, and flags given on the command
line win.  Errors are written to stderr as JSON ``{kind, message, context}``.

Exit codes: 0 success, 1 internal error, 2 unreadable or malformed input,
3 invalid parameters or preconditions, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings

import numpy as np

from . import amplitude, dynamical, gbdt, inverse, spectral
from .core import (
    DynamicalPotential,
    Grid,
    SampledFunction,
    dyn_to_spec,
    read_potential_csv,
    read_sampled,
    write_csv,
    write_potential_csv,
)
from .errors import DiracEchoError, ParameterError, ParseError

DEFAULTS = {
    "control": "t2exp",
    "solver": "series",
    "X": 2.0,
    "T": 2.0,
    "h": 1 / 256,
    "kmax": 40,
    "quad_order": 4,
    "order": 1,
    "L": 1.0,
    "N": None,
    "half_warn": False,
    "what": "potential",
    "n": 200,
    "L_weyl": 12.0,
    "eta_min": 0.5,
    "bound": None,
    "residual_tol": 1e-2,
}


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_potential(cfg, length):
    if cfg.get("params"):
        return gbdt.dynamical_potential(gbdt.load_params(cfg["params"]), length=length, bound=cfg.get("bound"))
    if cfg.get("potential"):
        return read_potential_csv(cfg["potential"], bound=cfg.get("bound"))
    return DynamicalPotential(lambda x: 0 * x, lambda x: 0 * x, bound=cfg.get("bound"), length=length)


def _load_control(name):
    if name in dynamical.BUILTIN_CONTROLS:
        return dynamical.BUILTIN_CONTROLS[name]()
    return dynamical.control_from_samples(read_sampled(name))


def _load_response(path):
    sf = read_sampled(path)
    return dynamical.ResponseFunction(sf, "file")


def _parse_z(spec):
    try:
        data = json.loads(spec)
        zs = [complex(float(a), float(b)) for a, b in data]
    except (ValueError, TypeError) as exc:
        raise ParseError(f"--z must be a JSON array of [re, im] pairs: {exc}")
    if not zs:
        raise ParseError("--z is empty")
    return zs


# -- commands ---------------------------------------------------------------


def cmd_forward(cfg):
    X, T, h = float(cfg["X"]), float(cfg["T"]), float(cfg["h"])
    pot = _load_potential(cfg, max(X, T))
    ctrl = _load_control(cfg["control"])
    if cfg["solver"] == "series":
        field = dynamical.neumann_solve(pot, ctrl, (X, T), h, k_max=int(cfg["kmax"]), quad_order=int(cfg["quad_order"]))
    elif cfg["solver"] == "characteristics":
        field = dynamical.characteristics_solve(pot, ctrl, (X, T), h, order=int(cfg["order"]))
    else:
        raise ParameterError("unknown solver", solver=cfg["solver"])
    if cfg.get("out"):
        field.to_csv(cfg["out"])
    _emit(field.boundary_u2().to_csv(), cfg.get("trace"))


def cmd_response(cfg):
    trace = read_sampled(cfg["input"])
    ctrl = _load_control(cfg["control"])
    r = dynamical.extract_response(trace, ctrl, residual_tol=float(cfg["residual_tol"]))
    _emit(r.to_csv(), cfg.get("out"))


def cmd_invert(cfg):
    r = _load_response(cfg["input"])
    N = cfg.get("N")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = inverse.invert_response_full(r, None if N is None else int(N), half_warn=bool(cfg["half_warn"]))
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    _emit(write_potential_csv(None, res.potential), cfg.get("out"))


def cmd_gbdt(cfg):
    params = gbdt.load_params(cfg["params"])
    what = cfg["what"]
    if what == "weyl":
        zs = np.array(_parse_z(cfg["z"]))
        phiH = gbdt.weyl(params, zs)
        phi = spectral.phi_from_herglotz(phiH)
        cols = (zs.real, zs.imag, phi.real, phi.imag, phiH.real, phiH.imag)
        _emit(write_csv(None, ("re_z", "im_z", "re_phi", "im_phi", "re_phiH", "im_phiH"), cols), cfg.get("out"))
        return
    L, n = float(cfg["L"]), int(cfg["n"])
    grid = Grid.from_interval(0.0, L, n)
    if what == "potential":
        pot = gbdt.dynamical_potential(params, length=L)
        _emit(write_potential_csv(None, pot, grid), cfg.get("out"))
    elif what == "response":
        r = SampledFunction(grid, gbdt.response(params, grid.nodes))
        _emit(r.to_csv(), cfg.get("out"))
    else:
        raise ParameterError("--what must be potential, response or weyl", what=what)


def _roundtrip_errors(params, L, N):
    grid = Grid.from_interval(0.0, 2 * L, N)
    r = dynamical.ResponseFunction(SampledFunction(grid, gbdt.response(params, grid.nodes)), "explicit")
    res = inverse.invert_response_full(r, N)
    x = res.spectral.grid.nodes
    v_ex = gbdt.potential(params, x)
    v = np.asarray(res.spectral.v.values)
    return {
        "v": float(np.max(np.abs(v - v_ex))),
        "p": float(np.max(np.abs(-v.real + v_ex.real))),
        "q": float(np.max(np.abs(v.imag - v_ex.imag))),
        "scale": float(np.max(np.abs(v_ex))),
        "min_eig": res.min_eig,
    }


def cmd_roundtrip(cfg):
    params = gbdt.load_params(cfg["params"])
    L = float(cfg["L"])
    N = int(cfg["N"] or 600)
    fine = _roundtrip_errors(params, L, N)
    coarse = _roundtrip_errors(params, L, N // 2 if (N // 2) % 2 == 0 else N // 2 + 1)
    order = None
    if fine["v"] > 0 and coarse["v"] > 0:
        order = math.log2(coarse["v"] / fine["v"])
    report = {
        "L": L,
        "N": N,
        "sup_error_v": fine["v"],
        "sup_error_p": fine["p"],
        "sup_error_q": fine["q"],
        "relative_error_v": fine["v"] / fine["scale"] if fine["scale"] > 0 else 0.0,
        "order_estimate": order,
        "positivity_min_eig": fine["min_eig"],
    }
    _emit(json.dumps(report, indent=2) + "\n", cfg.get("out"))


def cmd_weyl_check(cfg):
    pot = _load_potential(cfg, None)
    v = dyn_to_spec(pot)
    zs = _parse_z(cfg["z"])
    L, h = float(cfg["L_weyl"]), float(cfg["h"])
    rows = []
    for z in zs:
        W = spectral.weyl_estimate(v, z, L, h, eta_min=float(cfg["eta_min"]))
        rows.append((z.real, z.imag, W.phi.real, W.phi.imag, W.phi_H.real, W.phi_H.imag, W.info["richardson"]))
    cols = list(zip(*rows))
    header = ("re_z", "im_z", "re_phi", "im_phi", "re_phiH", "im_phiH", "defect")
    _emit(write_csv(None, header, cols), cfg.get("out"))


def cmd_amplitude(cfg):
    acc = amplitude.accelerant_from_response(_load_response(cfg["input"]))
    x = acc.s.grid.nodes
    s = np.asarray(acc.s.values)
    om = acc.omega_pos
    cols = (x, s.real, s.imag, om.real, om.imag)
    _emit(write_csv(None, ("x", "re_s", "im_s", "re_omega", "im_omega"), cols), cfg.get("out"))


COMMANDS = {
    "forward": cmd_forward,
    "response": cmd_response,
    "invert": cmd_invert,
    "gbdt": cmd_gbdt,
    "roundtrip": cmd_roundtrip,
    "weyl-check": cmd_weyl_check,
    "amplitude": cmd_amplitude,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirac-echo", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with default option values")
        p.add_argument("--out", help="output file (stdout if omitted)")
        return p

    p = add("forward", "simulate the boundary-controlled system")
    p.add_argument("--potential", help="potential CSV (x,p,q or x,re,im of v)")
    p.add_argument("--params", help="GBDT params JSON (alternative to --potential)")
    p.add_argument("--control", help="t2exp, t2gauss or a sampled CSV")
    p.add_argument("--solver", choices=["series", "characteristics"])
    p.add_argument("--X", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--kmax", type=int)
    p.add_argument("--quad-order", dest="quad_order", type=int)
    p.add_argument("--order", type=int, help="characteristics scheme order (1 or 2)")
    p.add_argument("--bound", type=float, help="M1 with sup ||V|| < M1")
    p.add_argument("--trace", help="boundary trace CSV (stdout if omitted)")

    p = add("response", "extract r from a boundary trace u2(0, t)")
    p.add_argument("--input", required=True)
    p.add_argument("--control")
    p.add_argument("--residual-tol", dest="residual_tol", type=float)

    p = add("invert", "recover the potential from a response CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--N", type=int)
    p.add_argument("--half-warn", dest="half_warn", action="store_true")

    p = add("gbdt", "explicit potential, response or Weyl function from a triple")
    p.add_argument("--params", required=True)
    p.add_argument("--what", choices=["potential", "response", "weyl"])
    p.add_argument("--L", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--z", help="JSON array of [re, im] pairs")

    p = add("roundtrip", "response -> inversion -> comparison report")
    p.add_argument("--params", required=True)
    p.add_argument("--L", type=float)
    p.add_argument("--N", type=int)

    p = add("weyl-check", "Weyl function estimates for a potential")
    p.add_argument("--potential")
    p.add_argument("--params")
    p.add_argument("--z", required=True)
    p.add_argument("--L", dest="L_weyl", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--eta-min", dest="eta_min", type=float)

    p = add("amplitude", "accelerant CSV from a response CSV")
    p.add_argument("--input", required=True)
    return ap


def _config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read config: {exc}", path=args.config)
        if not isinstance(doc, dict):
            raise ParseError("config must be a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in doc.items()})
    cfg.update({k: v for k, v in vars(args).items() if k not in ("config", "command")})
    for key in ("h", "residual_tol", "eta_min"):
        if cfg.get(key) is not None and not float(cfg[key]) > 0:
            raise ParameterError(f"{key} must be positive", value=cfg[key])
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg)
    except DiracEchoError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), default=str) + "\n")
        return exc.exit_code
    except Exception as exc:  # anything else is a bug, still reported structurally
        sys.stderr.write(json.dumps({"kind": "internal", "message": str(exc), "context": {"type": type(exc).__name__}}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
