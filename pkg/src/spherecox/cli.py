"""Command-line driver: ``spherecox <subcommand> [options]``.

Every run writes its artifacts plus ``manifest.txt`` into ``--out``. On
failure a single line ``error=<CODE> message=<text>`` goes to stderr and the
exit status is nonzero.
"""

from __future__ import annotations

import argparse
import csv
import shlex
import sys
from pathlib import Path

import numpy as np

from . import covariance as cov
from .envelopes import DEFAULT_N_SIMS, ReplicateError, run_gof_pipeline, thinning_sensitivity
from .field import FactorizationError, FieldOverflowError
from .fitting import fit_lgcp, fit_thomas, parse_interval
from .geometry import FullSphere, build_grid
from .io import CatalogError, ingest_catalog, parse_band, write_manifest
from .processes import (
    GALAXY_INTENSITY,
    GALAXY_INTENSITY_LOG,
    IntensityModel,
    LgcpModel,
    LgcpParams,
    PoissonModel,
    ThomasModel,
    ThomasParams,
    independent_thinning,
)
from .summaries import default_fgj_grid, default_k_grid, estimate_fgj, estimate_k_inhom, write_curves

STOCHASTIC = {"simulate", "envelope", "thin"}

EXIT_CODES = {"E_CONFIG": 2, "E_INPUT": 3, "E_NUMERIC": 4, "E_RUNTIME": 5}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# option parsing
# ---------------------------------------------------------------------------


def parse_intensity(text):
    """``const:<lambda>``, ``galaxy`` or ``galaxy-log``."""
    text = text.strip().lower()
    if text == "galaxy":
        return GALAXY_INTENSITY
    if text == "galaxy-log":
        return GALAXY_INTENSITY_LOG
    if text.startswith("const:"):
        return IntensityModel.constant(float(text[6:]))
    raise ValueError(f"unknown intensity {text!r}")


def parse_model(text):
    """``poisson``, ``thomas:kappa=..,xi=..`` or ``lgcp:family=..,sigma2=..,<params>``.

    Returns ``(kind, params)`` with params a dict for thomas and a
    :class:`CovarianceModel` for lgcp.
    """
    kind, _, rest = text.strip().partition(":")
    kind = kind.lower()
    items = cov.parse_key_values(rest.replace(",", ";"))
    if kind == "poisson":
        return kind, None
    if kind == "thomas":
        if not items:
            return kind, None
        return kind, ThomasParams(float(items["kappa"]), float(items["xi"]))
    if kind == "lgcp":
        if not items:
            return kind, None
        items.setdefault("family", "multiquadric")
        text = ";".join(f"{k}={v}" for k, v in items.items())
        return kind, cov.CovarianceModel.from_text(text)
    raise ValueError(f"unknown model {text!r}")


def _window(args):
    return parse_band(args.window_band) if args.window_band else FullSphere()


def _rng(args):
    return np.random.default_rng(args.seed)


def _load(args):
    if not args.input:
        raise CliError("E_CONFIG", "--input is required")
    path = Path(args.input)
    if not path.exists():
        raise CliError("E_INPUT", f"input file {path} does not exist")
    cat = ingest_catalog(path, _window(args))
    print(cat.report(), file=sys.stderr)
    return cat


def build_model(kind, params, intensity, grid_n):
    if kind == "poisson":
        return PoissonModel(intensity)
    if params is None:
        raise ValueError(f"{kind} model needs parameters")
    if kind == "thomas":
        return ThomasModel(params, intensity)
    return LgcpModel(LgcpParams(intensity, params), build_grid(grid_n))


def _r_grid(args):
    return np.linspace(0.0, args.r_max, args.n_r)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args, out):
    kind, params = parse_model(args.model)
    model = build_model(kind, params, parse_intensity(args.intensity), args.grid_n)
    pattern = model.simulate(_rng(args), _window(args))
    pattern.to_csv(out / "pattern.csv")
    return {"n_points": len(pattern)}


def cmd_thin(args, out):
    cat = _load(args)
    thinned = independent_thinning(cat.pattern, parse_intensity(args.intensity), _rng(args))
    thinned.to_csv(out / "thinned.csv")
    return {"n_points": len(thinned), "omitted": cat.omitted}


def cmd_summarize(args, out):
    cat = _load(args)
    grid = _r_grid(args)
    k = estimate_k_inhom(cat.pattern, parse_intensity(args.intensity), grid)
    f, g, j = estimate_fgj(cat.pattern, grid, args.n_ref)
    with open(out / "curves.csv", "w", newline="") as fh:
        write_curves(fh, [k, f, g, j])
    return {"n_points": len(cat.pattern), "omitted": cat.omitted}


def _k_hat(args, spec):
    if args.khat:
        from .summaries import read_curve

        return read_curve(args.khat, "K")
    cat = _load(args)
    return estimate_k_inhom(cat.pattern, parse_intensity(args.intensity), default_k_grid(spec.b, args.n_r))


def cmd_fit(args, out):
    spec = parse_interval(args.interval)
    kind, _ = parse_model(args.model)
    k_hat = _k_hat(args, spec)
    if kind == "thomas":
        res = fit_thomas(k_hat, spec)
    elif kind == "lgcp":
        res = fit_lgcp(k_hat, spec)
    else:
        raise CliError("E_CONFIG", "fit supports thomas and lgcp models")
    (out / "fit.txt").write_text(f"model={kind}\ninterval={spec.a!r},{spec.b!r}\n" + res.report())
    res.write_trace(out / "trace.csv")
    if not np.isfinite(res.contrast_value):
        raise CliError("E_NUMERIC", res.message or "fit failed")
    return {"contrast": res.contrast_value, "converged": res.converged}


def cmd_envelope(args, out):
    cat = _load(args)
    intensity = parse_intensity(args.intensity)
    kind, params = parse_model(args.model)
    model = build_model(kind, params, intensity, args.grid_n)
    grid = np.linspace(0.0, args.r_max, args.n_r) if args.r_max else default_fgj_grid(args.n_r)
    rng = _rng(args)
    if args.thinnings:
        sweep = thinning_sensitivity(model, cat.pattern, intensity, args.thinnings, args.n_sims, rng, grid, args.n_ref)
        sweep.to_csv(out / "thinning.csv")
        (out / "thinning.txt").write_text(sweep.summary())
        return {"p_hi_variance": sweep.p_hi_variance}
    res = run_gof_pipeline(model, cat.pattern, intensity, args.n_sims, rng, grid, args.n_ref, args.level)
    res.to_csv(out / "envelope.csv")
    (out / "envelope.txt").write_text(res.summary())
    return {"p_lo": res.p_lo, "p_hi": res.p_hi}


def cmd_certify(args, out):
    families = list(cov.FAMILIES) if args.family == "all" else [cov.canonical_family(args.family)]
    ok = True
    with open(out / "certificates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "params", "variance", "s", "ell", "m", "verified"])
        for fam in families:
            model = cov.default_model(fam)
            cert = cov.holder_certificate(model)
            verified = cov.verify_certificate(model, cert)
            ok &= verified
            params = ";".join(f"{k}={v!r}" for k, v in model.params.items())
            w.writerow([fam, params, *(repr(float(v)) for v in (model.variance, cert.s, cert.ell, cert.m)), str(verified).lower()])
    if not ok:
        raise CliError("E_NUMERIC", "a certificate failed verification")
    return {"families": len(families)}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "envelope": cmd_envelope,
    "thin": cmd_thin,
    "certify": cmd_certify,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("E_CONFIG", message)


def build_parser():
    p = _Parser(prog="spherecox", description="Cox process tools on the sphere.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="root seed (required for stochastic commands)")
        sp.add_argument("--window-band", default=None, help="excluded band lo,hi in colatitude radians")
        sp.add_argument("--intensity", default="const:10", help="const:<lambda>, galaxy or galaxy-log")
        sp.add_argument("--input", default=None, help="catalog CSV with theta,phi header")
        return sp

    sp = common(sub.add_parser("simulate", help="simulate a point pattern"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid-n", type=int, default=4098)

    sp = common(sub.add_parser("fit", help="minimum-contrast fit"))
    sp.add_argument("--model", required=True, help="thomas or lgcp")
    sp.add_argument("--interval", default="long", help="short, long or a,b")
    sp.add_argument("--khat", default=None, help="K curve CSV (r,value,kind) instead of --input")
    sp.add_argument("--n-r", type=int, default=512)

    sp = common(sub.add_parser("summarize", help="K, F, G and J estimates"))
    sp.add_argument("--r-max", type=float, default=np.pi / 2)
    sp.add_argument("--n-r", type=int, default=512)
    sp.add_argument("--n-ref", type=int, default=2048)

    sp = common(sub.add_parser("envelope", help="global rank envelope test"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--n-sims", type=int, default=DEFAULT_N_SIMS)
    sp.add_argument("--grid-n", type=int, default=4098)
    sp.add_argument("--level", type=float, default=0.05)
    sp.add_argument("--r-max", type=float, default=None)
    sp.add_argument("--n-r", type=int, default=512)
    sp.add_argument("--n-ref", type=int, default=2048)
    sp.add_argument("--thinnings", type=int, default=0, help="repeat the data thinning this many times")

    common(sub.add_parser("thin", help="independent thinning to homogeneity"))

    sp = sub.add_parser("certify", help="Hoelder certificates for the covariance catalog")
    sp.add_argument("--out", required=True)
    sp.add_argument("--family", default="all")
    sp.add_argument("--seed", type=int, default=None)
    return p


def run(argv):
    args = build_parser().parse_args(argv)
    if args.subcommand in STOCHASTIC and args.seed is None:
        raise CliError("E_CONFIG", f"{args.subcommand} needs --seed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra = COMMANDS[args.subcommand](args, out)
    config = {k: v for k, v in vars(args).items() if v is not None}
    config["argv"] = shlex.join(argv)
    config.update(extra)
    write_manifest(out / "manifest.txt", config)
    return 0


def _code_for(exc):
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, (CatalogError, FileNotFoundError)):
        return "E_INPUT"
    if isinstance(exc, (FieldOverflowError, FactorizationError, FloatingPointError)):
        return "E_NUMERIC"
    if isinstance(exc, ReplicateError):
        return "E_RUNTIME"
    if isinstance(exc, (ValueError, KeyError)):
        return "E_CONFIG"
    return "E_RUNTIME"


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        code = _code_for(exc)
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error={code} message={msg}", file=sys.stderr)
        return EXIT_CODES[code]


if __name__ == "__main__":
    sys.exit(main())
