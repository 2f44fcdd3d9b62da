import shlex

import numpy as np
import pytest

from spherecox.cli import EXIT_CODES, main, parse_intensity, parse_model
from spherecox.covariance import FAMILIES
from spherecox.geometry import BandWindow, uniform_on_sphere
from spherecox.io import CatalogError, ingest_catalog, parse_band, read_manifest
from spherecox.processes import GALAXY_INTENSITY, PointPattern, ThomasParams
from spherecox.summaries import k_thomas


def _write(path, text):
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def test_ingest_empty(tmp_path):
    cat = ingest_catalog(_write(tmp_path / "c.csv", "theta,phi\n"))
    assert len(cat.pattern) == 0 and cat.omitted == 0


def test_ingest_north_pole(tmp_path):
    cat = ingest_catalog(_write(tmp_path / "c.csv", "theta,phi\n0,0\n"))
    np.testing.assert_allclose(cat.pattern.points, [[0.0, 0.0, 1.0]], atol=1e-15)


def test_ingest_band_omits(tmp_path):
    rows = ["0.2,1.0", "2.9,0.5", "1.3,2.0", "1.5,3.0", "1.6,4.0"]
    path = _write(tmp_path / "c.csv", "theta,phi\n" + "\n".join(rows) + "\n")
    cat = ingest_catalog(path, parse_band("1.396,1.7456"))
    assert len(cat.pattern) == 3 and cat.omitted == 2
    assert cat.report() == "3 points read, 2 omitted"


def test_ingest_degrees(tmp_path):
    cat = ingest_catalog(_write(tmp_path / "c.csv", "# units=degrees\ntheta,phi\n90,90\n"))
    np.testing.assert_allclose(cat.pattern.points, [[0.0, 1.0, 0.0]], atol=1e-15)


@pytest.mark.parametrize(
    "text,line",
    [
        ("theta,phi\n0.1,0.2\n0.1\n", 3),
        ("theta,phi\n0.1,abc\n", 2),
        ("theta,phi\n4.0,0.1\n", 2),
        ("theta,phi\n0.1,6.3\n", 2),
        ("# note\nra,dec\n0.1,0.2\n", 2),
        ("", 1),
    ],
)
def test_ingest_errors_name_line(tmp_path, text, line):
    with pytest.raises(CatalogError, match=f"line {line}:"):
        ingest_catalog(_write(tmp_path / "c.csv", text))


def test_parse_band():
    w = parse_band("1.396,1.7456")
    assert w == BandWindow(1.396, 1.7456, complement=True)
    with pytest.raises(ValueError):
        parse_band("1.0")


@pytest.mark.parametrize("degrees", [False, True])
def test_csv_round_trip(tmp_path, degrees):
    pts = uniform_on_sphere(500, np.random.default_rng(1))
    pts = np.vstack([pts, [[0, 0, 1.0], [0, 0, -1.0], [1.0, 0, 0]]])
    PointPattern(pts).to_csv(tmp_path / "p.csv", degrees=degrees)
    back = ingest_catalog(tmp_path / "p.csv").pattern.points
    np.testing.assert_allclose(back, pts, atol=1e-12)


# ---------------------------------------------------------------------------
# option parsing
# ---------------------------------------------------------------------------


def test_parse_options():
    assert parse_intensity("galaxy") is GALAXY_INTENSITY
    assert parse_intensity("const:4.5")(np.array([[0, 0, 1.0]]))[0] == 4.5
    assert parse_model("thomas:kappa=5.64,xi=266.6") == ("thomas", ThomasParams(5.64, 266.6))
    kind, cov = parse_model("lgcp:sigma2=1.3,delta=0.87,tau=2.03")
    assert kind == "lgcp" and cov.family == "multiquadric" and cov.variance == 1.3
    assert parse_model("poisson") == ("poisson", None)
    for bad in ("strauss", "thomas:kappa=1"):
        with pytest.raises((ValueError, KeyError)):
            parse_model(bad)
    with pytest.raises(ValueError):
        parse_intensity("linear")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


def _run(*args):
    return main([str(a) for a in args])


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert _run("simulate", "--model", "thomas:kappa=5.64,xi=266.6", "--intensity", "const:2", "--seed", 7, "--out", tmp_path / name) == 0
    assert (tmp_path / "a/pattern.csv").read_bytes() == (tmp_path / "b/pattern.csv").read_bytes()
    man = read_manifest(tmp_path / "a/manifest.txt")
    assert man["seed"] == "7" and "library_version" in man and int(man["n_points"]) > 0


def test_rerun_from_manifest(tmp_path):
    out = tmp_path / "run"
    args = ["simulate", "--model", "lgcp:sigma2=0.5,delta=0.5,tau=1", "--grid-n", "500", "--window-band", "1.396,1.7456",
            "--intensity", "const:3", "--seed", "11", "--out", str(out)]
    assert main(args) == 0
    first = (out / "pattern.csv").read_bytes()
    argv = shlex.split(read_manifest(out / "manifest.txt")["argv"])
    (out / "pattern.csv").unlink()
    assert main(argv) == 0
    assert (out / "pattern.csv").read_bytes() == first


def test_fit_from_exact_k_curve(tmp_path):
    k = k_thomas(ThomasParams(5.64, 266.6), np.linspace(0, 1.396, 512))
    k.to_csv(tmp_path / "k.csv")
    assert _run("fit", "--model", "thomas", "--khat", tmp_path / "k.csv", "--interval", "long", "--out", tmp_path / "fit") == 0
    rep = read_manifest(tmp_path / "fit/fit.txt")
    assert float(rep["kappa"]) == pytest.approx(5.64, rel=1e-3)
    assert float(rep["xi"]) == pytest.approx(266.6, rel=1e-3)
    assert rep["converged"] == "true"
    assert (tmp_path / "fit/trace.csv").exists()


def test_simulate_then_fit(tmp_path):
    # single fits scatter widely, so compare the median of 21 runs with the recovery tolerance
    kappa, xi = [], []
    for seed in range(1, 22):
        sim, fit = tmp_path / f"s{seed}", tmp_path / f"f{seed}"
        assert _run("simulate", "--model", "thomas:kappa=5.64,xi=266.6", "--intensity", "const:100", "--seed", seed, "--out", sim) == 0
        assert _run("fit", "--model", "thomas", "--input", sim / "pattern.csv", "--intensity", "const:100",
                    "--interval", "short", "--out", fit) == 0
        rep = read_manifest(fit / "fit.txt")
        kappa.append(float(rep["kappa"]))
        xi.append(float(rep["xi"]))
    assert np.median(kappa) == pytest.approx(5.64, rel=0.15)
    assert np.median(xi) == pytest.approx(266.6, rel=0.15)


def test_summarize_thin_envelope(tmp_path):
    band = "1.396,1.7456"
    assert _run("simulate", "--model", "poisson", "--intensity", "galaxy", "--window-band", band, "--seed", 1, "--out", tmp_path / "s") == 0
    data = tmp_path / "s/pattern.csv"
    assert _run("thin", "--input", data, "--intensity", "galaxy", "--window-band", band, "--seed", 2, "--out", tmp_path / "t") == 0
    assert _run("summarize", "--input", data, "--window-band", band, "--r-max", 1.0, "--n-r", 50, "--out", tmp_path / "c") == 0
    rows = (tmp_path / "c/curves.csv").read_text().splitlines()
    assert rows[0] == "r,value,kind" and len(rows) == 1 + 4 * 50
    assert _run("envelope", "--input", data, "--model", "poisson", "--intensity", "galaxy", "--window-band", band,
                "--n-sims", 39, "--level", 0.1, "--r-max", 0.5, "--n-r", 20, "--n-ref", 512, "--seed", 3, "--out", tmp_path / "e") == 0
    text = read_manifest(tmp_path / "e/envelope.txt")
    assert 0 < float(text["p_lo"]) <= float(text["p_hi"]) <= 1
    assert _run("envelope", "--input", data, "--model", "poisson", "--intensity", "galaxy", "--window-band", band, "--thinnings", 5,
                "--n-sims", 19, "--r-max", 0.5, "--n-r", 20, "--n-ref", 512, "--seed", 3, "--out", tmp_path / "w") == 0
    assert len((tmp_path / "w/thinning.csv").read_text().splitlines()) == 6


def test_certify_all(tmp_path):
    assert _run("certify", "--out", tmp_path) == 0
    rows = (tmp_path / "certificates.csv").read_text().splitlines()
    assert len(rows) == 1 + len(FAMILIES)
    assert all(r.endswith(",true") for r in rows[1:])


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error=") and " message=" in err
    return err.split()[0][6:]


@pytest.mark.parametrize(
    "args,code",
    [
        (["simulate", "--model", "poisson"], "E_CONFIG"),
        (["simulate", "--model", "lgcp:sigma2=1,delta=0.5,tau=1", "--grid-n", "5", "--seed", "1"], "E_CONFIG"),
        (["simulate", "--model", "strauss", "--seed", "1"], "E_CONFIG"),
        (["thin", "--input", "missing.csv", "--seed", "1"], "E_INPUT"),
        (["fit", "--model", "poisson", "--khat", "k.csv"], "E_CONFIG"),
        (["simulate", "--model", "lgcp:sigma2=0.5,delta=0.5,tau=1", "--intensity", "const:1e305", "--grid-n", "100", "--seed", "1"], "E_NUMERIC"),
        (["bogus"], "E_CONFIG"),
    ],
)
def test_error_codes(tmp_path, capsys, args, code):
    (tmp_path / "k.csv").write_text("r,value,kind\n0.0,0.0,K\n1.396,1.0,K\n")
    if "--out" not in args and args != ["bogus"]:
        args = args + ["--out", str(tmp_path / "o")]
    args = [a.replace("k.csv", str(tmp_path / "k.csv")).replace("missing.csv", str(tmp_path / "missing.csv")) for a in args]
    assert main(args) == EXIT_CODES[code]
    assert _error(capsys) == code


def test_malformed_catalog_is_input_error(tmp_path, capsys):
    bad = _write(tmp_path / "bad.csv", "theta,phi\n0.1,x\n")
    assert main(["summarize", "--input", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CODES["E_INPUT"]
    err = capsys.readouterr().err
    assert "error=E_INPUT" in err and "line 2" in err
