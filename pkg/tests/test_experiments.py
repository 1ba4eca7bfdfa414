import pytest

from oneshot import SpecParseError, SpecValidationError
from oneshot.experiments import (ExperimentKind, ExperimentSpec,
                                 parse_spec, run_experiment, serialize_spec)

MINIMAL = """
[experiment]
kind = TauSweep

[cavity]
mesh_h = 0.2857142857142857
n_sources = 2
inclusion_layout = -1,-1,0.5;1,0.5,0.5
sigma_subdivision = 1,1
rng_seed = 3

[sweep]
schemes = UsualGD
taus = 0.01
"""


class TestParseSpec:
    def test_minimal_with_defaults(self):
        spec = parse_spec(MINIMAL)
        assert spec.kind is ExperimentKind.TauSweep
        assert spec.taus == (0.01,)
        assert spec.ks == (1,)
        assert spec.alphas == (0.0,)
        assert spec.max_outer == 200
        assert spec.cavity.n_sources == 2

    def test_unknown_key_reports_line_and_name(self):
        text = MINIMAL.replace("taus = 0.01", "taau = 2")
        with pytest.raises(SpecParseError) as excinfo:
            parse_spec(text)
        message = str(excinfo.value)
        assert "taau" in message and "line" in message
        assert excinfo.value.line is not None

    def test_unknown_section(self):
        with pytest.raises(SpecParseError, match="unknown section"):
            parse_spec("[nonsense]\nx = 1\n")

    def test_entry_before_section(self):
        with pytest.raises(SpecParseError, match="before any"):
            parse_spec("kind = TauSweep\n")

    def test_bad_value_reports_line(self):
        text = MINIMAL.replace("taus = 0.01", "taus = zebra")
        with pytest.raises(SpecParseError, match="taus"):
            parse_spec(text)

    def test_unknown_kind(self):
        with pytest.raises(SpecValidationError, match="NoSuchKind"):
            parse_spec(MINIMAL.replace("TauSweep", "NoSuchKind"))

    def test_missing_required_lists(self):
        text = MINIMAL.replace("taus = 0.01", "")
        with pytest.raises(SpecValidationError, match="taus"):
            parse_spec(text)
        with pytest.raises(SpecValidationError, match="mesh_hs"):
            parse_spec(MINIMAL.replace("TauSweep", "MeshRobustness"))

    def test_validation_rules(self):
        with pytest.raises(SpecValidationError, match="positive"):
            parse_spec(MINIMAL.replace("taus = 0.01", "taus = -1.0"))
        bad_k = MINIMAL + "ks = 0\n"
        with pytest.raises(SpecValidationError, match="ks"):
            parse_spec(bad_k)

    def test_round_trip(self):
        spec = parse_spec(MINIMAL)
        again = parse_spec(serialize_spec(spec))
        assert again == spec
        # a fuller spec with every sweep list populated
        full = ExperimentSpec(
            kind=ExperimentKind.NoiseStudy, cavity=spec.cavity,
            schemes=("SemiImplicitGD", "SemiImplicitKStepOneShot"),
            taus=(0.1, 0.2), ks=(1, 3), alphas=(0.0, 1e-4),
            noise_levels=(0.01, 0.03), max_outer=17, tol_cost=1e-9,
            tol_step=1e-7, output_dir="somewhere")
        assert parse_spec(serialize_spec(full)) == full

    def test_comments_ignored(self):
        spec = parse_spec(MINIMAL.replace("taus = 0.01", "taus = 0.01  # step"))
        assert spec.taus == (0.01,)


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    text = MINIMAL.replace("schemes = UsualGD",
                           "schemes = UsualGD,KStepOneShot") \
                  .replace("taus = 0.01", "taus = 0.002,0.5") \
        + "ks = 1,2\n\n[run]\nmax_outer = 60\ntol_cost = 1e-13\n"
    spec = parse_spec(text)
    files = run_experiment(spec, output_dir=str(out))
    return out, files, spec


class TestRunExperiment:

    def test_outputs_present(self, sweep_dir):
        out, files, spec = sweep_dir
        names = {f.split("/")[-1] for f in files}
        assert "manifest.txt" in names and "summary.csv" in names
        # GD collapses the k list: 2 taus * (1 + 2) = 6 cells
        assert sum(1 for n in names if n.startswith("cell")) == 6

    def test_summary_records_divergence(self, sweep_dir):
        out, _, _ = sweep_dir
        rows = (out / "summary.csv").read_text().strip().split("\n")
        statuses = {row.split(",")[11] for row in rows[1:]}
        assert "diverged" in statuses  # tau = 0.5 is far beyond stability
        assert any(s in statuses for s in ("tol_cost", "max_outer"))

    def test_manifest_reparses(self, sweep_dir):
        out, _, spec = sweep_dir
        text = (out / "manifest.txt").read_text()
        body = "\n".join(line for line in text.split("\n")
                         if not line.startswith("#"))
        assert parse_spec(body) == spec

    def test_reproducible_byte_identical(self, tmp_path):
        spec = parse_spec(MINIMAL + "\n[run]\nmax_outer = 25\n")
        run_experiment(spec, output_dir=str(tmp_path / "a"))
        run_experiment(spec, output_dir=str(tmp_path / "b"))
        for name in ("manifest.txt", "summary.csv", "cell0000.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_noise_study_at_zero_matches_clean_run(self, tmp_path):
        noise_text = MINIMAL.replace("kind = TauSweep", "kind = NoiseStudy") \
            + "noise_levels = 0.0\n\n[run]\nmax_outer = 25\n"
        clean_text = MINIMAL + "\n[run]\nmax_outer = 25\n"
        run_experiment(parse_spec(noise_text), output_dir=str(tmp_path / "noise"))
        run_experiment(parse_spec(clean_text), output_dir=str(tmp_path / "clean"))
        assert (tmp_path / "noise" / "cell0000.csv").read_bytes() == \
            (tmp_path / "clean" / "cell0000.csv").read_bytes()

    def test_bound_report_kind(self, tmp_path):
        text = MINIMAL.replace("kind = TauSweep", "kind = BoundReport") \
                      .replace("schemes = UsualGD\n", "") \
            + "ks = 1,2\nalphas = 0.0,0.001\n"
        spec = parse_spec(text)
        run_experiment(spec, output_dir=str(tmp_path))
        rows = (tmp_path / "bounds.csv").read_text().strip().split("\n")
        assert len(rows) == 5
        assert rows[0].startswith("k,alpha")

    def test_certify_sweep_kind(self, tmp_path):
        text = MINIMAL.replace("kind = TauSweep", "kind = CertifySweep") \
                      .replace("schemes = UsualGD\n", "") \
            + "ks = 1\nalphas = 0.0\n"
        spec = parse_spec(text)
        run_experiment(spec, output_dir=str(tmp_path))
        rows = (tmp_path / "certify.csv").read_text().strip().split("\n")
        assert rows[0] == "tau,alpha,k,spectral_radius,min_dist_to_one,convergent"
        assert rows[1].endswith("true") or rows[1].endswith("false")

    def test_mesh_robustness_kind(self, tmp_path):
        text = MINIMAL.replace("kind = TauSweep", "kind = MeshRobustness") \
            + "mesh_hs = 0.2857142857142857,0.2\n" \
            + "\n[run]\nmax_outer = 10\n"
        spec = parse_spec(text)
        run_experiment(spec, output_dir=str(tmp_path))
        rows = (tmp_path / "summary.csv").read_text().strip().split("\n")
        assert len(rows) == 3  # one scheme x one tau x two meshes
        n_us = {row.split(",")[9] for row in rows[1:]}
        assert len(n_us) == 2
