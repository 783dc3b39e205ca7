import csv
import json

import pytest

from gn_cff import __version__
from gn_cff.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_NONCONVERGED, EXIT_OK, main
from gn_cff.validation import CSV_COLUMNS

REF_FIBER = ["--beta2", "-21", "--gamma", "1.2"]
SMALL_GRID = ["--loss-db-km", "0.2,0.01", "--span-km", "1,10", "--n-spans", "1,10"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_report(path):
    lines = path.read_text().splitlines()
    preamble = [l for l in lines if l.startswith("#")]
    body = list(csv.reader(l for l in lines if not l.startswith("#")))
    return preamble, body[0], body[1:]


class TestEvaluate:
    def test_json_reference_point(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--json", "--loss-db-km", "0.2", "--span-km", "100",
                           *REF_FIBER)
        assert code == EXIT_OK
        doc = json.loads(out)
        est = doc["estimates_w_per_hz"]
        assert set(est) == {"HighLoss8", "SingleSpan20", "Generalized28", "Incoherent29", "Combined30"}
        assert est["HighLoss8"] == pytest.approx(1.6333725979763034e-12, rel=1e-13)
        assert est["SingleSpan20"] == pytest.approx(1.6720927290792861e-12, rel=1e-13)
        assert est["Combined30"] == max(est["Generalized28"], est["Incoherent29"])
        assert doc["combined"]["branch"] == "Generalized28"
        assert doc["validity"]["cond1_holds"] is False
        assert doc["notes"] == []
        assert "oracle" not in doc

    def test_multi_span_branch(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--json", "--loss-db-km", "0.2", "--span-km", "100",
                           "--n-spans", "10", *REF_FIBER)
        doc = json.loads(out)
        assert doc["combined"]["branch"] == "Incoherent29"
        assert doc["estimates_w_per_hz"]["Combined30"] == doc["estimates_w_per_hz"]["Incoherent29"]

    def test_lossless_omits_high_loss(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--json", "--loss-db-km", "0", "--span-km", "100",
                           *REF_FIBER)
        assert code == EXIT_OK
        doc = json.loads(out)
        assert "HighLoss8" not in doc["estimates_w_per_hz"]
        assert any("HighLoss8" in n for n in doc["notes"])

    def test_text_output(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--loss-db-km", "0", "--span-km", "10", *REF_FIBER)
        assert code == EXIT_OK
        assert "Combined30" in out and "branch" in out and "cond1_lhs" in out
        assert "note:" in out

    def test_with_oracle(self, capsys):
        code, out, _ = run(capsys, "evaluate", "--json", "--oracle", "--loss-db-km", "0.2",
                           "--span-km", "100", "--domain", "square", *REF_FIBER)
        assert code == EXIT_OK
        o = json.loads(out)["oracle"]
        assert o["domain"] == "square" and o["converged"]
        assert o["error_db"] == pytest.approx(0.1036, abs=2e-3)

    def test_oracle_budget_exit(self, capsys):
        code, _, _ = run(capsys, "evaluate", "--oracle", "--max-evals", "100", "--loss-db-km", "0.2",
                         "--span-km", "100", *REF_FIBER)
        assert code == EXIT_NONCONVERGED

    def test_missing_beta2(self, capsys):
        code, _, err = run(capsys, "evaluate", "--loss-db-km", "0.2", "--span-km", "100", "--gamma", "1.2")
        assert code == EXIT_CONFIG
        assert "beta2" in err

    def test_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "point.ini"
        cfg.write_text("[fiber]\nloss_db_per_km = 0.2\nbeta2_ps2_per_km = -21\ngamma_per_w_km = 1.2\n"
                       "[link]\nspan_km = 100\n")
        code, out, _ = run(capsys, "evaluate", "--json", "--config", str(cfg))
        assert code == EXIT_OK
        assert json.loads(out)["inputs"]["span_km"] == 100.0
        # overrides beat the file
        code, out, _ = run(capsys, "evaluate", "--json", "--config", str(cfg), "--span-km", "50")
        assert json.loads(out)["inputs"]["span_km"] == 50.0

    @pytest.mark.parametrize("argv, field", [
        (["--loss-db-km", "-1", "--span-km", "1", *REF_FIBER], "loss_db_per_km"),
        (["--loss-db-km", "0.2", "--span-km", "1", "--beta2", "0", "--gamma", "1.2"], "beta2"),
        (["--loss-db-km", "x", "--span-km", "1", *REF_FIBER], "fiber.loss_db_per_km"),
        (["--loss-db-km", "0.2", "--span-km", "1", "--n-spans", "0", *REF_FIBER], "num_spans"),
        (["--loss-db-km", "0.2", *REF_FIBER], "link.span_km"),
        (["--loss-db-km", "0.2", "--span-km", "1", "--rel-tol", "0.5", *REF_FIBER], "rel_tol"),
    ])
    def test_field_level_errors(self, capsys, argv, field):
        code, _, err = run(capsys, "evaluate", *argv)
        assert code == EXIT_CONFIG
        assert field in err

    def test_bad_config_file(self, capsys, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[fibre]\nloss_db_per_km = 0.2\n")
        code, _, err = run(capsys, "evaluate", "--config", str(cfg))
        assert code == EXIT_CONFIG and "fibre" in err
        cfg.write_text("[fiber]\nloss = 0.2\n")
        code, _, err = run(capsys, "evaluate", "--config", str(cfg))
        assert code == EXIT_CONFIG and "fiber.loss" in err
        code, _, err = run(capsys, "evaluate", "--config", str(tmp_path / "absent.ini"))
        assert code == EXIT_CONFIG

    def test_bad_flag_and_domain(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--domain", "disk"])
        assert exc.value.code == EXIT_CONFIG
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == EXIT_CONFIG


class TestSweep:
    def test_report_and_plots(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sweep", "--out", str(tmp_path), *SMALL_GRID)
        assert code == EXIT_OK
        preamble, header, rows = read_report(tmp_path / "report.csv")
        assert tuple(header) == CSV_COLUMNS
        assert ",".join(header) == ("loss_db_per_km,span_km,n_spans,gnli_cff_w_per_hz,"
                                    "gnli_oracle_w_per_hz,error_db,branch,cond1_lhs,cond2_lhs,"
                                    "exp_neg_2aL,oracle_converged,oracle_rel_tol_achieved")
        assert len(rows) == 8
        assert [r[:3] for r in rows[:2]] == [["0.2", "1.0", "1"], ["0.01", "1.0", "1"]]
        for r in rows:
            assert abs(float(r[5])) < 0.5
            assert len(r[5].split(".")[1]) == 6
            assert float(repr(float(r[3]))) == float(r[3])
            assert r[10] == "true"
        assert preamble[0] == f"# gn_cff {__version__}"
        assert any(l.startswith("# config_sha256: ") for l in preamble)
        assert any(l.startswith("# oracle: domain=lozenge rel_tol=1e-05") for l in preamble)
        plots = sorted(p.name for p in tmp_path.glob("*.dat"))
        assert plots == ["error_span10km_n1.dat", "error_span10km_n10.dat",
                         "error_span1km_n1.dat", "error_span1km_n10.dat"]
        data = [l.split() for l in (tmp_path / "error_span1km_n10.dat").read_text().splitlines()
                if not l.startswith("#")]
        assert [d[0] for d in data] == ["0.01", "0.2"]
        assert all(len(d) == 2 for d in data)

    def test_overrides_recorded_verbatim(self, capsys, tmp_path):
        argv = ["sweep", "--out", str(tmp_path), "--loss-db-km", "0.20", "--span-km", "1e0",
                "--n-spans", "3", "--gamma", "1.30", "--beta2", "-20", "--bandwidth-thz", "4",
                "--psd-w-per-thz", "0.5", "--domain", "square", "--rel-tol", "1e-6",
                "--max-evals", "100000000"]
        code, _, _ = run(capsys, *argv)
        assert code == EXIT_OK
        preamble, _, rows = read_report(tmp_path / "report.csv")
        for flag, raw in zip(argv[3::2], argv[4::2]):
            assert f"# override: {flag} {raw}" in preamble
        assert "# oracle: domain=square rel_tol=1e-06 max_evals=100000000" in preamble
        assert len(rows) == 1

    def test_byte_identical_reruns_and_workers(self, capsys, tmp_path):
        outs = []
        for i, extra in enumerate([[], [], ["--workers", "2"]]):
            d = tmp_path / f"run{i}"
            code, _, _ = run(capsys, "sweep", "--out", str(d), *SMALL_GRID, *extra)
            assert code == EXIT_OK
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        assert outs[0] == outs[1] == outs[2]

    def test_config_hash_tracks_inputs(self, capsys, tmp_path):
        hashes = []
        for span in ("1", "2"):
            d = tmp_path / span
            run(capsys, "sweep", "--out", str(d), "--loss-db-km", "0.2", "--span-km", span, "--n-spans", "1")
            pre, _, _ = read_report(d / "report.csv")
            hashes.append(next(l for l in pre if "config_sha256" in l))
        assert hashes[0] != hashes[1]

    def test_grid_from_config(self, capsys, tmp_path):
        cfg = tmp_path / "grid.ini"
        cfg.write_text("[grid]\nloss_min_db_per_km = 0.01\nloss_max_db_per_km = 0.3\nloss_points = 3\n"
                       "span_km = 1\nn_spans = 1\n[oracle]\ndomain = square\n")
        code, _, _ = run(capsys, "sweep", "--config", str(cfg), "--out", str(tmp_path / "o"))
        assert code == EXIT_OK
        _, _, rows = read_report(tmp_path / "o" / "report.csv")
        assert len(rows) == 3
        assert float(rows[0][0]) == pytest.approx(0.01) and float(rows[2][0]) == pytest.approx(0.3)

    def test_nonconvergence_exit(self, capsys, tmp_path):
        code, _, err = run(capsys, "sweep", "--out", str(tmp_path), "--loss-db-km", "0.2",
                           "--span-km", "100", "--n-spans", "1", "--max-evals", "100")
        assert code == EXIT_NONCONVERGED
        _, _, rows = read_report(tmp_path / "report.csv")
        assert rows[0][10] == "false"

    def test_invalid_grid_computes_nothing(self, capsys, tmp_path):
        out = tmp_path / "never"
        code, _, err = run(capsys, "sweep", "--out", str(out), "--span-km", "1,-1")
        assert code == EXIT_CONFIG
        assert not (out / "report.csv").exists()


class TestValidate:
    def test_pass(self, capsys, tmp_path):
        code, out, _ = run(capsys, "validate", "--out", str(tmp_path), *SMALL_GRID)
        assert code == EXIT_OK
        doc = json.loads(out)
        assert doc["passed"] and doc["robust"] and doc["exit_code"] == 0
        assert doc["n_rows"] == 8
        assert json.loads((tmp_path / "summary.json").read_text()) == doc

    def test_tight_threshold_fails(self, capsys, tmp_path):
        code, out, _ = run(capsys, "validate", "--out", str(tmp_path), *SMALL_GRID,
                           "--threshold-db", "0.0001")
        assert code == EXIT_FAIL
        doc = json.loads(out)
        assert not doc["passed"] and doc["worst"] is not None

    def test_small_budget_exit_2(self, capsys, tmp_path):
        code, out, err = run(capsys, "validate", "--out", str(tmp_path), *SMALL_GRID,
                             "--max-evals", "100")
        assert code == EXIT_NONCONVERGED
        doc = json.loads(out)
        assert len(doc["nonconverged"]) == 8
        assert "did not converge" in err

    def test_nonpositive_threshold_rejected(self, capsys, tmp_path):
        code, _, err = run(capsys, "validate", "--out", str(tmp_path), "--threshold-db", "0")
        assert code == EXIT_CONFIG and "threshold_db" in err
