import math
import re

import pytest

from affinekit.cli import main

CIR_TOML = """\
[model]
kind = "cir"
b = 0.08
beta = -0.9
sigma_sq = 0.033
r0 = 0.08
"""

HESTON_TOML = """\
[model]
kind = "heston"
k = 0.02
kappa = -2.0
sigma = 0.1
rho = 0.5
r = 0.01
x1_0 = 0.02
x2_0 = 0.0
"""


@pytest.fixture
def cir_cfg(tmp_path):
    f = tmp_path / "cir.toml"
    f.write_text(CIR_TOML)
    return str(f)


@pytest.fixture
def heston_cfg(tmp_path):
    f = tmp_path / "heston.toml"
    f.write_text(HESTON_TOML)
    return str(f)


class TestValidate:
    def test_ok_exit_zero(self, cir_cfg, capsys):
        assert main(["validate", "--config", cir_cfg]) == 0
        assert "admissible" in capsys.readouterr().out

    def test_violation_prints_error_lines(self, cir_cfg, capsys):
        rc = main(["validate", "--config", cir_cfg, "--set", "model.b=-0.1"])
        out = capsys.readouterr().out
        assert rc == 1
        assert out.startswith("error:")

    def test_missing_file_is_error(self, capsys):
        rc = main(["validate", "--config", "/nonexistent.toml"])
        assert rc == 1
        assert capsys.readouterr().out.startswith("error:")


class TestCapTable:
    def test_row_values_and_csv(self, cir_cfg, tmp_path, capsys):
        out_csv = tmp_path / "caps.csv"
        rc = main(["cap-table", "--config", cir_cfg, "--maturities", "1",
                   "--out", str(out_csv)])
        assert rc == 0
        text = out_csv.read_text()
        lines = text.split("\n")
        assert lines[0].startswith("maturity_years,strike_rate,cap_price,implied_vol")
        cells = lines[1].split(",")
        assert cells[1] == "0.0843" and cells[2] == "0.0073" and cells[3] == "0.4506"
        assert "\r" not in text

    def test_byte_stable(self, cir_cfg, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["cap-table", "--config", cir_cfg, "--maturities", "1,2", "--out", str(a)])
        main(["cap-table", "--config", cir_cfg, "--maturities", "1,2", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_empty_maturities_header_only(self, cir_cfg, tmp_path):
        out_csv = tmp_path / "caps.csv"
        assert main(["cap-table", "--config", cir_cfg, "--maturities", "",
                     "--out", str(out_csv)]) == 0
        lines = [l for l in out_csv.read_text().split("\n") if l]
        assert len(lines) == 1

    def test_degenerate_quarter_row(self, cir_cfg, tmp_path):
        out_csv = tmp_path / "caps.csv"
        assert main(["cap-table", "--config", cir_cfg, "--maturities", "0.25",
                     "--out", str(out_csv)]) == 0
        row = out_csv.read_text().split("\n")[1].split(",")
        assert row[1] == "" and row[2] == "0.0000" and row[3] == ""

    def test_rejects_non_cir(self, heston_cfg, capsys):
        assert main(["cap-table", "--config", heston_cfg]) == 1
        assert capsys.readouterr().out.startswith("error:")


class TestVolSurface:
    def test_cells(self, heston_cfg, tmp_path):
        out_csv = tmp_path / "surf.csv"
        rc = main(["vol-surface", "--config", heston_cfg, "--maturities", "0.5,2.0",
                   "--strikes", "0.8,1.0", "--out", str(out_csv)])
        assert rc == 0
        rows = {tuple(l.split(",")[:2]): l.split(",") for l in
                out_csv.read_text().strip().split("\n")[1:]}
        assert rows[("0.5", "0.8")][3] == "0.1611"
        assert rows[("2", "1")][3] == "0.1551"

    def test_empty_strikes_header_only(self, heston_cfg, tmp_path):
        out_csv = tmp_path / "surf.csv"
        assert main(["vol-surface", "--config", heston_cfg, "--strikes", "",
                     "--out", str(out_csv)]) == 0
        lines = [l for l in out_csv.read_text().split("\n") if l]
        assert len(lines) == 1


class TestExplosion:
    def test_no_explosion_for_zero(self, cir_cfg, capsys):
        assert main(["explosion", "--config", cir_cfg, "--u", "0.0"]) == 0
        assert "no explosion" in capsys.readouterr().out

    def test_discounted_matches_root(self, cir_cfg, capsys):
        assert main(["explosion", "--config", cir_cfg, "--u", "120", "--t-max", "10",
                     "--discounted"]) == 0
        out = capsys.readouterr().out
        t = float(re.search(r"t_plus\(u\) = ([0-9.]+)", out).group(1))
        lam = math.sqrt(0.81 + 0.066)
        ratio = (lam - 0.9 + 0.033 * 120) / (0.033 * 120 - 0.9 - lam)
        assert abs(t - math.log(ratio) / lam) < 1e-4

    def test_ray_scan_monotone(self, cir_cfg, capsys):
        assert main(["explosion", "--config", cir_cfg, "--u", "150", "--t-max", "20",
                     "--discounted", "--ray-scan", "4"]) == 0
        out = capsys.readouterr().out
        times = [float(m.group(1)) for m in
                 re.finditer(r"^\d\.\d{4}  ([0-9.]+)$", out, re.M)]
        assert all(a >= b - 1e-9 for a, b in zip(times, times[1:]))


class TestPricingCommands:
    def test_bond(self, cir_cfg, capsys):
        assert main(["bond", "--config", cir_cfg, "--maturity", "1"]) == 0
        out = capsys.readouterr().out
        assert "0.9205471" in out

    def test_bond_option_parity(self, cir_cfg, capsys):
        rc = main(["bond-option", "--config", cir_cfg, "--expiry", "0.25",
                   "--bond-maturity", "0.5", "--strike", "0.98", "--kind", "call",
                   "--law", "chi2"])
        assert rc == 0

    def test_heston_call(self, heston_cfg, capsys):
        assert main(["heston-call", "--config", heston_cfg, "--maturity", "0.5",
                     "--strike", "1.0"]) == 0
        out = capsys.readouterr().out
        assert "0.0527172" in out and "0.1785" in out

    def test_phipsi_with_override(self, cir_cfg, capsys):
        assert main(["phipsi", "--config", cir_cfg, "--t", "1.0", "--u", "0.5j"]) == 0
        base = capsys.readouterr().out
        assert main(["phipsi", "--config", cir_cfg, "--t", "1.0", "--u", "0.5j",
                     "--set", "model.b=0.2"]) == 0
        assert capsys.readouterr().out != base

    def test_mc_bond_close_to_analytic(self, cir_cfg, capsys):
        rc = main(["mc-price", "--config", cir_cfg, "--instrument", "bond",
                   "--maturity", "1", "--paths", "20000", "--steps", "100",
                   "--seed", "5"])
        assert rc == 0
        out = capsys.readouterr().out
        dev = float(re.search(r"([0-9.]+) standard errors", out).group(1))
        assert dev < 4.0

    def test_mc_zero_notional(self, heston_cfg, capsys):
        rc = main(["mc-price", "--config", heston_cfg, "--instrument", "heston-call",
                   "--maturity", "0.5", "--paths", "2000", "--steps", "50",
                   "--notional", "0.0"])
        assert rc == 0
        assert "mc heston-call: 0.00000000" in capsys.readouterr().out
