"""Tests for config handling, run directories and the CLI."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

import viscoclosure.asymptotic_closure as ac
import viscoclosure.cli as cli
import viscoclosure.potentials as pot
import viscoclosure.scenarios as sc

RELAX_TOML = """
[potential]
family = "fene"

[mc]
M = 300
dt = 1e-3
T = 0.02
seed = 3
snapshots = 10
"""


def write_toml(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigLoading:
    def test_defaults_are_complete(self):
        config = sc.default_config("coupled")
        assert config.scenario == "coupled"
        assert isinstance(config.spec(), pot.FENE)
        assert config.params().D == pytest.approx(1.0 / 0.5**4)
        assert config.order() is ac.ClosureOrder.GAMMA6

    def test_toml_overrides_defaults(self, tmp_path):
        path = write_toml(
            tmp_path,
            """
[scaling]
gamma = 0.3
lambda = 2.0

[potential]
family = "quadratic"
A = [[2.0, 0.0], [0.0, 1.0]]
""",
        )
        config = sc.load_config(path)
        assert config.scaling["gamma"] == 0.3
        assert config.scaling["lambda"] == 2.0
        assert config.scaling["c"] == 1.0
        spec = config.spec()
        assert isinstance(spec, pot.Quadratic)
        assert spec.A[0, 0] == 2.0
        assert config.params().lambda_tilde == pytest.approx(2.0 * 0.3**4)

    def test_unknown_section_key_names_the_path(self, tmp_path):
        path = write_toml(tmp_path, "[scaling]\nbogus = 1.0\n")
        with pytest.raises(sc.ConfigError, match="scaling.bogus"):
            sc.load_config(path)

    def test_unknown_top_level_key(self, tmp_path):
        path = write_toml(tmp_path, "[nonsense]\nx = 1\n")
        with pytest.raises(sc.ConfigError, match="nonsense"):
            sc.load_config(path)

    def test_unknown_scenario_name(self, tmp_path):
        path = write_toml(tmp_path, '[scenario]\nname = "warp_drive"\n')
        with pytest.raises(sc.ConfigError, match="warp_drive"):
            sc.load_config(path)

    def test_malformed_toml(self, tmp_path):
        path = write_toml(tmp_path, "not = [toml\n")
        with pytest.raises(sc.ConfigError):
            sc.load_config(path)

    def test_unknown_potential_family(self):
        config = sc.default_config()
        config.potential["family"] = "morse"
        with pytest.raises(sc.ConfigError, match="morse"):
            config.spec()

    def test_unknown_closure_order(self):
        config = sc.default_config()
        config.closure["order"] = "gamma8"
        with pytest.raises(sc.ConfigError, match="gamma8"):
            config.order()

    def test_paper_scale_settings(self):
        config = sc.apply_paper_scale(sc.default_config())
        assert len(config.sweep["gamma_list"]) == 10
        assert len(config.sweep["kappa_list"]) == 10
        assert config.mc["M"] == 50000
        assert config.coupled["nx"] == 256

    def test_json_metadata_round_trip(self, tmp_path):
        config = sc.default_config("induced_vorticity")
        config.scaling["gamma"] = 0.25
        config.mc["seed"] = 11
        sc.write_run_metadata(str(tmp_path), config)
        loaded = sc.load_config(str(tmp_path / "metadata.json"))
        assert loaded.scenario == "induced_vorticity"
        assert loaded.scaling == config.scaling
        assert loaded.mc == config.mc
        assert loaded.potential == config.potential

    def test_metadata_records_derived_values(self, tmp_path):
        config = sc.default_config()
        sc.write_run_metadata(str(tmp_path), config)
        payload = json.loads((tmp_path / "metadata.json").read_text())
        params = config.params()
        assert payload["derived"]["D"] == pytest.approx(params.D)
        assert payload["derived"]["lambda_tilde"] == pytest.approx(params.lambda_tilde)
        assert payload["code_version"]


class TestCsvFormats:
    def test_grid_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = rng.normal(size=(8, 4))
        path = str(tmp_path / "grid.csv")
        sc.write_grid_csv(path, grid, 2.5, 1.25, 0.75)
        with open(path) as fh:
            header = fh.readline()
        assert header.startswith("# ")
        tokens = header[2:].split()
        assert tokens[:2] == ["8", "4"]
        assert float(tokens[2]) == 2.5
        assert float(tokens[3]) == 1.25
        assert float(tokens[4]) == 0.75
        values = np.loadtxt(path)
        np.testing.assert_array_equal(values.reshape(8, 4), grid)

    def test_series_csv_format(self, tmp_path):
        path = str(tmp_path / "series.csv")
        rows = [[0.0, 1.5], [0.25, -2.0 / 3.0]]
        sc.write_series_csv(path, "t,value", rows)
        lines = open(path).read().splitlines()
        assert lines[0] == "t,value"
        parsed = [[float(v) for v in line.split(",")] for line in lines[1:]]
        np.testing.assert_array_equal(np.asarray(parsed), np.asarray(rows))


class TestClosureStressField:
    def test_pure_rotation_is_stress_free(self):
        gradu = np.zeros((4, 4, 2, 2))
        gradu[..., 0, 1] = 1.3
        gradu[..., 1, 0] = -1.3
        params = ac.ScalingParams(gamma=0.3, c=1.2, lam=1.0, eta=0.0, rho=1.0)
        tau = sc.closure_stress_field(np.ones((4, 4)), gradu, np.diag([0.2, 0.4]), params)
        assert np.max(np.abs(tau)) == 0.0

    def test_matches_hand_evaluation(self):
        gradu = np.zeros((2, 2, 2, 2))
        gradu[..., 0, 0] = 1.0
        gradu[..., 1, 1] = -1.0
        gradu[..., 0, 1] = 0.5
        f0 = np.array([[1.0, 2.0], [0.5, 3.0]])
        M2 = np.array([[0.3, 0.1], [0.1, 0.6]])
        params = ac.ScalingParams(gamma=0.2, c=2.0, lam=1.0, eta=0.0, rho=1.0)
        tau = sc.closure_stress_field(f0, gradu, M2, params)
        s = np.array([[1.0, 0.25], [0.25, -1.0]])
        expected = (0.2**4 / 2.0) * (s @ M2)
        np.testing.assert_allclose(tau[1, 0], 0.5 * expected, rtol=1e-14)
        np.testing.assert_allclose(tau[0, 1], 2.0 * expected, rtol=1e-14)


@pytest.fixture()
def fast_flow_toml(tmp_path):
    return write_toml(
        tmp_path,
        """
[flow]
nx = 32
ny = 32
Lx = 6.283185307179586
Ly = 6.283185307179586
dt = 1e-3
T = 5e-3
snapshots = 2

[quadrature]
resolution = 64
""",
        name="flow.toml",
    )


class TestRunners:
    def test_relax_outputs_and_reproducibility(self, tmp_path):
        config = sc.load_config(write_toml(tmp_path, RELAX_TOML))
        config.output["dir"] = str(tmp_path / "a")
        run_a = sc.run_relax(config)
        series = open(os.path.join(run_a, "series.csv")).read().splitlines()
        assert series[0] == "t,tau11,tau12,tau21,tau22,energy"
        assert len(series) > 2
        first = [float(v) for v in series[1].split(",")]
        assert first[0] == 0.0
        hist_header = open(os.path.join(run_a, "final_histogram.csv")).readline()
        assert hist_header.startswith("# 64 64 ")

        # Re-running from the run's own metadata reproduces every byte.
        rerun = sc.load_config(os.path.join(run_a, "metadata.json"))
        rerun.output["dir"] = str(tmp_path / "b")
        run_b = sc.run_relax(rerun)
        for name in ("series.csv", "final_histogram.csv"):
            bytes_a = open(os.path.join(run_a, name), "rb").read()
            bytes_b = open(os.path.join(run_b, name), "rb").read()
            assert bytes_a == bytes_b

    def test_moments_runner(self, tmp_path):
        config = sc.default_config()
        config.quadrature["resolution"] = 64
        config.output["dir"] = str(tmp_path / "m")
        run_dir = sc.run_moments(config)
        lines = open(os.path.join(run_dir, "moments.csv")).read().splitlines()
        assert lines[0] == "is_laplace,m0,m1,m2,G1_11,G1_22,M2_11,M2_12,M2_22"
        assert len(lines) == 3
        quad = [float(v) for v in lines[1].split(",")]
        assert quad[1] > 0.0

    def test_stress_runner(self, tmp_path):
        config = sc.default_config()
        config.quadrature["resolution"] = 64
        config.output["dir"] = str(tmp_path / "s")
        run_dir = sc.run_stress(config)
        lines = open(os.path.join(run_dir, "stress.csv")).read().splitlines()
        assert lines[0] == "degree,tau11,tau12,tau21,tau22"
        degrees = [float(line.split(",")[0]) for line in lines[1:]]
        assert degrees == [1.0, 2.0, 3.0]

    def test_induced_vorticity_runner(self, tmp_path, fast_flow_toml):
        config = sc.load_config(fast_flow_toml)
        config.output["dir"] = str(tmp_path / "flow")
        run_dir = sc.run_induced_vorticity(config)
        ke = open(os.path.join(run_dir, "ke.csv")).read().splitlines()
        assert ke[0] == "t,value"
        assert float(ke[1].split(",")[1]) == 0.0
        energy = open(os.path.join(run_dir, "energy.csv")).read().splitlines()
        assert energy[0] == "t,kinetic,micro_free,macro_dissip,micro_dissip,residual"
        assert len(energy) == 7
        for name in ("omega_t0.csv", "omega_t1.csv", "f0_t0.csv", "f0_t1.csv", "stress.csv"):
            assert os.path.exists(os.path.join(run_dir, name))
        header = open(os.path.join(run_dir, "omega_t0.csv")).readline()
        assert header.startswith("# 32 32 ")

    def test_coupled_closure_runner(self, tmp_path):
        config = sc.default_config("coupled")
        config.coupled.update({"nx": 32, "dt": 0.01, "T": 0.03})
        config.quadrature["resolution"] = 64
        config.flow["snapshots"] = 2
        config.output["dir"] = str(tmp_path / "coupled")
        run_dir = sc.run_coupled(config)
        for name in ("omega_t0.csv", "omega_t1.csv", "density_t0.csv", "profile_y0.csv"):
            assert os.path.exists(os.path.join(run_dir, name))
        for comp in ("11", "12", "21", "22"):
            assert os.path.exists(os.path.join(run_dir, f"tau{comp}_closure.csv"))
            assert not os.path.exists(os.path.join(run_dir, f"tau{comp}_raw.csv"))
        profile = open(os.path.join(run_dir, "profile_y0.csv")).read().splitlines()
        assert profile[0] == "x,omega,density"
        assert len(profile) == 33

    def test_coupled_mc_runner(self, tmp_path):
        config = sc.default_config("coupled")
        config.coupled.update({"nx": 32, "dt": 0.01, "T": 0.02})
        config.closure["source"] = "mc"
        config.bcf["M"] = 50
        config.quadrature["resolution"] = 64
        config.flow["snapshots"] = 2
        config.output["dir"] = str(tmp_path / "coupled_mc")
        run_dir = sc.run_coupled(config)
        for comp in ("11", "12", "21", "22"):
            for kind in ("closure", "raw", "smooth"):
                assert os.path.exists(os.path.join(run_dir, f"tau{comp}_{kind}.csv"))
        energy = open(os.path.join(run_dir, "energy.csv")).read().splitlines()
        assert len(energy) == 4

    def test_coupled_rejects_bad_density_mode(self, tmp_path):
        config = sc.default_config("coupled")
        config.coupled.update({"nx": 32, "T": 0.02, "density": "sideways"})
        config.output["dir"] = str(tmp_path / "x")
        with pytest.raises(sc.ConfigError):
            sc.run_coupled(config)

    def test_density_benchmark_runner(self, tmp_path):
        config = sc.default_config("density_benchmark")
        config.sweep.update({"gamma_list": [0.2], "kappa_list": [1.0]})
        config.mc.update({"M": 500, "snapshots": 20, "dt": 1e-3})
        config.quadrature["resolution"] = 64
        config.closure["grid_n"] = 64
        config.output["dir"] = str(tmp_path / "bench")
        run_dir = sc.run_density_benchmark(config)
        table = open(os.path.join(run_dir, "stress_table.csv")).read().splitlines()
        assert table[0].startswith("gamma,kappa,taud_mc,taud_fp")
        assert len(table) == 2
        pdir = os.path.join(run_dir, "point_gamma0.2_kappa1")
        for name in (
            "density_mc.csv",
            "density_fp.csv",
            "density_gamma4.csv",
            "density_gamma6.csv",
            "marginal_q1.csv",
            "marginal_q2.csv",
            "point.json",
        ):
            assert os.path.exists(os.path.join(pdir, name))
        marg = open(os.path.join(pdir, "marginal_q1.csv")).read().splitlines()
        assert marg[0] == "q,mc,fp,gamma4,gamma6"
        assert len(marg) == 65
        err = open(os.path.join(run_dir, "err_vs_gamma.csv")).read().splitlines()
        row = [float(v) for v in err[1].split(",")]
        assert 0.0 <= row[2] < 1e-5 and 0.0 <= row[3] < 1e-5

    def test_sweep_runner(self, tmp_path):
        config = sc.default_config()
        config.sweep.update({"gamma_list": [0.2, 0.3], "kappa_list": [1.0]})
        config.quadrature["resolution"] = 64
        config.closure["grid_n"] = 64
        config.output["dir"] = str(tmp_path / "sweep")
        run_dir = sc.run_sweep(config)
        err = open(os.path.join(run_dir, "err_vs_gamma.csv")).read().splitlines()
        assert err[0] == "gamma,kappa,err_gamma4,err_gamma6"
        assert len(err) == 3
        small, large = (np.array([float(v) for v in line.split(",")]) for line in err[1:])
        assert small[2] < large[2]
        assert small[3] < large[3]


class TestCli:
    def test_success_exit_code_and_run_dir(self, tmp_path, capsys):
        path = write_toml(tmp_path, RELAX_TOML)
        out = str(tmp_path / "run")
        assert cli.main(["relax", "--config", path, "--out", out]) == 0
        assert capsys.readouterr().out.strip() == out
        assert os.path.exists(os.path.join(out, "series.csv"))

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = write_toml(tmp_path, "[scaling]\nbogus = 1\n")
        assert cli.main(["relax", "--config", path]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exit_code(self, tmp_path, capsys):
        assert cli.main(["relax", "--config", str(tmp_path / "nope.toml")]) == 2

    def test_scenario_mismatch_exit_code(self, tmp_path, capsys):
        path = write_toml(tmp_path, '[scenario]\nname = "coupled"\n')
        assert cli.main(["flow", "--config", path]) == 2
        assert "coupled" in capsys.readouterr().err

    def test_numerical_abort_exit_code(self, tmp_path, capsys):
        path = write_toml(
            tmp_path,
            """
[coupled]
nx = 32
U0 = 200.0
dt = 0.1
T = 0.1

[quadrature]
resolution = 64
""",
        )
        out = str(tmp_path / "blowup")
        assert cli.main(["coupled", "--config", path, "--out", out]) == 3
        assert "numerical abort" in capsys.readouterr().err

    def test_paper_scale_flag_reaches_metadata(self, tmp_path):
        path = write_toml(tmp_path, "[quadrature]\nresolution = 64\n")
        out = str(tmp_path / "m")
        assert cli.main(["moments", "--config", path, "--paper-scale", "--out", out]) == 0
        payload = json.loads(open(os.path.join(out, "metadata.json")).read())
        assert len(payload["sweep"]["gamma_list"]) == 10
        assert payload["mc"]["M"] == 50000

    def test_thread_cap_env_var(self):
        code = (
            "import os\n"
            "import viscoclosure\n"
            "print(os.environ.get('OMP_NUM_THREADS', 'unset'))\n"
        )
        env = {k: v for k, v in os.environ.items() if "NUM_THREADS" not in k}
        env["VISCO_THREADS"] = "2"
        proc = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, env=env
        )
        assert proc.stdout.strip() == "2"
