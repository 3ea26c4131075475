import csv
import hashlib
import json

import pytest

from udep.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, build_parser, main
from udep.config import config_to_text, parse_config
from udep.errors import ConfigError


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config("experiment = rate_theorem1\n")
        assert cfg.n_max == 16384
        assert cfg.replicates == 100
        assert cfg.kernel == "cvm"
        assert cfg.model == "iid_uniform"
        assert cfg.marginal == "uniform01"
        assert cfg.n_min == 16

    def test_experiment_dependent_kernel(self):
        assert parse_config("experiment = lil_theorem2").kernel == "gini"
        assert parse_config("experiment = hl_bahadur").kernel == "hl"

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a run\n\nexperiment = spectrum  # inline\ngrid = 64\n")
        assert cfg.grid == 64

    def test_power_notation(self):
        cfg = parse_config("experiment = rate_theorem1\nn_max = 2^12\nreplicates = 2^3\n")
        assert cfg.n_max == 4096 and cfg.replicates == 8

    def test_hex_seed(self):
        assert parse_config("experiment = spectrum\nbase_seed = 0xff").base_seed == 255

    def test_zero_replicates_rejected(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment = rate_theorem1\nreplicates = 0\n")
        assert info.value.line == 2
        assert "line 2" in str(info.value)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment = rate_theorem1\n\nkernal = gini\n")
        assert "kernal" in str(info.value)
        assert info.value.line == 3

    def test_duplicate_key(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment = spectrum\ngrid = 8\ngrid = 16\n")
        assert info.value.line == 3
        assert "line 2" in str(info.value)

    def test_missing_experiment(self):
        with pytest.raises(ConfigError):
            parse_config("kernel = gini\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment = spectrum\ngrid 16\n")
        assert info.value.line == 2

    @pytest.mark.parametrize("text,line", [
        ("experiment = ar\n", 1),
        ("experiment = rate_theorem1\nmodel = ar1\nphi = 1.0\n", 3),
        ("experiment = rate_theorem1\nmodel = iid_uniform\nmarginal = normal\n", 3),
        ("experiment = rate_theorem1\nmodel = iid_normal\n", 2),
        ("experiment = moment_scan\nreplicates = 29\n", 2),
        ("experiment = covariance_decay\nreplicates = 99\n", 2),
        ("experiment = variance_ratio\nreplicates = 999\n", 2),
        ("experiment = rate_theorem1\nn_max = 8\n", 2),
        ("experiment = rate_theorem1\nn_max = 64\nn_min = 128\n", 3),
        ("experiment = spectrum\ngrid = 1\n", 2),
        ("experiment = lil_theorem2\nsigma2 = 0\n", 2),
        ("experiment = spectrum\nbase_seed = -1\n", 2),
    ])
    def test_invalid(self, text, line):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert info.value.line == line

    @pytest.mark.parametrize("text", [
        "experiment = rate_theorem1\nmodel = ar1\nphi = -0.25\nbase_seed = 0xdeadbeef\n",
        "experiment = covariance_decay\nmodel = ma\nma_weights = 1, 0.5\nm_grid = 1,3\n",
        "experiment = lil_theorem2\nsigma2 = 0.1\nbandwidth = 0\n",
        "experiment = spectrum\nmodel = iid_normal\n",
    ])
    def test_canonical_text_round_trip(self, text):
        cfg = parse_config(text)
        again = parse_config(config_to_text(cfg))
        assert again == cfg
        assert config_to_text(again) == config_to_text(cfg)


class TestHelp:
    def test_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--help"])
        assert info.value.code == 0
        out = capsys.readouterr().out
        assert "replicates" in out and "[100]" in out
        assert "n_max" in out and "[2^14]" in out
        assert "UDEP_THREADS" in out

    def test_shortcut_flag_help(self, capsys):
        with pytest.raises(SystemExit):
            main(["rate", "--help"])
        assert "default: 100" in capsys.readouterr().out


class TestExitCodes:
    def test_bad_flag_is_config_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["rate", "--bogus"])
        assert info.value.code == EXIT_CONFIG

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = _write(tmp_path, "experiment = rate_theorem1\nkernal = gini\n")
        assert main(["run", str(cfg)]) == EXIT_CONFIG
        assert "kernal" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG

    def test_bad_set(self, tmp_path):
        assert main(["rate", "--set", "grid"]) == EXIT_CONFIG
        assert main(["rate", "--set", "experiment=spectrum"]) == EXIT_CONFIG

    def test_unwritable_output_is_runtime_error(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code = main(["spectrum", "--set", "grid=8", "--out", str(blocker / "sub")])
        assert code == EXIT_RUNTIME
        assert "runtime error" in capsys.readouterr().err

    def test_bad_thread_env_is_runtime_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("UDEP_THREADS", "many")
        assert main(["spectrum", "--set", "grid=8", "--out", str(tmp_path)]) == EXIT_RUNTIME

    def test_zero_denominator_flag_still_succeeds(self, tmp_path, capsys):
        out = tmp_path / "ratio"
        code = main(["ratio", "--kernel", "cvm", "--n-max", "16", "--reps", "1000",
                     "--out", str(out)])
        assert code == EXIT_OK
        assert "flag: zero denominator" in capsys.readouterr().out
        manifest = json.loads((out / "manifest.json").read_text())
        assert any("zero denominator" in f for f in manifest["flags"])


class TestRuns:
    def test_rate_rows(self, tmp_path):
        out = tmp_path / "rate"
        assert main(["rate", "--n-max", "2^10", "--reps", "10", "--out", str(out)]) == EXIT_OK
        rows = _rows(out / "trajectories.csv")
        assert rows[0] == ["replicate", "seed", "n", "value"]
        # dyadic checkpoints 16, 32, ..., 1024 for 10 replicates
        assert len(rows) - 1 == 70
        assert sorted({int(r[2]) for r in rows[1:]}) == [2**k for k in range(4, 11)]
        summary = _rows(out / "summary.csv")
        assert summary[0] == ["n", "count", "mean", "median", "q25", "q75", "min", "max"]
        assert len(summary) == 8 and all(r[1] == "10" for r in summary[1:])

    def test_spectrum_lambda1(self, tmp_path):
        out = tmp_path / "spec"
        assert main(["spectrum", "--kernel", "cvm", "--out", str(out)]) == EXIT_OK
        first = _rows(out / "summary.csv")[1]
        assert first[0] == "1"
        assert float(first[3]) == pytest.approx(0.10132, abs=1e-3)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["results"]["lambda2"] == pytest.approx(0.02533, abs=1e-3)

    def test_doubling_labelled_unverified(self, tmp_path):
        out = tmp_path / "d"
        assert main(["rate", "--model", "doubling", "--n-max", "64", "--reps", "2",
                     "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["dependence_conditions"].startswith("envelope unverified")

    def test_run_subcommand_with_out_override(self, tmp_path):
        cfg = _write(tmp_path, "experiment = spectrum\ngrid = 32\nout = elsewhere\n")
        out = tmp_path / "here"
        assert main(["run", str(cfg), "--out", str(out)]) == EXIT_OK
        written = parse_config((out / "config.txt").read_text())
        assert written.out == str(out) and written.grid == 32

    def test_manifest(self, tmp_path):
        out = tmp_path / "m"
        assert main(["rate", "--n-max", "64", "--reps", "3", "--seed", "7",
                     "--out", str(out)]) == EXIT_OK
        manifest = json.loads((out / "manifest.json").read_text())
        assert "Philox" in manifest["generator"]
        assert manifest["config"]["base_seed"] == 7
        assert manifest["model_id"] == "iid(uniform01)"
        assert manifest["dependence_conditions"] == "exact"
        for name, digest in manifest["files"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
        seeds = {int(r[1]) for r in _rows(out / "trajectories.csv")[1:]}
        assert 7 in seeds and len(seeds) == 3

    @pytest.mark.parametrize("args", [
        ["rate", "--n-max", "2^9", "--reps", "12"],
        ["lil", "--n-max", "2^11", "--reps", "6", "--set", "n_min=64"],
        ["hl", "--n-max", "2^8", "--reps", "5"],
        ["moments", "--n-max", "2^8", "--reps", "30", "--model", "ma"],
        ["cov", "--reps", "100", "--model", "ar1", "--set", "m_grid=1,2"],
        ["dyadic", "--n-max", "2^9", "--reps", "4", "--model", "doubling"],
    ], ids=lambda a: a[0])
    def test_byte_identical_across_threads(self, tmp_path, monkeypatch, args):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        assert main(args + ["--threads", "1", "--out", str(a)]) == EXIT_OK
        assert main(args + ["--threads", "4", "--out", str(b)]) == EXIT_OK
        monkeypatch.setenv("UDEP_THREADS", "3")
        assert main(args + ["--threads", "1", "--out", str(c)]) == EXIT_OK
        for name in sorted(p.name for p in a.iterdir()):
            if name in ("config.txt", "manifest.json"):
                continue
            ref = (a / name).read_bytes()
            assert (b / name).read_bytes() == ref, name
            assert (c / name).read_bytes() == ref, name
