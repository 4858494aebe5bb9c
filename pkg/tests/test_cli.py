"""
End-to-end tests of the command-line entry point.
"""
from pathlib import Path

import pandas as pd
import pytest

from src.main import compare_results, main
from src.shared.exceptions import SimulationError, ValidationError


@pytest.fixture
def out(tmp_path: Path) -> Path:
    return tmp_path / "out"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def stdout_fields(text: str) -> dict:
    fields = {}
    for line in text.splitlines():
        key, sep, value = line.partition(": ")
        if sep:
            fields[key] = value
    return fields


@pytest.fixture
def cyclic_file(out, capsys) -> Path:
    code, _, _ = run(capsys, "synth", "--kind", "cyclic", "--length", 300, "--period", 3, "--out", out)
    assert code == 0
    return out / "cyclic.trace"


@pytest.mark.integration
class TestStatsAndPatterns:
    """Test the trace analysis commands."""

    def test_stats_worked_example(self, worked_file, out, capsys):
        code, stdout, _ = run(capsys, "stats", "--trace", worked_file, "--out", out)
        fields = stdout_fields(stdout)

        assert code == 0
        assert fields["length"] == "10"
        assert fields["unique_blocks"] == "3"
        assert fields["mean_accesses_per_block"] == "3.33"
        assert fields["first_references"] == "3"
        assert (out / "stats.csv").exists()

        histogram = pd.read_csv(out / "rd_histogram.csv")
        assert dict(zip(histogram["rd"], histogram["count"])) == {1: 2, 2: 4, 3: 1, 0: 3}

    def test_stats_msr_trace(self, msr_file, out, capsys):
        code, stdout, _ = run(capsys, "stats", "--trace", msr_file, "--format", "msr", "--out", out)

        assert code == 0
        assert stdout_fields(stdout)["length"] == "3"

    def test_missing_trace_file(self, tmp_path, out, capsys):
        code, stdout, stderr = run(capsys, "stats", "--trace", tmp_path / "absent.trace", "--out", out)

        assert code == 2
        assert stdout == ""
        assert "error:" in stderr

    def test_no_trace_given(self, out, capsys):
        code, _, stderr = run(capsys, "stats", "--out", out)

        assert code == 2
        assert "no trace given" in stderr

    def test_patterns(self, worked_file, out, capsys):
        code, stdout, _ = run(capsys, "patterns", "--trace", worked_file, "--out", out)

        assert code == 0
        assert stdout_fields(stdout)["rd_rows"] == "10"
        assert len((out / "rd_series.csv").read_text().splitlines()) == 11
        assert len((out / "clusters.csv").read_text().splitlines()) == 11
        assert (out / "rd_scatter.svg").exists()

    def test_patterns_without_charts(self, worked_file, out, capsys):
        code, _, _ = run(capsys, "patterns", "--trace", worked_file, "--out", out, "--no-svg")

        assert code == 0
        assert not (out / "rd_scatter.svg").exists()


@pytest.mark.integration
class TestModelCommands:
    """Test prepare, train and evaluate."""

    def test_prepare_worked_example(self, worked_file, tmp_path, capsys):
        args = ["--trace", worked_file, "--sequence-length", 4, "--k-min", 1, "--k-max", 2]
        code, stdout, _ = run(capsys, "prepare", *args, "--out", tmp_path / "a")
        run(capsys, "prepare", *args, "--out", tmp_path / "b")

        assert code == 0
        assert stdout_fields(stdout)["samples"] == "7"
        assert (tmp_path / "a" / "dataset.rlds").read_bytes() == (tmp_path / "b" / "dataset.rlds").read_bytes()

    def test_prepare_single_distinct_delta(self, out, capsys):
        run(capsys, "synth", "--kind", "cyclic", "--length", 40, "--period", 1, "--out", out)
        code, stdout, _ = run(capsys, "prepare", "--trace", out / "cyclic.trace", "--out", out)

        assert code == 0
        assert stdout_fields(stdout)["clusters"] == "1"

    def test_sequence_longer_than_trace(self, worked_file, out, capsys):
        code, _, _ = run(capsys, "prepare", "--trace", worked_file, "--sequence-length", 11, "--out", out)

        assert code == 2

    def test_train_without_dataset(self, out, capsys):
        code, _, stderr = run(capsys, "train", "--out", out)

        assert code == 2
        assert "error:" in stderr

    def test_train_evaluate_simulate(self, cyclic_file, out, capsys):
        common = ["--trace", cyclic_file, "--out", out, "--sequence-length", 4]
        model = ["--lstm-width", 4, "--epochs", 3, "--learning-rate", 0.01, "--val-take", 20]

        assert run(capsys, "prepare", *common)[0] == 0
        code, stdout, _ = run(capsys, "train", *common, *model)
        assert code == 0
        assert stdout_fields(stdout)["epochs"] == "3"
        assert len((out / "training_log.csv").read_text().splitlines()) == 4

        code, stdout, _ = run(capsys, "evaluate", *common, *model)
        assert code == 0
        assert stdout_fields(stdout)["samples"] == "20"
        predictions = pd.read_csv(out / "predictions.csv")
        assert list(predictions.columns) == ["origin_time", "truth_scaled", "pred_scaled", "truth_frd", "pred_frd"]

        code, _, _ = run(capsys, "simulate", *common, "--policies", "popt,opt", "--cache-sizes", "1,2")
        assert code == 0
        results = pd.read_csv(out / "results.csv")
        assert sorted(set(results["policy"])) == ["opt", "popt"]

    def test_training_failure_exit_code(self, worked_file, out, capsys, mocker):
        run(capsys, "prepare", "--trace", worked_file, "--sequence-length", 2, "--k-min", 1, "--k-max", 2, "--out", out)
        mocker.patch("src.main.train", side_effect=SimulationError("diverged"))

        code, _, stderr = run(capsys, "train", "--out", out, "--sequence-length", 2)

        assert code == 1
        assert "diverged" in stderr


@pytest.mark.integration
class TestSimulateAndCompare:
    """Test miss ratio sweeps and their summary."""

    def test_oracle_popt_equals_opt(self, cyclic_file, out, capsys):
        code, _, _ = run(
            capsys, "simulate", "--trace", cyclic_file, "--out", out,
            "--policies", "lru,opt,popt", "--cache-sizes", "1,2,3", "--predictor", "oracle",
        )
        results = pd.read_csv(out / "results.csv")
        misses = results.pivot(index="cache_size_blocks", columns="policy", values="misses")

        assert code == 0
        assert list(results.columns) == ["policy", "cache_size_blocks", "accesses", "misses", "miss_ratio"]
        assert misses["popt"].tolist() == misses["opt"].tolist()
        assert misses["lru"].tolist() == [300, 300, 3]
        assert (out / "mrc.svg").exists()

    def test_automatic_sizes_and_2q_minimum(self, cyclic_file, out, capsys):
        code, _, _ = run(capsys, "simulate", "--trace", cyclic_file, "--out", out, "--policies", "lru,2q", "--no-svg")
        results = pd.read_csv(out / "results.csv")

        assert code == 0
        # three distinct blocks: sizes 1..3, all below the 2Q minimum
        assert set(results["policy"]) == {"lru"}
        assert not (out / "mrc.svg").exists()

    def test_only_2q_below_minimum(self, worked_file, out, capsys):
        code, _, _ = run(capsys, "simulate", "--trace", worked_file, "--out", out, "--policies", "2q", "--cache-sizes", "1,2")

        assert code == 2

    def test_popt_needs_checkpoint(self, worked_file, out, capsys):
        code, _, stderr = run(capsys, "simulate", "--trace", worked_file, "--out", out, "--policies", "popt")

        assert code == 2
        assert "train" in stderr

    def test_unknown_policy(self, worked_file, out, capsys):
        code, _, _ = run(capsys, "simulate", "--trace", worked_file, "--out", out, "--policies", "mru")

        assert code == 2

    def test_compare(self, cyclic_file, out, capsys):
        run(capsys, "simulate", "--trace", cyclic_file, "--out", out, "--policies", "lru,opt", "--cache-sizes", "1,2,3")
        code, _, _ = run(capsys, "compare", "--out", out)
        summary = pd.read_csv(out / "compare.csv").set_index("policy")

        assert code == 0
        assert list(summary.columns) == ["mean_miss_ratio", "delta_vs_opt", "delta_vs_lru"]
        assert summary.loc["opt", "delta_vs_opt"] == 0.0
        assert summary.loc["lru", "delta_vs_lru"] == 0.0
        assert summary.loc["lru", "delta_vs_opt"] > 0.0

    def test_compare_empty_results(self, out, capsys):
        out.mkdir(parents=True)
        (out / "results.csv").write_text("policy,cache_size_blocks,accesses,misses,miss_ratio\n")

        code, _, _ = run(capsys, "compare", "--out", out)

        assert code == 2

    def test_compare_missing_results(self, out, capsys):
        assert run(capsys, "compare", "--out", out)[0] == 2


@pytest.mark.unit
class TestCompareResults:
    """Test the per-policy summary table."""

    def frame(self, rows):
        return pd.DataFrame(rows, columns=["policy", "cache_size_blocks", "accesses", "misses", "miss_ratio"])

    def test_identical_policies_have_zero_deltas(self):
        summary = compare_results(
            self.frame(
                [
                    ["lru", 1, 4, 4, 1.0],
                    ["opt", 1, 4, 4, 1.0],
                    ["lru", 2, 4, 2, 0.5],
                    ["opt", 2, 4, 2, 0.5],
                ]
            )
        ).set_index("policy")

        assert summary["delta_vs_opt"].tolist() == [0.0, 0.0]
        assert summary["delta_vs_lru"].tolist() == [0.0, 0.0]
        assert summary.loc["lru", "mean_miss_ratio"] == 0.75

    def test_sizes_missing_for_a_policy_are_skipped(self):
        summary = compare_results(
            self.frame(
                [
                    ["lru", 2, 4, 4, 1.0],
                    ["opt", 2, 4, 2, 0.5],
                    ["lru", 4, 4, 2, 0.5],
                    ["opt", 4, 4, 2, 0.5],
                    ["2q", 4, 4, 3, 0.75],
                ]
            )
        ).set_index("policy")

        assert summary.loc["2q", "delta_vs_opt"] == 0.25
        assert summary.loc["lru", "delta_vs_opt"] == 0.25

    def test_empty(self):
        with pytest.raises(ValidationError):
            compare_results(self.frame([]))

    def test_missing_baseline(self):
        with pytest.raises(ValidationError):
            compare_results(self.frame([["lru", 1, 4, 4, 1.0]]))


@pytest.mark.integration
def test_synth_random(out, capsys):
    """Test that a seeded random trace is written and reproducible."""
    first, _, _ = run(capsys, "synth", "--kind", "random", "--length", 500, "--alphabet", 10, "--seed", 3, "--out", out)
    content = (out / "random.trace").read_text()
    run(capsys, "synth", "--kind", "random", "--length", 500, "--alphabet", 10, "--seed", 3, "--out", out)

    assert first == 0
    assert len(content.splitlines()) == 500
    assert (out / "random.trace").read_text() == content


@pytest.mark.integration
def test_missing_command():
    """Test that argparse rejects a call without a command."""
    with pytest.raises(SystemExit):
        main([])
