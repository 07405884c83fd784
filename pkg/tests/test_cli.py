from pathlib import Path

import pandas as pd
import pytest

from twopathway import cli
from twopathway.cli import EXIT_DIVERGED, EXIT_ERROR, EXIT_INTERRUPTED, EXIT_OK, main
from twopathway.core.layers import Conv2d
from twopathway.harness.registry import RunRegistry
from twopathway.harness.runtime import ShutdownHandler


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("TWOPATH_PROFILE", "TWOPATH_DATA", "TWOPATH_OUTPUT", "TWOPATH_WORKERS", "LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)


def output_fields(capsys):
    """Tab-separated fields of the last stdout line."""
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return lines[-1].split("\t")


def train_fine(profile, capsys, *extra):
    assert main(["train-fine", "--profile", str(profile), *extra]) == EXIT_OK
    return output_fields(capsys)


class TestGradcheckCommand:
    def test_all_checks_pass(self, capsys):
        assert main(["gradcheck", "--instances", "2"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "✓ conv" in out and "✓ fgsm_input_gradient" in out

    def test_broken_gradient_is_reported(self, monkeypatch, capsys):
        original = Conv2d.backward
        monkeypatch.setattr(Conv2d, "backward", lambda self, grad_out: -original(self, grad_out))
        assert main(["gradcheck", "--instances", "1"]) == EXIT_ERROR
        assert "✗ conv" in capsys.readouterr().out


class TestUsage:
    def test_imitation_needs_fine_checkpoint(self):
        with pytest.raises(SystemExit) as info:
            main(["train-coarse", "--imitate"])
        assert info.value.code == 2

    def test_sigma_and_binarize_are_exclusive(self):
        with pytest.raises(SystemExit) as info:
            main(["train-coarse", "--sigma", "1.0", "--binarize"])
        assert info.value.code == 2

    def test_command_required(self):
        with pytest.raises(SystemExit):
            main([])

    def test_missing_profile_is_an_error(self, tmp_path):
        assert main(["train-fine", "--profile", str(tmp_path / "absent.conf")]) == EXIT_ERROR


class TestTrainingCommands:
    def test_train_fine_writes_checkpoint_and_curve(self, tiny_profile, capsys):
        seed, test_accuracy, checkpoint, metrics = train_fine(tiny_profile, capsys)
        assert seed == "0"
        assert 0.0 <= float(test_accuracy) <= 1.0
        assert Path(checkpoint).is_file()
        assert list(pd.read_csv(metrics).columns) == ["epoch", "lr", "train_loss", "test_accuracy", "wall_seconds"]

    def test_runs_are_registered(self, tiny_profile, capsys, tmp_path):
        _, _, checkpoint, _ = train_fine(tiny_profile, capsys)
        registry = RunRegistry(tmp_path / "runs")
        (entry,) = registry.list_experiments()
        assert entry["command"] == "train-fine" and entry["status"] == "completed"
        assert registry.artifacts(entry["experiment_id"])[0]["path"] == checkpoint
        assert (tmp_path / "runs" / "logs" / "twopath.log").is_file()

    def test_checkpoint_is_reused(self, tiny_profile, capsys):
        first = train_fine(tiny_profile, capsys)
        assert train_fine(tiny_profile, capsys) == first

    def test_imitation_then_association(self, tiny_profile, capsys):
        _, _, fine_ckpt, _ = train_fine(tiny_profile, capsys)
        assert main(["train-coarse", "--profile", str(tiny_profile), "--imitate", "--fine-ckpt", fine_ckpt,
                     "--sigma", "1.0"]) == EXIT_OK
        _, _, coarse_ckpt, _ = output_fields(capsys)
        assert "LPF1" in Path(coarse_ckpt).name and "imitation" in Path(coarse_ckpt).name
        assert main(["train-rbm", "--profile", str(tiny_profile), "--task", "robustness",
                     "--fine-ckpt", fine_ckpt, "--coarse-ckpt", coarse_ckpt]) == EXIT_OK
        _, rbm_ckpt, rbm_history = output_fields(capsys)
        assert Path(rbm_ckpt).is_file()
        assert len(pd.read_csv(rbm_history)) == 3

    def test_imitating_a_coarse_network_fails(self, tiny_profile, capsys):
        assert main(["train-coarse", "--profile", str(tiny_profile)]) == EXIT_OK
        _, _, coarse_ckpt, _ = output_fields(capsys)
        assert main(["train-coarse", "--profile", str(tiny_profile), "--imitate",
                     "--fine-ckpt", coarse_ckpt]) == EXIT_ERROR

    def test_bias_task_pipeline(self, tiny_profile, capsys):
        assert main(["train-coarse", "--profile", str(tiny_profile), "--dataset", "bias"]) == EXIT_OK
        _, _, coarse_ckpt, _ = output_fields(capsys)
        assert main(["train-rbm", "--profile", str(tiny_profile), "--task", "bias",
                     "--coarse-ckpt", coarse_ckpt]) == EXIT_OK

    def test_rbm_needs_checkpoints(self, tiny_profile):
        assert main(["train-rbm", "--profile", str(tiny_profile), "--task", "robustness"]) == EXIT_ERROR

    def test_divergence_exit_status(self, tiny_profile, tmp_path):
        status = main(["train-fine", "--profile", str(tiny_profile), "--set", "train_fine.lr=1e30",
                       "--set", "train_fine.momentum=0"])
        assert status == EXIT_DIVERGED
        (entry,) = RunRegistry(tmp_path / "runs").list_experiments()
        assert entry["status"] == "diverged"

    def test_interrupt_writes_partial_checkpoint(self, tiny_profile, monkeypatch, tmp_path):
        def requested():
            handler = ShutdownHandler(install=False)
            handler.request()
            return handler

        monkeypatch.setattr(cli, "ShutdownHandler", requested)
        assert main(["train-fine", "--profile", str(tiny_profile)]) == EXIT_INTERRUPTED
        assert list((tmp_path / "runs" / "checkpoints").glob("*.partial.tpck"))
        (entry,) = RunRegistry(tmp_path / "runs").list_experiments()
        assert entry["status"] == "interrupted"


class TestEvaluationCommands:
    def test_eval_appends_rows(self, tiny_profile, capsys, tmp_path):
        _, _, fine_ckpt, _ = train_fine(tiny_profile, capsys)
        for level in ("0.1", "0.5"):
            assert main(["eval", "--profile", str(tiny_profile), "--ckpt", fine_ckpt,
                         "--noise", "uniform", "--level", level]) == EXIT_OK
        frame = pd.read_csv(tmp_path / "runs" / "eval.csv")
        assert frame["value"].tolist() == [0.1, 0.5]
        assert frame["metric"].tolist() == ["fine_RGB_accuracy"] * 2

    def test_fgsm_eval_of_coarse_needs_fine(self, tiny_profile, capsys):
        assert main(["train-coarse", "--profile", str(tiny_profile)]) == EXIT_OK
        _, _, coarse_ckpt, _ = output_fields(capsys)
        assert main(["eval", "--profile", str(tiny_profile), "--ckpt", coarse_ckpt,
                     "--noise", "fgsm", "--level", "0.1"]) == EXIT_ERROR

    def test_eval_missing_checkpoint(self, tiny_profile, tmp_path):
        assert main(["eval", "--profile", str(tiny_profile), "--ckpt", str(tmp_path / "none.tpck")]) == EXIT_ERROR

    def test_preview_images(self, tiny_profile, tmp_path):
        assert main(["preview", "--profile", str(tiny_profile), "--count", "2"]) == EXIT_OK
        names = sorted(p.name for p in (tmp_path / "runs" / "preview").iterdir())
        assert "000-raw.ppm" in names
        assert "000-LPF2.pgm" in names and "001-BIN0.5.pgm" in names
        assert "000-uniform0.5.ppm" in names
        assert len(names) == 8


class TestSweepAndReport:
    def test_unknown_figure(self, tiny_profile):
        assert main(["sweep", "--profile", str(tiny_profile), "--figure", "9z"]) == EXIT_ERROR

    def test_sweep_then_report(self, tiny_profile, capsys):
        assert main(["sweep", "--profile", str(tiny_profile), "--figure", "4C"]) == EXIT_OK
        csv_path = Path(capsys.readouterr().out.strip().splitlines()[-1])
        assert csv_path.name.startswith("desk-sweep-4c-")
        assert main(["report", "--profile", str(tiny_profile), str(csv_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "config" in out and "not in this registry" not in out
        summary = pd.read_csv(csv_path.with_name(f"{csv_path.stem}-summary.csv"))
        assert list(summary.columns) == ["variable", "value", "metric", "mean", "std", "count"]
        assert len(summary) == 4

    def test_report_on_missing_csv(self, tiny_profile, tmp_path):
        assert main(["report", "--profile", str(tiny_profile), str(tmp_path / "none.csv")]) == EXIT_ERROR
