"""The command-line front end: argument handling, output, exit codes."""

import hashlib

import numpy as np
import pytest

from fpgp.cli import build_parser, main
from fpgp.evolve import load_config
from fpgp.expr import parse_prefix
from fpgp.fixtures import FIXTURE_FILE_NAMES, write_fixture_files
from fpgp.match import (
    Template,
    end_terminal_set,
    load_template,
    save_template,
)
from fpgp.minutiae import (
    SkeletonImage,
    extract_minutiae,
    load_image,
    load_minutiae_csv,
    thin,
)


def y_skeleton_pbm(path) -> SkeletonImage:
    """Write a 40x40 'Y' skeleton (3 endings, 1 bifurcation) as P1 text."""
    grid = np.zeros((40, 40), dtype=np.uint8)
    cx = cy = 20
    grid[cy, cx] = 1
    for i in range(1, 8):
        grid[cy, cx + i] = 1
        grid[cy - i, cx - i] = 1
        grid[cy + i, cx - i] = 1
    lines = ["P1", "40 40"] + [" ".join(map(str, row)) for row in grid.tolist()]
    path.write_text("\n".join(lines) + "\n")
    return SkeletonImage(grid)


def write_end_csv(path, rows) -> None:
    path.write_text("x,angle\n" + "".join(f"{x},{a:.2f}\n" for x, a in rows))


def write_template(path, targets, formula: str = "x") -> Template:
    template = Template(
        end_formula=parse_prefix(formula, end_terminal_set()),
        bif_formula=None,
        end_targets=list(targets),
        bif_targets=[],
        end_training_rmse=0.0,
        bif_training_rmse=None,
    )
    save_template(template, path)
    return template


TRAIN_CONFIG = "population_size = 60\nmax_generations = 5\ntournament_size = 3\n"


# --------------------------------------------------------------------------
# Parser shape.


class TestParser:
    def test_subcommands_exist(self):
        parser = build_parser()
        args = parser.parse_args(["extract", "img.pbm", "--out", "o"])
        assert args.command == "extract" and args.margin == 10 and not args.thin
        args = parser.parse_args(["train", "--end", "e.csv", "--out", "t.tpl"])
        assert args.command == "train" and args.seed is None
        args = parser.parse_args(["match", "t.tpl", "--end", "e.csv"])
        assert args.command == "match" and args.threshold == 25.0
        assert args.count_policy == "strict"
        args = parser.parse_args(["fixtures", "--dir", "d"])
        assert args.command == "fixtures"
        args = parser.parse_args(["reproduce"])
        assert args.command == "reproduce" and args.seed == 1
        assert args.dir == "reproduction"

    def test_missing_subcommand_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args([])
        assert exc_info.value.code == 2

    def test_bad_count_policy_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["match", "t.tpl", "--count-policy", "loose"])
        assert exc_info.value.code == 2


# --------------------------------------------------------------------------
# extract.


class TestExtract:
    def test_extracts_the_y_skeleton(self, tmp_path, capsys):
        img_path = tmp_path / "y.pbm"
        y_skeleton_pbm(img_path)
        out = tmp_path / "y"
        code = main(["extract", str(img_path), "--out", str(out)])
        assert code == 0
        assert capsys.readouterr().out == "endings: 3, bifurcations: 1\n"
        ends = load_minutiae_csv(tmp_path / "y.end.csv").endings
        bifs = load_minutiae_csv(tmp_path / "y.bif.csv").bifurcations
        expected = extract_minutiae(load_image(img_path))
        assert ends == expected.endings
        assert bifs == expected.bifurcations

    def test_margin_flag(self, tmp_path, capsys):
        img_path = tmp_path / "y.pbm"
        y_skeleton_pbm(img_path)
        code = main(
            ["extract", str(img_path), "--margin", "14", "--out", str(tmp_path / "y")]
        )
        assert code == 0
        assert capsys.readouterr().out == "endings: 0, bifurcations: 1\n"

    def test_thin_flag_matches_the_library(self, tmp_path, capsys):
        grid = np.zeros((30, 30), dtype=np.uint8)
        grid[14:17, 3:27] = 1  # a 3-pixel-thick bar
        lines = ["P1", "30 30"] + [" ".join(map(str, row)) for row in grid.tolist()]
        img_path = tmp_path / "bar.pbm"
        img_path.write_text("\n".join(lines) + "\n")
        code = main(
            ["extract", str(img_path), "--thin", "--margin", "2", "--out", str(tmp_path / "bar")]
        )
        assert code == 0
        expected = extract_minutiae(thin(load_image(img_path)), 2)
        assert load_minutiae_csv(tmp_path / "bar.end.csv").endings == expected.endings

    def test_missing_image_is_exit_2(self, tmp_path, capsys):
        code = main(["extract", str(tmp_path / "nope.pbm"), "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert err.startswith("error:")

    def test_oversized_margin_is_exit_2(self, tmp_path, capsys):
        img_path = tmp_path / "y.pbm"
        y_skeleton_pbm(img_path)
        code = main(
            ["extract", str(img_path), "--margin", "19", "--out", str(tmp_path / "o")]
        )
        assert code == 2
        assert "too small for border margin" in capsys.readouterr().err


# --------------------------------------------------------------------------
# train.


class TestTrain:
    def test_trains_and_writes_a_template(self, tmp_path, capsys):
        write_fixture_files(tmp_path)
        config_path = tmp_path / "run.cfg"
        config_path.write_text(TRAIN_CONFIG)
        template_path = tmp_path / "query.tpl"
        code = main(
            [
                "train",
                "--end", str(tmp_path / "query_end.csv"),
                "--config", str(config_path),
                "--seed", "7",
                "--out", str(template_path),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "end formula: (" in out or "end formula: " in out
        assert "bif formula: -\n" in out
        assert f"template: {template_path}\n" in out
        template = load_template(template_path)
        assert template.end_formula is not None
        assert template.bif_formula is None
        assert len(template.end_targets) == 10

    def test_cli_equals_library_call(self, tmp_path):
        from dataclasses import replace

        from fpgp.match import build_template
        from fpgp.minutiae import MinutiaeSet

        write_fixture_files(tmp_path)
        config_path = tmp_path / "run.cfg"
        config_path.write_text(TRAIN_CONFIG)
        template_path = tmp_path / "cli.tpl"
        main(
            [
                "train",
                "--end", str(tmp_path / "query_end.csv"),
                "--config", str(config_path),
                "--seed", "7",
                "--out", str(template_path),
            ]
        )
        endings = load_minutiae_csv(tmp_path / "query_end.csv").endings
        config = load_config(config_path, end_terminal_set())
        expected = build_template(
            MinutiaeSet(endings=endings), replace(config, rng_seed=7)
        )
        expected_path = tmp_path / "api.tpl"
        save_template(expected, expected_path)
        assert template_path.read_bytes() == expected_path.read_bytes()

    def test_identical_flags_identical_output(self, tmp_path, capsys):
        write_fixture_files(tmp_path)
        argv = [
            "train",
            "--end", str(tmp_path / "query_end.csv"),
            "--seed", "3",
            "--out", str(tmp_path / "a.tpl"),
        ]
        # Small default run: cap the budget through a config file.
        config_path = tmp_path / "run.cfg"
        config_path.write_text(TRAIN_CONFIG)
        argv += ["--config", str(config_path)]
        assert main(argv) == 0
        first = capsys.readouterr().out
        first_bytes = (tmp_path / "a.tpl").read_bytes()
        assert main(argv) == 0
        assert capsys.readouterr().out == first
        assert (tmp_path / "a.tpl").read_bytes() == first_bytes

    def test_requires_some_input(self, tmp_path, capsys):
        code = main(["train", "--out", str(tmp_path / "t.tpl")])
        assert code == 2
        assert "at least one of --end/--bif" in capsys.readouterr().err

    def test_input_without_y_is_exit_2(self, tmp_path, capsys):
        write_fixture_files(tmp_path)
        code = main(
            [
                "train",
                "--end", str(tmp_path / "image1_end.csv"),  # candidate table: no y
                "--out", str(tmp_path / "t.tpl"),
            ]
        )
        assert code == 2
        assert "lacks y, required as target" in capsys.readouterr().err


# --------------------------------------------------------------------------
# match.


class TestMatch:
    def test_match_exit_0(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [5.0, 9.0])
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(5, 0.0), (9, 0.0)])
        code = main(["match", str(template_path), "--end", str(candidate)])
        assert code == 0
        out = capsys.readouterr().out
        assert "end points: template 2, candidate 2" in out
        assert "end points mse: 0.00" in out
        assert out.endswith("decision: MATCH\n")

    def test_non_match_exit_1(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [50.0, 90.0])
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(5, 0.0), (9, 0.0)])
        code = main(["match", str(template_path), "--end", str(candidate)])
        assert code == 1
        assert capsys.readouterr().out.endswith("decision: NON_MATCH\n")

    def test_count_mismatch_reported(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [5.0, 9.0])
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(5, 0.0)])
        code = main(["match", str(template_path), "--end", str(candidate)])
        assert code == 1
        out = capsys.readouterr().out
        assert "end points mse: COUNT_MISMATCH" in out
        # The table pads the shorter side with '-'.
        assert "           -        9.00" in out

    def test_pair_prefix_policy_flips_the_decision(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [5.0, 9.0])
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(5, 0.0)])
        code = main(
            [
                "match", str(template_path),
                "--end", str(candidate),
                "--count-policy", "pair_prefix",
            ]
        )
        assert code == 0  # 1 missing point * 25.0 threshold == 25.0, inclusive
        out = capsys.readouterr().out
        assert "end points mse: 25.00" in out
        assert out.endswith("decision: MATCH\n")

    def test_threshold_flag(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [5.0, 9.0])
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(6, 0.0), (9, 0.0)])  # mse 0.5
        argv = ["match", str(template_path), "--end", str(candidate)]
        assert main(argv) == 0
        assert capsys.readouterr().out.endswith("decision: MATCH\n")
        assert main(argv + ["--threshold", "0.4"]) == 1
        out = capsys.readouterr().out
        assert "end points mse: 0.50" in out
        assert out.endswith("decision: NON_MATCH\n")

    def test_candidate_kind_without_formula_is_exit_2(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        write_template(template_path, [5.0])
        bif_csv = tmp_path / "b.csv"
        bif_csv.write_text("x,angle1,angle2,angle3\n4,1.00,0.00,-1.00\n")
        code = main(["match", str(template_path), "--bif", str(bif_csv)])
        assert code == 2
        assert "no bifurcation formula" in capsys.readouterr().err

    def test_missing_template_is_exit_2(self, tmp_path, capsys):
        code = main(["match", str(tmp_path / "nope.tpl"), "--end", str(tmp_path / "c.csv")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_malformed_template_is_exit_2(self, tmp_path, capsys):
        template_path = tmp_path / "t.tpl"
        template_path.write_text("garbage\n")
        candidate = tmp_path / "c.csv"
        write_end_csv(candidate, [(5, 0.0)])
        code = main(["match", str(template_path), "--end", str(candidate)])
        assert code == 2
        assert "expected 6 lines" in capsys.readouterr().err


# --------------------------------------------------------------------------
# fixtures.


class TestFixturesCommand:
    def test_writes_files_and_prints_digests(self, tmp_path, capsys):
        out_dir = tmp_path / "fx"
        code = main(["fixtures", "--dir", str(out_dir)])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert [line.split("  ")[1] for line in lines] == list(FIXTURE_FILE_NAMES)
        for line in lines:
            digest, name = line.split("  ")
            assert digest == hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
