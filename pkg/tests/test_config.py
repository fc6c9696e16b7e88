"""Config schema: lossless round trips, strict validation, resolution."""

import dataclasses

import pytest

from tumorctl.config import (ConfigError, GridSection, GuessSection,
                             ObjectiveSection, OutputSection, RunConfig,
                             SeedSection, SolverSection, TimeSection,
                             config_lines, config_text, parse_config,
                             parse_config_text)
from tumorctl.model import ModelParams


class TestRoundTrip:
    def test_default_config_survives_serialization(self):
        cfg = RunConfig()
        assert parse_config_text(config_text(cfg)) == cfg

    def test_awkward_floats_survive_exactly(self):
        cfg = RunConfig(
            grid=GridSection(elements=16, side=2999.9999999999995),
            time=TimeSection(dt=0.07, duration=0.7000000000000001),
            model=ModelParams(m_ref=7.550000000000001e-2),
        )
        back = parse_config_text(config_text(cfg))
        assert back == cfg
        assert back.grid.side == 2999.9999999999995
        assert back.model.m_ref == 7.550000000000001e-2

    def test_partial_file_fills_defaults(self):
        cfg = parse_config_text("[grid]\nelements = 8\n")
        assert cfg.grid.elements == 8
        assert cfg.grid.side == 3000.0
        assert cfg.time.dt == 0.1
        assert cfg.model == ModelParams()

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "run.ini"
        cfg = RunConfig(output=OutputSection(directory="results"))
        path.write_text(config_text(cfg))
        assert parse_config(path) == cfg

    def test_model_override_reaches_params(self):
        cfg = parse_config_text("[model]\nlam = 320.0\nS_c = 3.0\n")
        assert cfg.model.lam == 320.0
        assert cfg.model.S_c == 3.0
        assert cfg.model.eta == 6.4e4


class TestRejection:
    def test_unknown_section_named(self):
        with pytest.raises(ConfigError, match=r"unknown section \[bogus\]"):
            parse_config_text("[bogus]\nx = 1\n")

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="unknown key grid.bogus"):
            parse_config_text("[grid]\nbogus = 1\n")

    def test_type_error_names_key(self):
        with pytest.raises(ConfigError, match="grid.elements: expected int"):
            parse_config_text("[grid]\nelements = many\n")

    def test_syntax_error_reports_line(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config_text("[grid]\nelements 8\n")

    def test_duplicate_key_reports_line(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config_text("[grid]\nelements = 8\nelements = 9\n")

    def test_missing_section_header_is_config_error(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config_text("elements = 8\n")

    def test_duration_must_be_step_multiple(self):
        with pytest.raises(ConfigError, match="multiple"):
            parse_config_text("[time]\ndt = 0.1\nduration = 0.25\n")

    def test_zero_objective_weight_rejected(self):
        with pytest.raises(ConfigError, match="weight"):
            parse_config_text("[objective]\nweight = 0.0\n")

    def test_bad_variant_rejected(self):
        with pytest.raises(ConfigError, match="variant"):
            parse_config_text("[objective]\nvariant = J9\n")

    def test_bad_seed_mode_rejected(self):
        with pytest.raises(ConfigError, match="seed mode"):
            parse_config_text("[seed]\nmode = cube\n")

    def test_nonfinite_float_rejected(self):
        with pytest.raises(ConfigError, match="expected float"):
            parse_config_text("[grid]\nside = inf\n")

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            parse_config(tmp_path / "absent.ini")

    def test_negative_snapshot_stride_rejected(self):
        with pytest.raises(ConfigError, match="snapshot_every"):
            parse_config_text("[output]\nsnapshot_every = -1\n")


class TestSectionValidation:
    def test_grid_bounds(self):
        with pytest.raises(ValueError):
            GridSection(elements=1)
        with pytest.raises(ValueError):
            GridSection(lattice=1)

    def test_time_bounds(self):
        with pytest.raises(ValueError):
            TimeSection(dt=0.0)
        with pytest.raises(ValueError):
            TimeSection(pregrow=-1.0)

    def test_solver_rho_inf_range(self):
        with pytest.raises(ValueError):
            SolverSection(rho_inf=1.5)

    def test_guess_mode(self):
        with pytest.raises(ValueError):
            GuessSection(mode="warm")

    def test_objective_penalties_positive(self):
        with pytest.raises(ValueError):
            ObjectiveSection(k6=0.0)


class TestResolution:
    def test_lines_cover_every_key(self):
        cfg = RunConfig()
        lines = config_lines(cfg)
        total = sum(len(dataclasses.fields(type(getattr(cfg, f.name))))
                    for f in dataclasses.fields(RunConfig))
        assert len(lines) == total
        assert "grid.elements = 64" in lines
        assert "model.lam = 640.0" in lines
        assert "objective.variant = J1" in lines

    def test_seed_section_builds_initial_condition(self):
        sec = SeedSection(center_x=10.0, center_y=20.0, semi_axis_x=3.0,
                          semi_axis_y=4.0)
        spec = sec.to_spec()
        assert spec.center == (10.0, 20.0)
        assert spec.semi_axis_x == 3.0
        assert spec.semi_axis_y == 4.0

    def test_solver_section_builds_settings(self):
        sec = SolverSection(newton_tol=1e-8, max_linear=77)
        settings = sec.to_settings()
        assert settings.newton_tol == 1e-8
        assert settings.max_linear == 77

    def test_text_lists_sections_in_schema_order(self):
        text = config_text(RunConfig())
        grid = text.index("[grid]")
        model = text.index("[model]")
        output = text.index("[output]")
        assert grid < model < output
