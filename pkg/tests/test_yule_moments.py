from dataclasses import dataclass, field
from typing import Dict, List

from skill_framework import ExitFromSkillException, SkillInput
from skill_framework.preview import preview_skill

from dataset_definitions.reference_values import BmMoments, OuSecondMoments
from yule_moments import yule_moments


@dataclass
class TestYuleMomentsCommonParametersConfig:
    process_1: str = "bm"
    process_2: str = "ou"
    process_3: str = "bb"
    process_4: str = "cbm"
    rate: float = OuSecondMoments.R_1.value[0]
    correlation: float = 0.5
    orders_1: List[int] = field(default_factory=lambda: [2])
    orders_2: List[int] = field(default_factory=lambda: [1, 2])
    mc_paths: int = 2_000
    mc_steps: int = 128


YuleMomentsCommonParametersConfig = TestYuleMomentsCommonParametersConfig()


@dataclass
class TestYuleMomentsGuardrailsConfig:
    """Configuration for testing guardrails and edge cases"""
    invalid_process: str = "levy"
    invalid_route: str = "bootstrap"
    invalid_correlation: float = 1.5
    invalid_orders: List = field(default_factory=lambda: [0, 40])
    unparseable_orders: str = "two,four"


YuleMomentsGuardrailsConfig = TestYuleMomentsGuardrailsConfig()


class TestYuleMoments:

    def _run_yule_moments(self, parameters: Dict, preview: bool = False):
        skill_input: SkillInput = yule_moments.create_input(arguments=parameters)
        out = yule_moments(skill_input)
        if preview or getattr(self, 'preview', False):
            preview_skill(yule_moments, out)
        return out

    def _assert_yule_moments_runs_with_error(self, parameters: Dict, expected_exception):
        try:
            self._run_yule_moments(parameters, preview=False)
            assert False, f"Expected exception but skill ran successfully"
        except expected_exception:
            pass
        except Exception as e:
            assert False, f"Expected {expected_exception}, got {type(e).__name__}: {e}"

    def _assert_yule_moments_runs_without_errors(self, parameters: Dict, preview: bool = False):
        return self._run_yule_moments(parameters, preview=preview)

    def _exported(self, out, name: str):
        return next(export.data for export in out.export_data if export.name == name)


class TestYuleMomentsCommonParameters(TestYuleMoments):
    """Test the moments skill with common parameters to verify functionality"""

    config = YuleMomentsCommonParametersConfig
    preview = False

    def test_default_parameters(self):
        out = self._assert_yule_moments_runs_without_errors({})
        frame = self._exported(out, "yule_moments")
        assert list(frame["k"]) == [2]
        assert abs(frame["value"].iloc[0] - BmMoments.K2.value[1]) < 1e-4

    def test_ou_with_rate(self):
        parameters = {
            "process": self.config.process_2,
            "r": self.config.rate,
            "orders": self.config.orders_1
        }
        out = self._assert_yule_moments_runs_without_errors(parameters)
        frame = self._exported(out, "yule_moments")
        assert abs(frame["value"].iloc[0] - OuSecondMoments.R_1.value[1]) < 1e-4

    def test_bridge_with_odd_order(self):
        parameters = {
            "process": self.config.process_3,
            "orders": self.config.orders_2
        }
        out = self._assert_yule_moments_runs_without_errors(parameters)
        frame = self._exported(out, "yule_moments")
        assert frame["value"].iloc[0] == 0.0

    def test_correlated_processes(self):
        parameters = {
            "process": self.config.process_4,
            "c": self.config.correlation,
            "orders": self.config.orders_2
        }
        out = self._assert_yule_moments_runs_without_errors(parameters)
        assert "cbm(c=0.5)" in out.final_prompt

    def test_several_orders(self):
        parameters = {
            "process": self.config.process_1,
            "orders": [2, 4]
        }
        out = self._assert_yule_moments_runs_without_errors(parameters)
        assert list(self._exported(out, "yule_moments")["k"]) == [2, 4]

    def test_monte_carlo_route(self):
        parameters = {
            "process": self.config.process_1,
            "orders": self.config.orders_1,
            "route": "monte_carlo",
            "paths": self.config.mc_paths,
            "steps": self.config.mc_steps,
            "seed": 3
        }
        out = self._assert_yule_moments_runs_without_errors(parameters)
        frame = self._exported(out, "yule_moments")
        assert frame["route"].iloc[0] == "monte_carlo"
        assert frame["err_estimate"].iloc[0] > 0
        assert abs(frame["value"].iloc[0] - BmMoments.K2.value[1]) < 0.03

    def test_parameter_display(self):
        out = self._assert_yule_moments_runs_without_errors({"process": self.config.process_1})
        keys = [d.key for d in out.parameter_display_descriptions]
        assert keys == ["Process", "Orders", "Route"]


class TestYuleMomentsGuardrails(TestYuleMoments):
    """Test guardrails and error conditions for the moments skill"""

    config = YuleMomentsCommonParametersConfig
    guardrail_config = YuleMomentsGuardrailsConfig
    preview = False

    def test_unknown_process(self):
        parameters = {"process": self.guardrail_config.invalid_process}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_ou_without_rate(self):
        parameters = {"process": self.config.process_2}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_rate_for_brownian_motion(self):
        parameters = {"process": self.config.process_1, "r": self.config.rate}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_correlation_outside_range(self):
        parameters = {"process": self.config.process_4, "c": self.guardrail_config.invalid_correlation}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_orders_outside_range(self):
        parameters = {"process": self.config.process_1, "orders": self.guardrail_config.invalid_orders}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_unparseable_orders(self):
        parameters = {"process": self.config.process_1, "orders": self.guardrail_config.unparseable_orders}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)

    def test_unknown_route(self):
        parameters = {"process": self.config.process_1, "route": self.guardrail_config.invalid_route}
        self._assert_yule_moments_runs_with_error(parameters, ExitFromSkillException)
