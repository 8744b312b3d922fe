from __future__ import annotations

from skill_framework import skill, SkillParameter, SkillInput, SkillOutput
from skill_framework.preview import preview_skill

from yule_helper.yule_config import DENSITY_MAX_PROMPT, DENSITY_POINTS, MOMENTS_TABLE_LAYOUT
from yule_helper.yule_functionality import run_yule_density


@skill(
    name="Yule Density",
    description="Approximates the density of Yule's nonsense correlation rho on [-1, 1] by the polynomial whose moments match the exact moments of rho.",
    capabilities="Returns the polynomial coefficients, the matched moments and the density sampled on an even grid of [-1, 1] as exportable data, for Brownian motion, Ornstein-Uhlenbeck, Brownian bridge and correlated Brownian motion.",
    limitations="Polynomial approximations can dip below zero near the endpoints. Symmetric processes need an even order. Orders above 8 take a long time.",
    example_questions="What does the distribution of the nonsense correlation look like for Brownian motion? Fit a 6th order density to rho for a Brownian bridge",
    parameters=[
        SkillParameter(
            name="process",
            constrained_to=None,
            constrained_values=["bm", "ou", "bb", "cbm"],
            description="Process family: bm, ou, bb or cbm",
            default_value="bm"
        ),
        SkillParameter(
            name="r",
            description="Mean-reversion rate, ou only"
        ),
        SkillParameter(
            name="c",
            description="Correlation in (-1, 1), cbm only"
        ),
        SkillParameter(
            name="T",
            description="Observation horizon",
            default_value=1.0
        ),
        SkillParameter(
            name="order",
            description="Polynomial order, at most 16 and even for symmetric processes",
            default_value=4
        ),
        SkillParameter(
            name="points",
            description="Number of grid points for the sampled curve",
            default_value=DENSITY_POINTS
        ),
        SkillParameter(
            name="max_prompt",
            parameter_type="prompt",
            description="Prompt being used for max response.",
            default_value=DENSITY_MAX_PROMPT
        ),
        SkillParameter(
            name="table_viz_layout",
            parameter_type="visualization",
            description="Table Viz Layout",
            default_value=MOMENTS_TABLE_LAYOUT
        )
    ]
)
def yule_density(parameters: SkillInput) -> SkillOutput:
    print(f"Skill received following parameters: {parameters.arguments}")
    return run_yule_density(parameters)


if __name__ == '__main__':
    skill_input: SkillInput = yule_density.create_input(arguments={"process": "bm", "order": 4})
    out = yule_density(skill_input)
    preview_skill(yule_density, out)
