from __future__ import annotations

from skill_framework import skill, SkillParameter, SkillInput, SkillOutput
from skill_framework.preview import preview_skill

from yule_helper.yule_config import MOMENTS_MAX_PROMPT, MOMENTS_TABLE_LAYOUT
from yule_helper.yule_functionality import ROUTE_CHOICES, run_yule_moments


@skill(
    name="Yule Moments",
    description="Computes the moments E rho^k of Yule's nonsense correlation rho, the empirical correlation of two independent (or correlated) Gaussian processes observed over a time interval.",
    capabilities="Exact moments up to order 16 for Brownian motion, Ornstein-Uhlenbeck processes with mean reversion r, the Brownian bridge and correlated Brownian motion with correlation c, from closed-form generating functions and two-dimensional quadrature. A Monte Carlo route gives the same moments with jackknife standard errors.",
    limitations="Only the four process families above. Orders above 8 take minutes to hours by quadrature. Monte Carlo errors shrink like one over the square root of the number of paths.",
    example_questions="What is the variance of Yule's nonsense correlation for two independent random walks? Show the 2nd and 4th moments of rho for an OU process with r = 2 How does the mean correlation change for correlated Brownian motions with c = 0.5?",
    parameters=[
        SkillParameter(
            name="process",
            constrained_to=None,
            constrained_values=["bm", "ou", "bb", "cbm"],
            description="Process family: bm (Brownian motion), ou (Ornstein-Uhlenbeck), bb (Brownian bridge), cbm (correlated Brownian motion)",
            default_value="bm"
        ),
        SkillParameter(
            name="r",
            description="Mean-reversion rate, required for ou and only for ou"
        ),
        SkillParameter(
            name="c",
            description="Correlation between the two Brownian motions in (-1, 1), required for cbm and only for cbm"
        ),
        SkillParameter(
            name="T",
            description="Observation horizon; the Brownian bridge is pinned at 1",
            default_value=1.0
        ),
        SkillParameter(
            name="orders",
            is_multi=True,
            description="Moment orders between 1 and 16",
            default_value=[2]
        ),
        SkillParameter(
            name="route",
            constrained_to=None,
            constrained_values=ROUTE_CHOICES,
            description="quadrature for exact values, monte_carlo for simulated estimates with standard errors",
            default_value="quadrature"
        ),
        SkillParameter(
            name="paths",
            description="Number of simulated path pairs for the monte_carlo route",
            default_value=100_000
        ),
        SkillParameter(
            name="steps",
            description="Time steps per path for the monte_carlo route; 2048 per unit of T when left empty"
        ),
        SkillParameter(
            name="seed",
            description="Random seed for the monte_carlo route",
            default_value=0
        ),
        SkillParameter(
            name="max_prompt",
            parameter_type="prompt",
            description="Prompt being used for max response.",
            default_value=MOMENTS_MAX_PROMPT
        ),
        SkillParameter(
            name="table_viz_layout",
            parameter_type="visualization",
            description="Table Viz Layout",
            default_value=MOMENTS_TABLE_LAYOUT
        )
    ]
)
def yule_moments(parameters: SkillInput) -> SkillOutput:
    print(f"Skill received following parameters: {parameters.arguments}")
    return run_yule_moments(parameters)


if __name__ == '__main__':
    skill_input: SkillInput = yule_moments.create_input(arguments={"process": "ou", "r": 1.0, "orders": [2]})
    out = yule_moments(skill_input)
    preview_skill(yule_moments, out)
