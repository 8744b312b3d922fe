import os

TOOL_VERSION = "0.1.0"

# quadrature
QUADRATURE_ABS_TOL = 1e-8
QUADRATURE_MIN_LEVEL = 3
QUADRATURE_MAX_LEVEL = 12
TRUNCATION_U = 200.0
# panel break points in u*T; the last panel always ends at the truncation point
GL_V_BREAKS = (0.0, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0, 96.0, 128.0)
GL_X_BREAKS = (0.0, 0.05, 0.15, 0.3, 0.5, 0.7, 0.85, 1.0)
TS_V_BREAKS = (0.0, 2.0, 8.0, 32.0, 96.0)
TS_T_MAX = 3.5
NODE_CHUNK = 4096
MAX_MOMENT_ORDER = 16

# mgf evaluation routes
KERNEL_SERIES_SWITCH = 4.0
KERNEL_SERIES_EXTRA_TERMS = 20
DIRECT_ROUTE_RATIO = 0.4
SERIES_TAIL_TOL = 1e-17

# riccati oracle
RICCATI_STEPS = 10_000
VERIFY_STEPS = 2_000
BB_EPSILON = 1e-6
HERMITE_NODES = 24
VERIFY_TOLERANCE = 1e-6
VERIFY_TOLERANCE_BB = 1e-5
VERIFY_DIAGONAL_VALUES = (0.5, 1.0, 2.0, 4.0, 8.0)
VERIFY_OFF_DIAGONAL_FRACTIONS = (-0.5, 0.0, 0.5)

# monte carlo
MC_STEPS = 2048
MC_BLOCK_PATHS = 1024
# upper bound on grid points (paths x nodes) held by one block
MC_BLOCK_ELEMENTS = 2 ** 21
JACKKNIFE_BLOCKS = 100
RHO_GUARD = 1e-12
CLT_T_GRID = (10.0, 25.0, 50.0)

# density
DENSITY_POINTS = 401
FLAT_INTERVAL = (-0.5, 0.5)

DEFAULT_ORDERS = {
    "bm": (2, 4, 6, 8, 10, 12, 14, 16),
    "ou": (2,),
    "bb": (2, 4, 6, 8),
    "cbm": (1, 2),
}

OU_R_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
CBM_C_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

VALUE_FORMAT = "{:.6f}"
ERROR_FORMAT = "{:.3e}"


def worker_count() -> int:
    """Thread cap from VC_THREADS, defaulting to every core."""
    raw = os.environ.get("VC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


MOMENTS_MAX_PROMPT = """The following moments of Yule's nonsense correlation have already been shown to the USER in a table. Do not restate the table; surface at most two observations, for example how quickly the even moments decay or how far the mean sits from zero.
Process: {{ process }}
Route: {{ route }}
{% for row in facts %}- E rho^{{ row.k }} = {{ "%.6f"|format(row.value) }} (error estimate {{ "%.1e"|format(row.err_estimate) }})
{% endfor %}"""

DENSITY_MAX_PROMPT = """A moment-matched polynomial approximation of order {{ order }} to the density of Yule's nonsense correlation for {{ process }} has been shown to the USER. Do not list the coefficients again; mention whether the curve is flat near zero{% if negative_fraction > 0 %} and that it dips below zero near the endpoints (minimum {{ "%.4f"|format(min_value) }}), which is a truncation artefact{% endif %}."""

MOMENTS_TABLE_LAYOUT = r"""{
	"layoutJson": {
		"type": "Document",
		"rows": 90,
		"columns": 160,
		"rowHeight": "1.11%",
		"colWidth": "0.625%",
		"gap": "0px",
		"style": {
			"backgroundColor": "#ffffff",
			"width": "100%",
			"height": "max-content",
			"padding": "15px",
			"gap": "10px"
		},
		"children": [
			{
				"name": "FlexContainer0",
				"type": "FlexContainer",
				"children": "",
				"minHeight": "0px",
				"direction": "column",
				"hidden": false
			},
			{
				"name": "Header0",
				"type": "Header",
				"children": "",
				"text": "Moments",
				"style": {
					"fontSize": "20px",
					"fontWeight": "bold",
					"textAlign": "left",
					"color": "#000000"
				},
				"parentId": "FlexContainer0",
				"hidden": false
			},
			{
				"name": "Markdown0",
				"type": "Markdown",
				"children": "",
				"text": "",
				"style": {
					"fontSize": "14px",
					"color": "#555555"
				},
				"parentId": "FlexContainer0",
				"hidden": false
			},
			{
				"name": "tableBlock",
				"type": "DataTable",
				"width": null,
				"height": null,
				"columns": [
					{
						"name": "k"
					},
					{
						"name": "value"
					}
				],
				"data": [
					[
						"2",
						"0.000000"
					]
				],
				"styles": {
					"alternateRowColor": "#f7f7f7",
					"fontFamily": "Arial, sans-serif",
					"th": {
						"backgroundColor": "#F0F0F0",
						"color": "#000000",
						"fontWeight": "bold"
					}
				},
				"row": null,
				"column": null,
				"parentId": "FlexContainer0"
			}
		]
	},
	"inputVariables": [
		{
			"name": "headline",
			"isRequired": false,
			"defaultValue": null,
			"targets": [
				{
					"elementName": "Header0",
					"fieldName": "text"
				}
			]
		},
		{
			"name": "sub_headline",
			"isRequired": false,
			"defaultValue": null,
			"targets": [
				{
					"elementName": "Markdown0",
					"fieldName": "text"
				}
			]
		},
		{
			"name": "data_table_columns",
			"isRequired": false,
			"defaultValue": null,
			"targets": [
				{
					"elementName": "tableBlock",
					"fieldName": "columns"
				}
			]
		},
		{
			"name": "data_table_data",
			"isRequired": false,
			"defaultValue": null,
			"targets": [
				{
					"elementName": "tableBlock",
					"fieldName": "data"
				}
			]
		}
	]
}"""
