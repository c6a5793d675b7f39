"""Reported values for the 2013 Iranian day-ahead market.

The underlying data is not public, so these are documentation fixtures that
show the expected direction of results. Nothing here is a pass/fail target.
"""

# Share of hours with market RSI <= 110 and > 110, by regime.
RSI_CONDITIONS_2013 = {
    "peak": {"share_le_110": 0.26, "share_gt_110": 0.74},
    "offpeak": {"share_le_110": 0.003, "share_gt_110": 0.997},
}

# Test RMSE in scaled units as (with RSI, without RSI), by pattern and regime.
RMSE_2013 = {
    ("all", "peak"): (0.0393, 0.0433),
    ("all", "offpeak"): (0.0291, 0.0309),
    ("0", "peak"): (0.0231, 0.0258),
    ("0", "offpeak"): (0.0255, 0.0277),
    ("1", "peak"): (0.0277, 0.0315),
    ("1", "offpeak"): (0.0259, 0.0279),
    ("2", "peak"): (0.0219, 0.0318),
    ("2", "offpeak"): (0.0235, 0.0354),
    ("3", "peak"): (0.0166, 0.030),
    ("3", "offpeak"): (0.0244, 0.0334),
}

# Stated average improvements. They do not equal the plain mean of the
# row-wise improvements (about 24.6% / 18.9% over the four day patterns).
STATED_MEAN_IMPROVEMENT_PCT = {"peak": 26.2, "offpeak": 21.0}
