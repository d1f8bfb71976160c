"""SCADA-based predictive maintenance for wind-turbine components.

Pipeline: power-curve and cluster-based outlier removal, seasonal
adjustment, an auto-associative network per component, a Hotelling T2
chart on its residuals, a region-occupancy KPI and three warning levels.
"""

__version__ = "0.1.0"
