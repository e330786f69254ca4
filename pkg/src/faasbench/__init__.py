"""Desk-scale FaaS benchmark suite.

Deploys benchmark functions to provider adapters (an embedded simulator of
AWS, Azure, Google and IBM behaviour, or existing HTTP endpoints), drives them
with probe, open-loop stress and cold-start campaigns, stores results as
tagged time series, and derives cold-start, scaling, saturation and cost
reports.
"""

__version__ = "0.1.0"
