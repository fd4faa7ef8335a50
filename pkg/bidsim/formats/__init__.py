from .snapshot import to_snapshot, from_snapshot
from .demand import to_demand_csv, from_demand_csv
from .reports import (
  to_metrics_json, to_trace_csv, to_series_csv,
  to_cumulative_revenue_csv, to_distribution_csv,
  to_comparison_csv, histogram, TRACE_COLUMNS,
)
