from permutest.core.helpers.parallel import parallel_map, worker_count
from permutest.core.helpers.report_dsl import ReportDSL

__all__ = ["parallel_map", "worker_count", "ReportDSL"]
