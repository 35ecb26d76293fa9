from permutest.utils.common import format_decimal, format_rational
from permutest.utils.load_yaml import load_config

config = load_config("general")["cli_configs"]


class ReportDSL:
    """
    Deterministic converter from report objects (TestReport and the diagnostic
    reports) to human readable lines. Every rendered report is appended to a
    history, which joins the blocks with a blank line between them.

    Dispatch is on which fields a report carries, so it works for the pydantic
    models as well as any object exposing the same attributes.
    """

    def __init__(self, digits: int = None):
        self._blocks = []
        self._count = 0
        self.digits = config["significant_digits"] if digits is None else digits

    def record(self, report) -> str:
        """
        Renders a report, appends it to the history and returns the text.
        """
        self._count += 1
        text = self._resolve(report)
        self._blocks.append(text)
        return text

    @property
    def history(self) -> str:
        return "\n\n".join(self._blocks)

    def _num(self, value) -> str:
        return format_decimal(value, self.digits)

    def _rat(self, value) -> str:
        return format_rational(value, self.digits)

    def _verdict(self, report) -> str:
        return "PASS" if report.passed else "FAIL"

    def _resolve(self, report) -> str:
        def g(field):
            return getattr(report, field, None)

        # --- Permutation test ---

        if g("decision") is not None:
            d = report.decision
            lines = [
                f"statistic      {report.statistic_name} ({report.sided} sided)",
                f"groups         {tuple(report.group_sizes)}",
                f"scheme         {report.scheme.label}",
                f"observed       {self._num(report.observed)}",
                f"alpha          {self._rat(report.alpha)}",
                f"critical T(k)  {self._num(d.critical_value)}",
                f"M+ / M0 / M    {d.M_plus} / {d.M_zero} / {d.total}",
                f"a              {self._rat(d.a)}",
                f"phi            {self._rat(d.phi)}",
                f"decision       {d.rejected}",
                f"p-value        {self._rat(report.p_value)}",
            ]
            if report.undefined_count:
                count = report.undefined_count
                lines.append(f"undefined      {count} sampled assignments counted as +inf")
            summary = "  ".join(
                f"{k}={self._num(v)}" for k, v in report.distribution_summary.items()
            )
            lines.append(f"distribution   {summary}")
            return "\n".join(lines)

        # --- Diagnostics ---

        if g("mean_D_over_N") is not None:
            return (
                f"[{self._verdict(report)}] coupling at sizes {tuple(report.sizes)}: "
                f"mean D/N = {self._num(report.mean_D_over_N)} (se {self._num(report.se)}) "
                f"against N^(-1/2) = {self._num(report.bound)} over {report.runs} runs; "
                f"D identity {'holds' if report.identity_holds else 'BROKEN'}"
            )
        if g("gap_variance") is not None:
            return (
                f"[{self._verdict(report)}] coupling gap of {report.statistic} at sizes "
                f"{tuple(report.sizes)}: variance {self._num(report.gap_variance)} "
                f"against bound {self._num(report.bound)} over {report.runs} runs"
            )
        if g("ks_distance") is not None:
            return (
                f"[{self._verdict(report)}] contiguity at sizes {tuple(report.sizes)}, "
                f"s = {report.s} (theta = {self._num(report.theta)}): "
                f"mean L = {self._num(report.mean_L)} (se {self._num(report.se_L)}), "
                f"KS distance {self._num(report.ks_distance)} "
                f"against {self._num(report.ks_threshold)}"
            )
        if g("max_discrepancy") is not None:
            return (
                f"[{self._verdict(report)}] Hoeffding pair check of {report.statistic} "
                f"({report.mode} data, {report.pairs} pairs): max |joint - product| = "
                f"{self._num(report.max_discrepancy)} against {self._num(report.threshold)}"
            )
        if g("subset_center") is not None:
            target = "" if report.target is None else f", target {self._num(report.target)}"
            return (
                f"[{self._verdict(report)}] random subsets of size {report.s} for "
                f"{report.statistic}: subset centre {self._num(report.subset_center)} "
                f"(se {self._num(report.subset_se)}), mixture centre "
                f"{self._num(report.mixture_center)} (se {self._num(report.mixture_se)}){target}"
            )

        return f"Report {self._count}: {report!r}"
