# diagnostics.py

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

logger = logging.getLogger(__name__)

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    field: Optional[str] = None


class DiagnosticReport:
    def __init__(self):
        self.diagnostics: List[Diagnostic] = []

    def add_issue(self, severity: str, code: str, message: str, field: Optional[str] = None):
        self.diagnostics.append(Diagnostic(severity, code, message, field))

    def add_error(self, code: str, message: str, field: Optional[str] = None):
        self.add_issue(ERROR, code, message, field)

    def add_warning(self, code: str, message: str, field: Optional[str] = None):
        self.add_issue(WARNING, code, message, field)

    @property
    def errors(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == ERROR]

    @property
    def warnings(self) -> List[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == WARNING]

    def generate_report(self, output_path: Path):
        output_path = Path(output_path)
        output_path.mkdir(parents=True, exist_ok=True)
        report = {
            "total_errors": len(self.errors),
            "total_warnings": len(self.warnings),
            "diagnostics": [asdict(d) for d in self.diagnostics],
        }

        report_file = output_path / "validation_report.json"
        with open(report_file, "w") as f:
            json.dump(report, f, indent=2)
        logger.info(f"Validation report generated: {report_file}")

        # Also generate a human-readable summary
        summary_file = output_path / "validation_summary.txt"
        with open(summary_file, "w") as f:
            f.write("Scenario Validation Summary\n")
            f.write("===========================\n\n")
            f.write(f"Errors: {len(self.errors)}\n")
            f.write(f"Warnings: {len(self.warnings)}\n")

            if self.diagnostics:
                f.write("\nIssues that need attention:\n")
                for d in self.diagnostics:
                    f.write(f"\nSeverity: {d.severity}\n")
                    f.write(f"Code: {d.code}\n")
                    if d.field:
                        f.write(f"Field: {d.field}\n")
                    f.write(f"Description: {d.message}\n")
            else:
                f.write("\nNo issues found.\n")
        logger.info(f"Validation summary generated: {summary_file}")
