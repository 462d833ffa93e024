import os
from typing import Any, Dict, List, Optional

import markdown

from utils import format_short, setup_logger

logger = setup_logger("ReportGenerator")


def _render(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return format_short(value)
    if isinstance(value, complex):
        return f"{format_short(value.real)} + {format_short(value.imag)}i"
    return str(value)


class ReportGenerator:
    def __init__(self, output_dir: str = "output"):
        self.output_dir = output_dir

    def generate_markdown(
        self,
        experiment: str,
        results: Dict[str, Any],
        config: Optional[Dict[str, Any]] = None,
        notes: Optional[List[str]] = None,
        artifacts: Optional[List[str]] = None,
    ) -> str:
        """
        Experiment report: one `name = value` line per result, then notes,
        artifact list and the resolved configuration.
        """
        lines = []

        lines.append(f"# Experiment report: {experiment}")
        lines.append("")

        lines.append("## Results")
        lines.append("")
        for name, value in results.items():
            lines.append(f"    {name} = {_render(value)}")
        lines.append("")

        if notes:
            lines.append("## Notes")
            lines.append("")
            for note in notes:
                lines.append(f"- {note}")
            lines.append("")

        if artifacts:
            lines.append("## Artifacts")
            lines.append("")
            lines.append("| File |")
            lines.append("|------|")
            for name in artifacts:
                lines.append(f"| `{name}` |")
            lines.append("")

        if config:
            lines.append("## Configuration")
            lines.append("")
            for section, values in config.items():
                if isinstance(values, dict):
                    rendered = ", ".join(f"{k}={_render(v)}" for k, v in values.items())
                    lines.append(f"- **{section}**: {rendered}")
                else:
                    lines.append(f"- **{section}**: {_render(values)}")
            lines.append("")

        return "\n".join(lines)

    def save_report(self, markdown_content: str, filename: str = "report.md") -> str:
        filepath = os.path.join(self.output_dir, filename)

        with open(filepath, "w", encoding="utf-8") as f:
            f.write(markdown_content)

        logger.info(f"Saved report to: {filepath}")
        return filepath

    def generate_html_report(self, markdown_content: str, filename: str = "report.html") -> str:
        html_content = markdown.markdown(markdown_content, extensions=["tables", "fenced_code"])

        html_template = f"""<!DOCTYPE html>
<html lang="en">
<head>
    <meta charset="UTF-8">
    <title>Experiment report</title>
    <style>
        body {{
            font-family: "Helvetica Neue", Arial, sans-serif;
            line-height: 1.6;
            max-width: 1000px;
            margin: 0 auto;
            padding: 20px;
        }}
        h1, h2 {{
            border-bottom: 2px solid #2b6cb0;
            padding-bottom: 8px;
        }}
        table {{
            border-collapse: collapse;
        }}
        th, td {{
            border: 1px solid #ddd;
            padding: 6px 12px;
        }}
        pre {{
            background-color: #f4f4f4;
            padding: 8px;
        }}
    </style>
</head>
<body>
    {html_content}
</body>
</html>
"""

        filepath = os.path.join(self.output_dir, filename)

        with open(filepath, "w", encoding="utf-8") as f:
            f.write(html_template)

        logger.info(f"Saved HTML report to: {filepath}")
        return filepath
