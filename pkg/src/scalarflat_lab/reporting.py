"""Markdown and HTML run reports rendered from summary.json."""

from __future__ import annotations

from typing import Any, Dict, List, Mapping

from jinja2 import Environment, FileSystemLoader, TemplateNotFound, select_autoescape

from .artifacts import RunPaths, timestamp_now
from .paths import templates_dir


def _jinja_environment() -> Environment:
    template_path = templates_dir()
    loader = FileSystemLoader(str(template_path)) if template_path.exists() else None
    env = Environment(
        loader=loader,
        autoescape=select_autoescape(enabled_extensions=("html",)),
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.globals["len"] = len
    env.filters["num"] = _format_number
    return env


def _format_number(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _render_template(
    env: Environment, template_name: str, fallback: str, context: Dict[str, Any]
) -> str:
    if env.loader is not None:
        try:
            return env.get_template(template_name).render(**context)
        except TemplateNotFound:
            pass
    return env.from_string(fallback).render(**context)


def _scalars(payload: Mapping[str, Any]) -> List[tuple[str, Any]]:
    return [
        (key, value)
        for key, value in sorted(payload.items())
        if isinstance(value, (int, float, str, bool)) or value is None
    ]


def render_reports(
    summary: Dict[str, Any], rows: List[Dict[str, Any]], run_paths: RunPaths
) -> None:
    """Markdown and HTML views of a run summary; the only artifacts carrying wall-clock time."""
    env = _jinja_environment()
    result = summary.get("result", {})
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    context = {
        "summary": summary,
        "scalars": _scalars(result) if isinstance(result, Mapping) else [],
        "rows": rows,
        "columns": columns,
        "rendered_at": timestamp_now(),
    }
    markdown = _render_template(env, "report.md.j2", _DEFAULT_MARKDOWN_TEMPLATE, context)
    html = _render_template(env, "report.html.j2", _DEFAULT_HTML_TEMPLATE, context)
    run_paths.run_dir.mkdir(parents=True, exist_ok=True)
    run_paths.markdown_report_path.write_text(markdown, encoding="utf-8")
    run_paths.html_report_path.write_text(html, encoding="utf-8")


_DEFAULT_MARKDOWN_TEMPLATE = """# scalarflat report: {{ summary.command }}

## Run Summary

- Run ID: {{ summary.run_id }}
- Config hash: {{ summary.config_hash }}
- Tool version: {{ summary.version }}
- Threads: {{ summary.config.threads }}
- Status: {{ summary.status }}
- Rendered: {{ rendered_at }}

{% if scalars %}
## Results

| Quantity | Value |
|----------|-------|
{% for key, value in scalars -%}
| {{ key }} | {{ value|num }} |
{% endfor %}
{% endif %}

{% if rows %}
## Table

| {{ columns|join(" | ") }} |
|{% for _ in columns %}---|{% endfor %}

{% for row in rows -%}
| {% for column in columns %}{{ row.get(column, "")|num }} | {% endfor %}

{% endfor %}
{% endif %}
"""

_DEFAULT_HTML_TEMPLATE = """<!doctype html>
<html lang="en">
  <head>
    <meta charset="utf-8" />
    <title>scalarflat report - {{ summary.run_id }}</title>
    <style>
      body { font-family: Arial, sans-serif; margin: 2rem; }
      h1, h2 { color: #1f2933; }
      table { border-collapse: collapse; margin-bottom: 1.5rem; }
      th, td { border: 1px solid #d2d6dc; padding: 0.4rem; text-align: right; }
      th { background-color: #f9fafb; }
    </style>
  </head>
  <body>
    <h1>scalarflat report: {{ summary.command }}</h1>
    <section>
      <h2>Run Summary</h2>
      <ul>
        <li><strong>Run ID:</strong> {{ summary.run_id }}</li>
        <li><strong>Config hash:</strong> {{ summary.config_hash }}</li>
        <li><strong>Tool version:</strong> {{ summary.version }}</li>
        <li><strong>Status:</strong> {{ summary.status }}</li>
        <li><strong>Rendered:</strong> {{ rendered_at }}</li>
      </ul>
    </section>
    {% if scalars %}
    <section>
      <h2>Results</h2>
      <table>
        <tbody>
          {% for key, value in scalars %}
          <tr><th>{{ key }}</th><td>{{ value|num }}</td></tr>
          {% endfor %}
        </tbody>
      </table>
    </section>
    {% endif %}
    {% if rows %}
    <section>
      <h2>Table</h2>
      <table>
        <thead>
          <tr>{% for column in columns %}<th>{{ column }}</th>{% endfor %}</tr>
        </thead>
        <tbody>
          {% for row in rows %}
          <tr>{% for column in columns %}<td>{{ row.get(column, "")|num }}</td>{% endfor %}</tr>
          {% endfor %}
        </tbody>
      </table>
    </section>
    {% endif %}
  </body>
</html>
"""
