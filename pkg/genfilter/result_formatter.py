"""
Console rendering of run manifests, validation reports and scenario listings
"""

import json
from typing import Any, Dict, List

from .utils import _clean_for_json

FORMATS = ('table', 'json', 'markdown')


def _flatten(data: Dict[str, Any], prefix: str = '') -> List[tuple]:
    rows = []
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.extend(_flatten(value, f"{name}."))
        else:
            rows.append((name, value))
    return rows


def _display(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return '-'
    return str(value)


def format_manifest(manifest: Dict[str, Any], output_dir: str, format_type: str = 'table') -> str:
    """Format the outcome of a run"""
    if format_type == 'json':
        return json.dumps(_clean_for_json({'output_dir': output_dir, **manifest}), indent=2, sort_keys=True)
    if format_type == 'markdown':
        return _format_manifest_markdown(manifest, output_dir)
    return _format_manifest_table(manifest, output_dir)


def _format_manifest_table(manifest: Dict[str, Any], output_dir: str) -> str:
    lines = ["=" * 80]
    lines.append(f"Experiment: {manifest['experiment']}   seed: {manifest['root_seed']}   "
                 f"time: {manifest['wall_clock_seconds']:.1f}s")
    lines.append(f"Output directory: {output_dir}")
    lines.append("-" * 80)
    lines.append(f"{'Result':<45} {'Value':<30}")
    lines.append("-" * 80)
    for name, value in _flatten(manifest.get('summary', {})):
        lines.append(f"{name:<45} {_display(value):<30}")
    lines.append("-" * 80)
    for name in manifest.get('outputs', {}):
        lines.append(f"  {name}")
    lines.append("=" * 80)
    return '\n'.join(lines)


def _format_manifest_markdown(manifest: Dict[str, Any], output_dir: str) -> str:
    lines = [f"# {manifest['experiment']}\n"]
    lines.append(f"Seed `{manifest['root_seed']}`, outputs in `{output_dir}`\n")
    lines.append("| Result | Value |")
    lines.append("|--------|-------|")
    for name, value in _flatten(manifest.get('summary', {})):
        lines.append(f"| {name} | {_display(value)} |")
    return '\n'.join(lines)


def format_report(problems: List[str], source: str, format_type: str = 'table') -> str:
    """Format a validation report; an empty problem list means the file is valid"""
    if format_type == 'json':
        return json.dumps({'config': source, 'valid': not problems, 'problems': problems}, indent=2)
    if not problems:
        return f"{source}: configuration is valid"
    bullet = '-' if format_type == 'markdown' else '  •'
    lines = [f"{source}: {len(problems)} problem(s) found"]
    lines.extend(f"{bullet} {problem}" for problem in problems)
    return '\n'.join(lines)


def format_scenarios(scenarios: List[Dict[str, Any]], format_type: str = 'table') -> str:
    """Format the built-in scenario listing"""
    if format_type == 'json':
        return json.dumps(_clean_for_json(scenarios), indent=2)
    if format_type == 'markdown':
        lines = ["| Scenario | Kind | N | K | Attributes | Observation |",
                 "|----------|------|---|---|------------|-------------|"]
        for info in scenarios:
            lines.append(f"| {info['name']} | {info['kind']} | {info['dim']} | {info.get('components', '-')} | "
                         f"{', '.join(info.get('attributes', [])) or '-'} | {info['observation']} |")
        return '\n'.join(lines)

    lines = ["Built-in scenarios:"]
    for info in scenarios:
        attributes = ', '.join(info.get('attributes', [])) or '-'
        lines.append(f"  {info['name']:<10} {info['kind']:<15} N={info['dim']:<3} "
                     f"K={str(info.get('components', '-')):<3} attributes: {attributes}")
        if info.get('description'):
            lines.append(f"  {'':<10} {info['description']}")
    return '\n'.join(lines)
