"""
CLI interface for the genfilter experiment harness
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import fire

from .config import ConfigManager
from .error_handler import ConfigError, GenFilterError, NumericalError, format_error
from .result_formatter import FORMATS, format_manifest, format_report, format_scenarios

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
DIAGNOSTIC_FILE = 'diagnostic.txt'


def _configure_logging(verbose: bool):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)


def _fail(error: BaseException, code: int):
    print(format_error(error), file=sys.stderr)
    raise SystemExit(code)


class ScenariosCommand:
    """Built-in reference scenarios"""

    def list(self, format: str = 'table') -> str:
        """
        List the built-in scenarios

        Args:
            format: Output format (table, json, markdown)
        """
        from .scenarios import create_handler, registry

        infos = [create_handler({'builtin': name}).describe() for name in registry.list_scenarios()]
        return format_scenarios(infos, format)


class GenFilterCLI:
    """Nonlinear-filtering experiments for SDE generative models"""

    def __init__(self):
        self.scenarios = ScenariosCommand()

    def run(self, config: str,
            seed: Optional[int] = None,
            out: Optional[str] = None,
            threads: Optional[int] = None,
            no_plots: bool = False,
            verbose: bool = False,
            format: str = 'table') -> str:
        """
        Run the experiment described by a configuration file

        Args:
            config: Path to the experiment configuration (YAML or JSON)
            seed: Root seed, overrides root_seed from the file
            out: Output directory, overrides output_dir from the file
            threads: Worker threads for Monte-Carlo fan-out
            no_plots: Skip the SVG plots
            verbose: Log progress at INFO level
            format: Output format (table, json, markdown)

        Returns:
            Summary of the run; exits with status 2 on configuration errors
            and 3 on numerical failures
        """
        from .runner import ExperimentRunner

        _configure_logging(verbose)
        if format not in FORMATS:
            return f"Invalid format '{format}'. Valid options: {', '.join(FORMATS)}"

        overrides: Dict[str, Any] = {'root_seed': seed, 'output_dir': out, 'threads': threads}
        if no_plots:
            overrides['plots'] = False
        try:
            experiment = ConfigManager(config, overrides).get_config()
        except ConfigError as e:
            _fail(e, EXIT_CONFIG)

        try:
            runner = ExperimentRunner(experiment)
            manifest = runner.run()
        except NumericalError as e:
            output_dir = Path(experiment.output_dir).expanduser()
            output_dir.mkdir(parents=True, exist_ok=True)
            (output_dir / DIAGNOSTIC_FILE).write_text(format_error(e) + '\n', encoding='utf-8')
            _fail(e, EXIT_NUMERICAL)
        except GenFilterError as e:
            _fail(e, EXIT_CONFIG)
        return format_manifest(manifest.to_dict(), str(runner.output_dir), format)

    def validate(self, config: str, format: str = 'table') -> str:
        """
        Check a configuration file without running it

        Args:
            config: Path to the experiment configuration (YAML or JSON)
            format: Output format (table, json, markdown)

        Returns:
            Every schema and semantic problem found; an empty report means valid
        """
        try:
            problems = ConfigManager(config).validate()
        except ConfigError as e:
            problems = e.problems or [e.message]
        return format_report(problems, config, format)

    def schema_guide(self) -> str:
        """Show every supported configuration field"""
        from .error_handler import get_schema_guide
        return get_schema_guide()


def main():
    """Main CLI entry point"""
    fire.Fire(GenFilterCLI)


if __name__ == '__main__':
    main()
