#!/usr/bin/env python3
"""
Preset management CLI tool for hklab experiments.
"""
import argparse
import sys
from pathlib import Path

from rich.console import Console

from hklab_lib.config import PRESETS_PATH
from hklab_lib.exceptions import LabValidationError
from hklab_lib.experiments import EXPERIMENTS
from hklab_lib.preset_manager import PresetManager

console = Console()


def _print_result(result, indent="   "):
    for error in result.errors:
        console.print(f"{indent}[bold red]Error:[/bold red] {error}")
    for warning in result.warnings:
        console.print(f"{indent}[magenta]Warning:[/magenta] {warning}")


def main():
    parser = argparse.ArgumentParser(description="hklab experiment preset tool")
    parser.add_argument("--presets-path", type=Path, default=PRESETS_PATH, help="Path to presets directory")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")
    subparsers.add_parser("list", help="List all available presets")

    validate_parser = subparsers.add_parser("validate", help="Validate presets")
    validate_parser.add_argument("preset_id", nargs="?", help="Specific preset to validate")

    create_parser = subparsers.add_parser("create", help="Create a new preset template")
    create_parser.add_argument("preset_id", help="Preset ID (used as the file name)")
    create_parser.add_argument("title", help="Preset title")
    create_parser.add_argument("--experiment", choices=EXPERIMENTS, default="w2decay")

    info_parser = subparsers.add_parser("info", help="Show detailed preset information")
    info_parser.add_argument("preset_id", help="Preset ID to show info for")

    args = parser.parse_args()

    if not args.command:
        parser.print_help()
        return

    manager = PresetManager(args.presets_path)

    if args.command == "list":
        presets = manager.discover_presets()
        if not presets:
            console.print("No presets found.")
            return
        console.print("[bold]Available presets[/bold]")
        for preset in presets:
            console.print(f"[cyan]{preset.id}[/cyan]  {preset.title} ({preset.experiment})")
            console.print(f"   Tags: {', '.join(preset.tags) if preset.tags else 'None'}")
            console.print(f"   {preset.description}")

    elif args.command == "validate":
        preset_ids = [args.preset_id] if args.preset_id else [p.id for p in manager.discover_presets()]
        if not preset_ids:
            console.print("No presets found to validate.")
            return
        all_valid = True
        for preset_id in preset_ids:
            result = manager.validate_preset(preset_id)
            status = "[green]ok[/green]" if result.is_valid else "[bold red]invalid[/bold red]"
            console.print(f"{status} {preset_id}")
            _print_result(result)
            all_valid = all_valid and result.is_valid
        if not all_valid:
            sys.exit(1)

    elif args.command == "create":
        try:
            path = manager.create_preset_template(args.preset_id, args.title, args.experiment)
        except LabValidationError as e:
            console.print(f"[bold red]Error creating preset template:[/bold red] {e}")
            sys.exit(1)
        console.print(f"Created preset template: {path}")
        console.print(f"Run 'python preset_tool.py validate {args.preset_id}' after editing it.")

    elif args.command == "info":
        info = manager.get_preset_info(args.preset_id)
        if not info:
            console.print(f"[bold red]Preset '{args.preset_id}' not found.[/bold red]")
            sys.exit(1)
        console.print(f"[bold]{info.title}[/bold]")
        console.print(f"ID: {info.id}")
        console.print(f"Experiment: {info.experiment}")
        console.print(f"Version: {info.version}")
        console.print(f"Tags: {', '.join(info.tags) if info.tags else 'None'}")
        console.print(info.description)
        result = manager.validate_preset(args.preset_id)
        console.print("Validation: " + ("[green]PASSED[/green]" if result.is_valid else "[bold red]FAILED[/bold red]"))
        _print_result(result)


if __name__ == "__main__":
    main()
