"""Command-line surface: ``sustaincollect collect --config <file>``.

The config file is JSON with the CollectorConfig fields plus a ``runner``
entry naming the inference callable as ``module:function``; the module
must be importable (e.g. via PYTHONPATH) and the callable, invoked with
no arguments, must yield one ``(generated_tokens, correctness)`` pair per
prompt.

Exit codes: 0 clean, 1 run failure (no output is left behind),
2 bad configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import importlib
import json
import sys
from typing import Any, Callable, Sequence

from . import __version__
from .collector import CollectorConfig, collect

__all__ = ["main"]

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_IO = 3


def _load_runner(spec: str) -> Callable:
    module_name, sep, attr = spec.partition(":")
    if not sep or not module_name or not attr:
        raise ValueError(f"runner must look like 'module:function', got {spec!r}")
    module = importlib.import_module(module_name)
    try:
        runner = getattr(module, attr)
    except AttributeError:
        raise ValueError(f"module {module_name!r} has no attribute {attr!r}") from None
    if not callable(runner):
        raise ValueError(f"runner {spec!r} is not callable")
    return runner


def cmd_collect(args: argparse.Namespace) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw: dict[str, Any] = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{args.config}: config must be a JSON object")
    runner_spec = raw.pop("runner", None)
    if not runner_spec:
        raise ValueError(f"{args.config}: config requires a 'runner' entry (module:function)")
    runner = _load_runner(str(runner_spec))
    config = CollectorConfig.from_dict(raw)
    out = collect(runner, config)
    print(str(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sustaincollect",
        description="Collect inference-run telemetry into sustainability JSONL.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="wrap one run described by a config file")
    p.add_argument("--config", required=True, help="JSON config with identity, power source, runner")
    p.set_defaults(handler=cmd_collect)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, ImportError) as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # runner failures: partial output was refused
        print(f"collection failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
