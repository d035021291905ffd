"""Dataclass configs driven from the command line."""
from __future__ import annotations

import argparse
import dataclasses
import json
from pathlib import Path


def parse(cls, argv=None):
    """Build a ``cls`` instance, one ``--field`` flag per dataclass field."""
    p = argparse.ArgumentParser(description=cls.__doc__)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kind = type(default)
        if kind is bool:
            p.add_argument(f"--{f.name}", type=lambda v: v.lower() in ("1", "true", "yes"), default=default)
        elif kind in (list, tuple):
            p.add_argument(f"--{f.name}", nargs="+", type=type(default[0]) if default else str, default=default)
        else:
            p.add_argument(f"--{f.name}", type=kind, default=default)
    return cls(**vars(p.parse_args(argv)))


def dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
