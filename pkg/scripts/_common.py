"""Turn a dataclass config into a command line and write JSON results."""

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path


def parse_config(cls, argv=None, description=None):
    p = argparse.ArgumentParser(description=description or cls.__doc__)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, type=json.loads, default=default, metavar="true|false")
        elif isinstance(default, (tuple, list)):
            p.add_argument(flag, type=json.loads, default=default, metavar="JSON_LIST")
        else:
            p.add_argument(flag, type=type(default), default=default)
    p.add_argument("--out", type=Path, default=None, help="write JSON here (default: stdout)")
    ns = vars(p.parse_args(argv))
    out = ns.pop("out")
    return cls(**ns), out


def emit(config, result: dict, out: Path | None, started: float):
    doc = {"config": dataclasses.asdict(config), "seconds": round(time.time() - started, 2), **result}
    text = json.dumps(doc, indent=2)
    if out is None:
        sys.stdout.write(text + "\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
