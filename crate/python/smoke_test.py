#!/usr/bin/env python3
"""Smoke test for the Python bindings.

Builds the extension module with cargo, loads it, and exercises each
exported function against the shipped demo3 scenario bundle.

Usage: python3 python/smoke_test.py
"""

import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"


def build_module(dest: Path) -> None:
    subprocess.run(
        ["cargo", "build", "-p", "morphbot-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "debug" / "libmorphbot.so"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, dest / f"morphbot{suffix}")


def main() -> int:
    tmp = Path(tempfile.mkdtemp(prefix="morphbot-smoke-"))
    build_module(tmp)
    sys.path.insert(0, str(tmp))
    import morphbot

    # mission run: demo3 completes with a reconfiguration to Proboscis
    result = morphbot.run_mission(
        scenario=str(DATA / "demo3" / "scenario.toml"),
        spec=str(DATA / "demo3" / "mission.spec"),
        library=str(DATA / "library.toml"),
        plans=str(DATA / "plans" / "plans.toml"),
        seed=0,
    )
    assert result["result"] == "complete", result
    kinds = [e["kind"] for e in result["events"]]
    assert "reconfig_started" in kinds and "mission_complete" in kinds, kinds
    reconf = next(e for e in result["events"] if e["kind"] == "reconfig_started")
    assert reconf["payload"]["to"] == "Proboscis", reconf

    # controller synthesis: spec text in, transition table out
    table = morphbot.synthesize_spec(
        (DATA / "demo3" / "mission.spec").read_text()
    )
    assert "state 0" in table, table
    try:
        morphbot.synthesize_spec(
            "[BINDINGS]\nsys x = explore()\n"
            "[SYS_TRANS]\nalways next(x)\nalways !next(x)\n"
        )
        raise AssertionError("unrealizable spec must raise")
    except ValueError as e:
        assert "unrealizable" in str(e)

    # characterization against the fully observed demo1 map
    char = morphbot.characterize_object(
        str(DATA / "demo1" / "scenario.toml"),
        str(DATA / "library.toml"),
        "pink_block",
    )
    assert char["environment"] == "tunnel", char
    assert char["distance"] > 0.30, char

    # library query
    labels = morphbot.query_library(str(DATA / "library.toml"), "drop", "stairs")
    assert labels == ["Snake.drop"], labels

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
