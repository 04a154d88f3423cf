"""Plan files: a human-readable timeline per satellite and a JSON-lines dump."""

from __future__ import annotations

import json
import re
from pathlib import Path

from .model import Idle, Plan, SlewToAngle, TakeImage, parse_label

_ROW = re.compile(r"^\[(\d+)-(\d+)\]\s+(.+?)\s*$")


def format_command(c) -> str:
    if isinstance(c, TakeImage):
        what = c.label
    elif isinstance(c, SlewToAngle):
        what = "Slew"
    else:
        what = "Idle"
    return f"[{c.start}-{c.end}] {what}"


def timeline_text(plan: Plan, sat: int) -> str:
    return "".join(format_command(c) + "\n" for c in plan.commands.get(sat, []))


def parse_timeline(text: str) -> list:
    """Commands from timeline rows. Credited GPs are not part of this format;
    slew angles are recovered from the images on either side."""
    cmds = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        m = _ROW.match(line)
        if not m:
            raise ValueError(f"line {n}: cannot parse {line!r}")
        start, end, what = int(m.group(1)), int(m.group(2)), m.group(3)
        if what == "Idle":
            cmds.append(Idle(start, end))
        elif what == "Slew":
            cmds.append(SlewToAngle(start, end, None, None))
        else:
            img = TakeImage(start, parse_label(what))
            if img.end != end:
                raise ValueError(f"line {n}: an image lasts exactly {img.end - img.start + 1} seconds")
            cmds.append(img)
    for i, c in enumerate(cmds):
        if isinstance(c, SlewToAngle):
            before = next((p.angle for p in reversed(cmds[:i]) if isinstance(p, TakeImage)), None)
            after = next((p.angle for p in cmds[i + 1:] if isinstance(p, TakeImage)), None)
            cmds[i] = SlewToAngle(c.start, c.end, before, after)
    return cmds


def _command_record(sat, c) -> dict:
    if isinstance(c, TakeImage):
        return {"sat": sat, "type": "image", "start": c.start, "end": c.end, "label": c.label,
                "gps": list(c.gps), "followup": list(c.followup) if c.followup else None}
    if isinstance(c, SlewToAngle):
        return {"sat": sat, "type": "slew", "start": c.start, "end": c.end,
                "from": c.from_angle, "to": c.to_angle}
    return {"sat": sat, "type": "idle", "start": c.start, "end": c.end}


def plan_to_jsonl(plan: Plan) -> str:
    lines = [json.dumps({"type": "plan", "planScore": plan.plan_score, "sats": sorted(plan.commands)})]
    for sat in sorted(plan.commands):
        lines.extend(json.dumps(_command_record(sat, c)) for c in plan.commands[sat])
    return "\n".join(lines) + "\n"


def plan_from_jsonl(text: str) -> Plan:
    plan = None
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        kind = rec.get("type")
        if kind == "plan":
            plan = Plan({s: [] for s in rec.get("sats", [])}, rec["planScore"])
            continue
        if plan is None:
            raise ValueError("plan header must come first")
        if kind == "image":
            fu = rec.get("followup")
            c = TakeImage(rec["start"], parse_label(rec["label"]), tuple(rec["gps"]), tuple(fu) if fu else None)
        elif kind == "slew":
            c = SlewToAngle(rec["start"], rec["end"], rec["from"], rec["to"])
        elif kind == "idle":
            c = Idle(rec["start"], rec["end"])
        else:
            raise ValueError(f"line {n}: unknown record type {kind!r}")
        plan.commands.setdefault(rec["sat"], []).append(c)
    if plan is None:
        raise ValueError("empty plan file")
    return plan


def write_plan(plan: Plan, out_dir) -> list:
    """plan_sat<N>.txt per satellite plus plan.jsonl; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for sat in sorted(plan.commands):
        p = out / f"plan_sat{sat}.txt"
        p.write_text(timeline_text(plan, sat))
        paths.append(p)
    p = out / "plan.jsonl"
    p.write_text(plan_to_jsonl(plan))
    paths.append(p)
    return paths


def read_plan(path) -> Plan:
    path = Path(path)
    if path.is_dir():
        path = path / "plan.jsonl"
    return plan_from_jsonl(path.read_text())
