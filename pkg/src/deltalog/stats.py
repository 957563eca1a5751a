"""Run statistics: flat monotonic counters with text and JSON serialization.

Counter keys are dotted strings (``rule.0.applications``, ``opt.rr.blocks_pruned``,
``dedup.rows_removed``, ``memo.atoms_memoized`` ...). Counters only ever grow
during a run; absolute values (``facts.<pred>.count``) are written once at the
end of a run.
"""

from __future__ import annotations

import json
from typing import Iterator


class StatsReport:
    def __init__(self) -> None:
        self._values: dict[str, float] = {}

    def incr(self, key: str, amount: float = 1) -> None:
        self._values[key] = self._values.get(key, 0) + float(amount)

    def put(self, key: str, value: float) -> None:
        self._values[key] = float(value)

    def get(self, key: str, default: float = 0) -> float:
        return self._values.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self._values

    def items(self) -> Iterator[tuple[str, float]]:
        return iter(sorted(self._values.items()))

    def as_dict(self) -> dict[str, float]:
        return dict(sorted(self._values.items()))

    def to_text(self) -> str:
        lines = []
        for key, value in self.items():
            if isinstance(value, float) and not value.is_integer():
                lines.append(f"{key} = {value:.3f}")
            else:
                lines.append(f"{key} = {int(value)}")
        return "\n".join(lines) + ("\n" if lines else "")

    def write_text(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as sink:
            sink.write(self.to_text())

    def write_json(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as sink:
            json.dump(self.as_dict(), sink, indent=2, sort_keys=True)
            sink.write("\n")

    @classmethod
    def from_file(cls, path: str) -> "StatsReport":
        """Read back either serialization (key=value text or JSON)."""
        report = cls()
        with open(path, "r", encoding="utf-8") as source:
            text = source.read()
        stripped = text.lstrip()
        if stripped.startswith("{"):
            for key, value in json.loads(text).items():
                report.put(key, float(value))
            return report
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"not a stats line: {raw!r}")
            key, _, value = line.partition("=")
            report.put(key.strip(), float(value.strip()))
        return report
