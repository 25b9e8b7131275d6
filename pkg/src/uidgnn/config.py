"""key=value configuration files, sectioned manifests and purpose-tagged seed streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import ParameterError

MANIFEST_SECTIONS = ("data", "model", "train", "eval")


def seed_stream(master: int, purpose: str, *extra: int) -> int:
    """Derive an independent 63-bit seed from ``master`` and a purpose tag."""
    words = [int(master) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode()), *(int(x) for x in extra)]
    return int(np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def rng_for(master: int, purpose: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(seed_stream(master, purpose, *extra))


def parse_key_values(text: str, source="<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{source}:{lineno}", f"expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


@dataclass
class Manifest:
    """Experiment manifest: ``[data]``, ``[model]``, ``[train]`` and ``[eval]`` sections."""

    name: str = "experiment"
    seed: int = 0
    sections: dict[str, dict[str, str]] = field(default_factory=lambda: {s: {} for s in MANIFEST_SECTIONS})

    def section(self, name: str) -> dict[str, str]:
        return self.sections.setdefault(name, {})

    def to_text(self) -> str:
        lines = [f"name={self.name}", f"seed={self.seed}"]
        for sec in MANIFEST_SECTIONS:
            lines.append(f"[{sec}]")
            lines.extend(f"{k}={v}" for k, v in self.sections.get(sec, {}).items())
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, source="<string>") -> "Manifest":
        manifest = cls()
        current: str | None = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in MANIFEST_SECTIONS:
                    raise ParameterError(f"{source}:{lineno}", f"unknown section [{current}]")
                continue
            if "=" not in line:
                raise ParameterError(f"{source}:{lineno}", f"expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if current is None:
                if key == "name":
                    manifest.name = value
                elif key == "seed":
                    manifest.seed = int(value)
                else:
                    raise ParameterError(key, "top-level keys are limited to name and seed")
            else:
                manifest.section(current)[key] = value
        return manifest

    @classmethod
    def load(cls, path) -> "Manifest":
        return cls.parse(Path(path).read_text(), path)
