"""Output directory bookkeeping: hashed CSV headers, SVG plots, the run manifest."""
from __future__ import annotations

import hashlib
import io
import os
import time
from pathlib import Path

from . import __version__


class OutputSet:
    """Tracks every file written by one run so a failure can remove them all."""

    def __init__(self, directory: Path, config_hash: str, reproducible: bool = False):
        self.dir = Path(directory)
        self.config_hash = config_hash
        self.reproducible = reproducible
        self.files: list[Path] = []
        self.started = time.time()

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(p)
        return p

    def csv(self, name: str, writer) -> Path:
        """``writer(fh)`` emits the header row and records."""
        buf = io.StringIO()
        buf.write(f"# config_hash: {self.config_hash}\n")
        writer(buf)
        p = self._path(name)
        p.write_text(buf.getvalue())
        return p

    def text(self, name: str, writer) -> Path:
        buf = io.StringIO()
        writer(buf)
        p = self._path(name)
        p.write_text(buf.getvalue())
        return p

    def svg(self, name: str, draw) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        matplotlib.rcParams["svg.hashsalt"] = "ergolab"
        fig, ax = plt.subplots(figsize=(6, 4))
        draw(ax)
        fig.tight_layout()
        p = self._path(name)
        meta = {"Date": None} if self.reproducible else {}
        fig.savefig(p, format="svg", metadata=meta)
        plt.close(fig)
        return p

    def discard(self):
        for p in self.files:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.files.clear()

    def manifest(self) -> Path:
        lines = [
            f"config_hash = {self.config_hash}",
            f"tool_version = {__version__}",
            f"wall_clock_seconds = {time.time() - self.started:.3f}",
        ]
        for p in self.files:
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            lines.append(f"file.{p.name} = {digest}")
        p = self.dir / "manifest.txt"
        p.write_text("\n".join(lines) + "\n")
        return p


def resolve_out(flag: str | None, config_dir: str | None) -> Path:
    """--out flag, then $ERGOLAB_OUT, then [output] dir, then ./ergolab_out."""
    if flag:
        return Path(flag)
    env = os.environ.get("ERGOLAB_OUT")
    if env:
        return Path(env)
    return Path(config_dir or "ergolab_out")
