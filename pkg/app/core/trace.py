"""Line-oriented event trace."""

from pathlib import Path
from typing import List, Optional

from app.core.events import Address, Message

COLUMNS = ("time", "node", "event", "kind", "from", "to", "detail")


def _address(to: Address) -> str:
    if isinstance(to, tuple):
        return ",".join(to) if to else "-"
    return to


class EventTrace:
    """Tab-separated trace lines; identical runs produce identical text."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.lines: List[str] = []

    def record(
        self,
        time: float,
        node: str,
        event: str,
        kind: str = "-",
        sender: str = "-",
        to: str = "-",
        detail: str = "",
    ) -> None:
        if not self.enabled:
            return
        self.lines.append(
            "\t".join((f"{time:.6f}", node or "-", event, kind, sender, to, detail or "-"))
        )

    def message(self, time: float, node: str, event: str, msg: Message, detail: str = "") -> None:
        self.record(time, node, event, msg.kind.value, msg.sender, _address(msg.to), detail)

    def events(self, event: str) -> List[List[str]]:
        """Parsed lines of one event type."""
        return [line.split("\t") for line in self.lines if line.split("\t")[2] == event]

    def text(self) -> str:
        header = "\t".join(COLUMNS)
        return "\n".join([header, *self.lines]) + "\n"

    def write(self, path: str | Path) -> Optional[Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.text(), encoding="utf-8")
        return path
