"""Deterministic discrete-event scheduler."""

import heapq
import itertools
from typing import Callable, Dict, List, Optional, Type

from app.core.errors import SchedulingInPast
from app.core.events import Payload, SimEvent
from app.logger import get_logger

logger = get_logger(__name__)

Handler = Callable[[SimEvent], None]


class Scheduler:
    """Priority queue of events ordered by (fire_at, seq).

    Handlers are registered per payload type and invoked synchronously.
    """

    def __init__(self, start: float = 0.0):
        self.now = start
        self.processed = 0
        self._queue: List[SimEvent] = []
        self._seq = itertools.count()
        self._handlers: Dict[Type, Handler] = {}

    def register_handler(self, payload_type: Type, handler: Handler) -> None:
        self._handlers[payload_type] = handler

    def schedule(self, fire_at: float, payload: Payload) -> SimEvent:
        """Enqueue payload to fire at an absolute simulated time."""
        if fire_at < self.now:
            raise SchedulingInPast(f"cannot schedule at {fire_at:.6f}, now is {self.now:.6f}")
        event = SimEvent(fire_at=fire_at, seq=next(self._seq), payload=payload)
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: float, payload: Payload) -> SimEvent:
        return self.schedule(self.now + delay, payload)

    @property
    def pending(self) -> int:
        return len(self._queue)

    def peek(self) -> Optional[SimEvent]:
        return self._queue[0] if self._queue else None

    def step(self) -> Optional[SimEvent]:
        """Pop and dispatch the next event."""
        if not self._queue:
            return None
        event = heapq.heappop(self._queue)
        self.now = event.fire_at
        handler = self._handlers.get(type(event.payload))
        if handler is None:
            logger.warning(f"No handler for {type(event.payload).__name__}, event dropped")
        else:
            handler(event)
        self.processed += 1
        return event

    def run_until(self, t_end: float) -> int:
        """Process every event with fire_at <= t_end; returns the number processed."""
        if t_end < self.now:
            raise SchedulingInPast(f"cannot run back to {t_end:.6f}, now is {self.now:.6f}")
        count = 0
        while self._queue and self._queue[0].fire_at <= t_end:
            self.step()
            count += 1
        self.now = t_end
        return count
