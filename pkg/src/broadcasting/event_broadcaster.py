from typing import Dict, Any, Optional, List
from datetime import datetime
import asyncio
import logging
from enum import Enum

logger = logging.getLogger(__name__)


class EventType(Enum):
    # Run events
    RUN_STARTED = "run_started"
    RUN_COMPLETED = "run_completed"
    FILE_WRITTEN = "file_written"

    # Sweep events
    SWEEP_STARTED = "sweep_started"
    SWEEP_POINT_COMPLETED = "sweep_point_completed"

    # System events
    ERROR = "error"


class EventBroadcaster:
    def __init__(self):
        self.listeners: List[asyncio.Queue] = []

    def add_listener(self, queue: asyncio.Queue):
        """Listener queues are unbounded; broadcast never waits on them"""
        self.listeners.append(queue)

    def remove_listener(self, queue: asyncio.Queue):
        if queue in self.listeners:
            self.listeners.remove(queue)

    async def broadcast(self, event_type: EventType, data: Dict[str, Any], job_id: Optional[str] = None):
        """Broadcast structured event to all listeners"""
        event = {
            "timestamp": datetime.now().isoformat(),
            "type": event_type.value,
            "job_id": job_id,
            "data": data,
        }

        for queue in self.listeners:
            queue.put_nowait(event)


async def log_events(queue: asyncio.Queue):
    """Listener that forwards every event to the log until cancelled"""
    while True:
        event = await queue.get()
        level = logging.ERROR if event["type"] == EventType.ERROR.value else logging.INFO
        label = f"[{event['job_id']}] " if event["job_id"] else ""
        logger.log(level, f"{label}{event['type']}: {event['data']}")
        queue.task_done()


# Global broadcaster instance
event_broadcaster = EventBroadcaster()
