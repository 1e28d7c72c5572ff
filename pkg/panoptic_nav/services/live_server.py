"""
Live TCP server: clients stream FRAME messages and receive FEEDBACK messages.

Per connection a reader task parses the stream into a capacity-1 latest-wins
slot, a processor task runs the stages on the newest waiting frame, and a
single writer task owns the outgoing direction (SCHEMA on connect, FEEDBACK per
processed frame, HEARTBEAT after each idle interval). Every connection gets a
fresh feedback scheduler, so suppression never leaks between sessions.
"""

import asyncio
import time
from typing import Optional, Set

from panoptic_nav.models.frame import MessageType
from panoptic_nav.models.pipeline import PipelineConfig, TimingReport
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.feedback_scheduler import FeedbackScheduler
from panoptic_nav.services.frame_codec import decode_frame
from panoptic_nav.services.pipeline import STAGES, FrameProcessor, FrameWork, TimingAccumulator
from panoptic_nav.services.wire_protocol import (
    MAX_PAYLOAD_BYTES, MessageReader, feedback_payload, frame_message, heartbeat_message, schema_payload
)
from panoptic_nav.utils.exceptions import BasePanopticException
from panoptic_nav.utils.logger import get_logger, log_event

logger = get_logger(__name__)

READ_CHUNK = 65536


class LatestSlot:
    """Capacity-1 asyncio hand-off; a newer frame replaces an unprocessed one."""

    def __init__(self):
        self._item: Optional[FrameWork] = None
        self._event = asyncio.Event()
        self.dropped = 0

    def put(self, work: FrameWork) -> None:
        if self._item is not None:
            self.dropped += 1
        self._item = work
        self._event.set()

    async def get(self) -> FrameWork:
        while self._item is None:
            self._event.clear()
            await self._event.wait()
        work, self._item = self._item, None
        return work

    @property
    def pending(self) -> bool:
        return self._item is not None


class LiveSession:
    """State of one client connection."""

    def __init__(self, server: "LiveServer", reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self.server = server
        self.reader = reader
        self.writer = writer
        self.peer = writer.get_extra_info("peername")
        self.slot = LatestSlot()
        self.outbox: asyncio.Queue = asyncio.Queue()
        self.scheduler = FeedbackScheduler(server.config.feedback)
        self.timing = TimingAccumulator("latest-wins")
        self.stream = MessageReader(server.max_payload, source="server")
        self.busy = False

    async def run(self) -> None:
        log_event("server", "info", f"Connection opened from {self.peer}")
        await self.outbox.put(frame_message(schema_payload(self.server.schema), MessageType.SCHEMA))
        tasks = [
            asyncio.create_task(self._write_loop()),
            asyncio.create_task(self._process_loop()),
        ]
        try:
            await self._read_loop()
        finally:
            # finish the waiting frame and flush queued feedback before the writer stops
            await self._settle()
            await self._drain()
            for task in tasks:
                task.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)
            self.timing.dropped = self.slot.dropped
            self.server.record_timing(self.timing.report())
            self.writer.close()
            try:
                await self.writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            log_event("server", "info", f"Connection closed from {self.peer}",
                      {"frames_in": self.timing.frames_in, "dropped": self.slot.dropped,
                       "errors": self.timing.errors})

    async def _read_loop(self) -> None:
        while True:
            try:
                chunk = await self.reader.read(READ_CHUNK)
            except (ConnectionError, OSError):
                break
            if not chunk:
                break
            for message in self.stream.feed(chunk):
                if message.msg_type != MessageType.FRAME:
                    continue
                try:
                    frame = decode_frame(message.payload)
                except BasePanopticException as e:
                    self.timing.errors += 1
                    log_event("server", "warning", f"Undecodable frame from {self.peer}: {e.detail}")
                    continue
                self.timing.frames_in += 1
                self.slot.put(FrameWork(frame=frame, arrived_us=_now_us()))

    async def _process_loop(self) -> None:
        processor = self.server.processor
        while True:
            work = await self.slot.get()
            self.busy = True
            try:
                for stage in STAGES:
                    began = _now_us()
                    if stage == "feedback":
                        work.events = self.scheduler.step(work.candidates, work.frame.timestamp_us)
                    else:
                        # off the event loop so the reader and heartbeats keep running
                        await asyncio.to_thread(processor.run_stage, stage, work)
                    self.timing.stage_samples[stage].append(_now_us() - began)
                self.timing.end_to_end.append(_now_us() - work.arrived_us)
                await self.outbox.put(frame_message(
                    feedback_payload(work.frame.frame_id, work.events), MessageType.FEEDBACK
                ))
            except BasePanopticException as e:
                self.timing.errors += 1
                log_event("server", "error", f"Frame {work.frame.frame_id} failed: {e.detail}")
            except Exception as e:
                self.timing.errors += 1
                log_event("server", "error", f"Frame {work.frame.frame_id} failed: {str(e)}",
                          {"error": type(e).__name__})
            finally:
                self.busy = False

    async def _write_loop(self) -> None:
        interval = self.server.heartbeat_interval_s
        while True:
            try:
                data = await asyncio.wait_for(self.outbox.get(), timeout=interval)
            except asyncio.TimeoutError:
                data = heartbeat_message()
            self.writer.write(data)
            await self.writer.drain()

    async def _settle(self, timeout_s: float = 2.0) -> None:
        deadline = time.monotonic() + timeout_s
        while (self.slot.pending or self.busy) and time.monotonic() < deadline:
            await asyncio.sleep(0.005)

    async def _drain(self) -> None:
        while not self.outbox.empty() and not self.writer.is_closing():
            try:
                self.writer.write(self.outbox.get_nowait())
                await self.writer.drain()
            except (ConnectionError, OSError):
                break


class LiveServer:
    """
    asyncio TCP server running the pipeline for every connected client.

    Args:
        config: Pipeline settings; the live path always uses latest-wins hand-off
        schema: Label schema sent to clients on connect
        host: Listen address
        port: Listen port (0 picks a free port)
        heartbeat_interval_s: Idle time before a HEARTBEAT is sent
        max_payload: Payload cap for incoming messages
    """

    def __init__(self, config: PipelineConfig, schema: LabelSchema, host: str = "127.0.0.1", port: int = 7878,
                 heartbeat_interval_s: float = 1.0, max_payload: int = MAX_PAYLOAD_BYTES):
        self.config = config
        self.schema = schema
        self.host = host
        self.port = port
        self.heartbeat_interval_s = heartbeat_interval_s
        self.max_payload = max_payload
        self.processor = FrameProcessor(config, schema)
        self.latest_timing: Optional[TimingReport] = None
        self._server: Optional[asyncio.AbstractServer] = None
        self._sessions: Set[asyncio.Task] = set()

    async def start(self) -> int:
        """Start listening; returns the bound port."""
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        log_event("server", "info", f"Listening on {self.host}:{self.port}")
        return self.port

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        """Stop accepting, close sessions and flush their timing."""
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for task in list(self._sessions):
            task.cancel()
        await asyncio.gather(*self._sessions, return_exceptions=True)
        log_event("server", "info", "Server stopped")

    def record_timing(self, report: TimingReport) -> None:
        self.latest_timing = report

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        task = asyncio.current_task()
        self._sessions.add(task)
        try:
            await LiveSession(self, reader, writer).run()
        except asyncio.CancelledError:
            pass
        except Exception as e:
            log_event("server", "error", f"Session failed: {str(e)}")
        finally:
            self._sessions.discard(task)


def _now_us() -> int:
    return int(time.perf_counter() * 1_000_000)

