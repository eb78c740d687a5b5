"""
Out-of-process model adapter speaking the line protocol over stdin/stdout.

Handshake: engine sends ``HELLO 1 <task> <q>``, adapter answers ``OK <kinds>``.
Request: ``PREDICT <m>`` followed by m comma-separated rows of q numbers.
Response: m lines holding one number each (probability for classifiers, score
for regression) or a single ``ERR <message>`` line aborting the batch.
"""
import logging
import re
import shlex
import subprocess
import sys
import threading
from collections import deque
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from components.base_component import ModelAdapter
from components.errors import AdapterIOError, ContractError
from utils.data_loader import CLASSIFICATION

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
OFFERED_KINDS = ("score", "probability")


def _format_row(row: np.ndarray) -> str:
    return ",".join(format(value, ".17g") for value in row)


def resolve_command(command: Union[str, Sequence[str]]) -> List[str]:
    """Split a command line; a bare ``.py`` path runs under the current interpreter"""
    parts = shlex.split(command) if isinstance(command, str) else [str(part) for part in command]
    if not parts:
        raise ContractError("empty external model command")
    if parts[0].endswith(".py"):
        parts = [sys.executable, str(Path(parts[0]))] + parts[1:]
    return parts


class ExternalModel(ModelAdapter):
    """A model served by a child process; one lock serializes every exchange"""

    kind = "external"
    supports_concurrent_predict = False

    def __init__(self, command: Union[str, Sequence[str]], task: str, feature_names: Sequence[str],
                 label_threshold: float = 0.5):
        super().__init__(task, feature_names, label_threshold)
        self.command = resolve_command(command)
        self._lock = threading.Lock()
        self._stderr: Deque[str] = deque(maxlen=50)
        try:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise AdapterIOError(f"cannot start external model {self.command}: {e}")
        self._stderr_reader = threading.Thread(target=self._drain_stderr, daemon=True)
        self._stderr_reader.start()
        try:
            self.kinds = self._handshake()
        except (AdapterIOError, ContractError):
            self.close()
            raise
        logger.info(f"External model ready: {' '.join(self.command)} offers {', '.join(self.kinds)}")

    @property
    def diagnostics(self) -> str:
        return "\n".join(self._stderr)

    def _drain_stderr(self) -> None:
        for line in self._process.stderr:
            self._stderr.append(line.rstrip("\n"))

    def _fail(self, message: str) -> AdapterIOError:
        if self._process.poll() is not None:
            # let the stderr reader catch the child's last words
            self._stderr_reader.join(timeout=1.0)
            message = f"{message} (exit status {self._process.returncode})"
        return AdapterIOError(message, diagnostics=self.diagnostics)

    def _send(self, text: str) -> None:
        try:
            self._process.stdin.write(text)
            self._process.stdin.flush()
        except (BrokenPipeError, OSError, ValueError):
            pass

    def _read_line(self, context: str) -> str:
        line = self._process.stdout.readline()
        if line == "":
            raise self._fail(f"external model closed its output during {context}")
        return line.strip()

    def _handshake(self) -> Tuple[str, ...]:
        self._send(f"HELLO {PROTOCOL_VERSION} {self.task} {self.q}\n")
        reply = self._read_line("handshake")
        if reply.startswith("ERR"):
            raise self._fail(f"external model refused the handshake: {reply[3:].strip()}")
        if not reply.startswith("OK"):
            raise self._fail(f"unexpected handshake reply '{reply}'")
        kinds = tuple(kind for kind in re.split(r"[,\s]+", reply[2:].strip()) if kind)
        unknown = [kind for kind in kinds if kind not in OFFERED_KINDS]
        if unknown:
            raise self._fail(f"external model offers unknown prediction kinds {unknown}")
        needed = "probability" if self.task == CLASSIFICATION else "score"
        if needed not in kinds:
            raise ContractError(f"external {self.task} model must offer '{needed}', offers {list(kinds)}")
        return kinds

    def _exchange(self, rows: np.ndarray) -> np.ndarray:
        request = f"PREDICT {rows.shape[0]}\n" + "".join(_format_row(row) + "\n" for row in rows)
        # a writer thread keeps a large request from deadlocking against the child's output pipe
        writer = threading.Thread(target=self._send, args=(request,), daemon=True)
        writer.start()
        values = np.empty(rows.shape[0])
        try:
            for i in range(rows.shape[0]):
                line = self._read_line(f"a batch of {rows.shape[0]} rows")
                if line.startswith("ERR"):
                    if i > 0:
                        self._abandon()
                    raise self._fail(f"external model rejected the batch: {line[3:].strip()}")
                try:
                    values[i] = float(line)
                except ValueError:
                    self._discard(rows.shape[0] - i - 1)
                    raise self._fail(f"unparseable response line {i + 1}: '{line}'")
        finally:
            writer.join(timeout=5.0)
        return values

    def _discard(self, count: int) -> None:
        """Read past the rest of a broken batch so the next request starts in sync"""
        try:
            for _ in range(count):
                self._read_line("the rest of a broken batch")
        except AdapterIOError:
            self._abandon()

    def _abandon(self) -> None:
        if self._process.poll() is None:
            logger.warning(f"External model {' '.join(self.command)} lost sync with the engine, stopping it")
            self._process.kill()
            self._process.wait()

    def _raw_predict(self, rows: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if rows.shape[0] == 0:
            return np.empty(0), (np.empty(0) if self.is_classifier else None)
        with self._lock:
            if self._process.poll() is not None:
                raise self._fail("external model process is not running")
            values = self._exchange(rows)
        if self.is_classifier:
            return values, values
        return values, None

    def parameters(self) -> Dict[str, Any]:
        return {"command": list(self.command), "kinds": list(self.kinds)}

    def close(self) -> None:
        process = getattr(self, "_process", None)
        if process is None or process.poll() is not None:
            return
        try:
            process.stdin.close()
        except OSError:
            pass
        try:
            process.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            process.kill()
            process.wait()
