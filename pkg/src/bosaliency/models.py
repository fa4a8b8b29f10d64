"""Black-box scorers: the model gateway.

Every model exposes ``score(image) -> float`` for a fixed target class.
Synthetic models are analytic oracles with known ground truth; the
subprocess and HTTP adapters speak a line-delimited JSON protocol::

    request:  {"id": int, "image": base64(uint8 HxWxC row-major),
               "width": int, "height": int, "channels": int, "target": str}
    response: {"id": int, "score": float}
"""

from __future__ import annotations

import base64
import json
import math
import os
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .image import DEFAULT_FILL, BoundingBox, Image

DEFAULT_TIMEOUT = 30.0
TIMEOUT_ENV = "SALIENCY_MODEL_TIMEOUT_SECS"


class QueryError(RuntimeError):
    """A model query failed; ``payload`` holds whatever raw data came back."""

    def __init__(self, message: str, payload=None):
        super().__init__(message)
        self.payload = payload


@dataclass(frozen=True)
class ScoreDelta:
    base_score: float
    occluded_score: float
    y: float


def resolve_timeout(timeout: float | None = None) -> float:
    if timeout is not None:
        return float(timeout)
    env = os.environ.get(TIMEOUT_ENV)
    if env:
        return float(env)
    return DEFAULT_TIMEOUT


class Model:
    """Base class for black-box scorers.

    Subclasses implement :meth:`_score`. The public :meth:`score` counts
    queries and rejects non-finite results.
    """

    kind = "abstract"

    def __init__(self, target: str = "0", width: int | None = None, height: int | None = None):
        self.target = str(target)
        self.width = width
        self.height = height
        self.n_queries = 0
        self._base: tuple[Image, float] | None = None

    def _score(self, image: Image) -> float:
        raise NotImplementedError

    def score(self, image: Image) -> float:
        if self.width is not None and (image.width, image.height) != (self.width, self.height):
            raise ValueError(
                f"{self.kind} model expects {self.width}x{self.height} input, "
                f"got {image.width}x{image.height}"
            )
        self.n_queries += 1
        value = self._score(image)
        if not math.isfinite(value):
            raise QueryError(f"non-finite score {value!r}", payload=value)
        return value

    def base_score(self, image: Image) -> float:
        # Keyed by object identity: the BO loop reuses one base image.
        if self._base is not None and self._base[0] is image:
            return self._base[1]
        value = self.score(image)
        self._base = (image, value)
        return value

    def config(self) -> dict:
        return {"kind": self.kind, "target": self.target}

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def delta(model: Model, base: Image, occluded: Image) -> ScoreDelta:
    """Score drop ``f(base) - f(occluded)``; the base score is cached per image."""
    if base.shape != occluded.shape:
        raise ValueError(f"shape mismatch: {base.shape} vs {occluded.shape}")
    b = model.base_score(base)
    o = model.score(occluded)
    return ScoreDelta(b, o, b - o)


class SyntheticBoxModel(Model):
    """Score = weighted fraction of box pixels that are not blanked.

    A pixel counts as blanked when every channel equals ``fill`` exactly.
    With one box and weight 1 this is the visible fraction of the box.
    """

    kind = "synthetic-box"

    def __init__(
        self,
        width: int,
        height: int,
        boxes: Sequence[BoundingBox],
        weights: Sequence[float] | None = None,
        fill: float = DEFAULT_FILL,
        target: str = "0",
    ):
        super().__init__(target=target, width=width, height=height)
        boxes = list(boxes)
        if not boxes:
            raise ValueError("at least one box required")
        if weights is None:
            weights = [1.0 / len(boxes)] * len(boxes)
        weights = [float(w) for w in weights]
        if len(weights) != len(boxes):
            raise ValueError("one weight per box required")
        if any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-12):
            raise ValueError(f"weights must be non-negative and sum to 1, got {weights}")
        for box in boxes:
            box.check_within(width, height)
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                if _overlap(a, b):
                    raise ValueError(f"boxes {a} and {b} overlap")
        if len(boxes) == 2:
            self.kind = "synthetic-two-box"
        self.boxes = boxes
        self.weights = weights
        self.fill = float(fill)

    def _score(self, image: Image) -> float:
        total = 0.0
        for box, w in zip(self.boxes, self.weights):
            patch = image.data[box.slices]
            blanked = np.all(patch == self.fill, axis=2)
            visible = box.area - int(np.count_nonzero(blanked))
            total += w * visible / box.area
        return total

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "target": self.target,
            "width": self.width,
            "height": self.height,
            "boxes": [[b.x0, b.y0, b.w, b.h] for b in self.boxes],
            "weights": self.weights,
            "fill": self.fill,
        }


def _overlap(a: BoundingBox, b: BoundingBox) -> bool:
    return (a.x0 < b.x0 + b.w and b.x0 < a.x0 + a.w
            and a.y0 < b.y0 + b.h and b.y0 < a.y0 + a.h)


def make_synthetic_box(width: int, height: int, box: BoundingBox, **kwargs) -> SyntheticBoxModel:
    return SyntheticBoxModel(width, height, [box], [1.0], **kwargs)


def make_synthetic_two_box(
    width: int, height: int, box1: BoundingBox, box2: BoundingBox,
    w1: float, w2: float, **kwargs,
) -> SyntheticBoxModel:
    return SyntheticBoxModel(width, height, [box1, box2], [w1, w2], **kwargs)


def encode_request(req_id: int, image: Image, target: str) -> dict:
    return {
        "id": req_id,
        "image": base64.b64encode(image.to_uint8().tobytes()).decode("ascii"),
        "width": image.width,
        "height": image.height,
        "channels": image.channels,
        "target": target,
    }


def decode_request(req: dict) -> Image:
    """Inverse of :func:`encode_request`, for writing model workers."""
    raw = base64.b64decode(req["image"])
    shape = (int(req["height"]), int(req["width"]), int(req["channels"]))
    arr = np.frombuffer(raw, dtype=np.uint8)
    if arr.size != shape[0] * shape[1] * shape[2]:
        raise ValueError(f"payload has {arr.size} bytes, expected {shape}")
    return Image.from_uint8(arr.reshape(shape))


def parse_response(raw, req_id: int) -> float:
    try:
        resp = json.loads(raw)
        if resp.get("id") != req_id:
            raise QueryError(f"response id {resp.get('id')!r} does not match request {req_id}", payload=raw)
        value = float(resp["score"])
    except QueryError:
        raise
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        raise QueryError(f"malformed response: {exc}", payload=raw) from exc
    if not math.isfinite(value):
        raise QueryError(f"non-finite score {value!r}", payload=raw)
    return value


class SubprocessModel(Model):
    """Talks to a long-running worker over stdin/stdout, one request in flight."""

    kind = "subprocess"

    def __init__(self, argv: Sequence[str] | str, target: str = "0", timeout: float | None = None):
        super().__init__(target=target)
        self.argv = shlex.split(argv) if isinstance(argv, str) else list(argv)
        self.timeout = resolve_timeout(timeout)
        self._lock = threading.Lock()
        self._next_id = 0
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()

    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise QueryError(f"cannot start model process {self.argv!r}: {exc}") from exc
        threading.Thread(target=self._pump, args=(self._proc.stdout,), daemon=True).start()

    def _pump(self, stream) -> None:
        for line in stream:
            self._lines.put(line)
        self._lines.put(None)

    def _score(self, image: Image) -> float:
        with self._lock:
            if self._proc is None:
                self._start()
            req_id = self._next_id
            self._next_id += 1
            try:
                self._proc.stdin.write(json.dumps(encode_request(req_id, image, self.target)) + "\n")
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise QueryError(f"cannot write to model process: {exc}") from exc
            while True:
                try:
                    line = self._lines.get(timeout=self.timeout)
                except queue.Empty:
                    raise QueryError(f"model process timed out after {self.timeout}s") from None
                if line is None:
                    raise QueryError(f"model process exited (code {self._proc.poll()})")
                if line.strip():
                    return parse_response(line, req_id)

    def config(self) -> dict:
        return {"kind": self.kind, "target": self.target, "argv": self.argv, "timeout": self.timeout}

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
            self._proc = None


class HttpModel(Model):
    """POSTs the request JSON to ``url`` and reads the same response schema."""

    kind = "http"

    def __init__(self, url: str, target: str = "0", timeout: float | None = None):
        super().__init__(target=target)
        self.url = url
        self.timeout = resolve_timeout(timeout)
        self._lock = threading.Lock()
        self._next_id = 0

    def _score(self, image: Image) -> float:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            body = json.dumps(encode_request(req_id, image, self.target)).encode()
            req = urllib.request.Request(
                self.url, data=body, headers={"Content-Type": "application/json"}, method="POST",
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    raw = resp.read().decode()
            except urllib.error.HTTPError as exc:
                raise QueryError(f"HTTP {exc.code} from {self.url}", payload=exc.read()) from exc
            except (urllib.error.URLError, OSError) as exc:
                raise QueryError(f"cannot reach {self.url}: {exc}") from exc
            return parse_response(raw, req_id)

    def config(self) -> dict:
        return {"kind": self.kind, "target": self.target, "url": self.url, "timeout": self.timeout}


def parse_synthetic_spec(spec: str, width: int, height: int, **kwargs) -> SyntheticBoxModel:
    """Build a synthetic model from ``box=x0,y0,w,h[;box=...][;weights=a,b]``."""
    boxes, weights = [], None
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        key, _, val = part.partition("=")
        nums = [x for x in val.split(",") if x.strip()]
        if key == "box":
            if len(nums) != 4:
                raise ValueError(f"box needs 4 integers, got {val!r}")
            boxes.append(BoundingBox(*(int(x) for x in nums)))
        elif key == "weights":
            weights = [float(x) for x in nums]
        else:
            raise ValueError(f"unknown synthetic model key {key!r}")
    return SyntheticBoxModel(width, height, boxes, weights, **kwargs)


def model_from_spec(spec: str, width: int, height: int, target: str = "0",
                    fill: float = DEFAULT_FILL, timeout: float | None = None) -> Model:
    """Parse ``synthetic:<spec>``, ``cmd:<argv>`` or ``url:<url>``."""
    kind, sep, rest = spec.partition(":")
    if not sep:
        raise ValueError(f"model spec {spec!r} must start with synthetic:, cmd: or url:")
    if kind == "synthetic":
        return parse_synthetic_spec(rest, width, height, fill=fill, target=target)
    if kind == "cmd":
        return SubprocessModel(rest, target=target, timeout=timeout)
    if kind == "url":
        return HttpModel(rest, target=target, timeout=timeout)
    raise ValueError(f"unknown model kind {kind!r}")
