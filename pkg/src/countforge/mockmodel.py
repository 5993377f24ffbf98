"""Deterministic simulated counter behind the vision-client interface.

Scenes are synthetic point layouts (center + radius per object). The mock
"perceives" a region by counting every object whose disk intersects it, so
an object straddling a tile boundary is counted by both adjacent tiles;
that structural double counting is what makes tile sums overestimate.
Perceived counts saturate above ``saturation_start`` (the model compresses
large counts), which makes whole-image queries underestimate dense scenes.
Multiplicative noise is derived by hashing (seed, scene, region), never
from shared generator state, so replies are bit-stable under concurrency.

Scene images are small bitmaps whose PNG metadata carries the scene id;
tiles cut from them by ``imageops.extract_and_encode`` keep that chunk and
add the tile geometry, which is how the mock recovers what it was shown.
The mock can also be served over HTTP with the exact chat-completions wire
format the real client speaks.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import re
import struct
import threading
from dataclasses import dataclass
from functools import lru_cache
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image, PngImagePlugin

from .client import ModelReply, VisionQuery
from .errors import RegionOutOfBounds, UnknownScene
from .imageops import TileSpec, decode_tile_metadata, full_tile
from .templates import TemplateKind, render

SCENE_METADATA_KEY = "countforge-scene"

_MORE_THAN = re.compile(r"more than (\d[\d,]*)")
_RANKING_MARKER = "rank them in ascending order"


@dataclass(frozen=True)
class SyntheticScene:
    """Point scene: the ground-truth count is the number of objects."""

    width: int
    height: int
    objects: tuple[tuple[float, float, float], ...]
    category: str = "objects"

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene dimensions must be positive")
        for cx, cy, _ in self.objects:
            if not (0 <= cx <= self.width and 0 <= cy <= self.height):
                raise ValueError(f"object center ({cx}, {cy}) outside the scene")

    @property
    def count(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class MockBehaviorProfile:
    """Bias knobs of the simulated counter.

    Perceived counts are the identity up to ``saturation_start`` and are
    compressed with slope ``compression`` beyond it; ``noise_sigma`` is the
    relative standard deviation of the multiplicative noise. The defaults
    are calibrated so that, on dense scenes, whole-image queries
    underestimate roughly four times out of five while 2x2 tile sums
    overestimate at a similar rate.
    """

    saturation_start: float = 12.0
    compression: float = 0.95
    noise_sigma: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.saturation_start <= 0:
            raise ValueError("saturation_start must be positive")
        if not 0 < self.compression < 1:
            raise ValueError("compression must be in (0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def generate_scene(
    count: int,
    width: int,
    height: int,
    radius: float,
    rng: np.random.Generator,
    category: str = "objects",
) -> SyntheticScene:
    """Scene with ``count`` objects placed uniformly at random."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    xs = rng.uniform(0, width, size=count)
    ys = rng.uniform(0, height, size=count)
    objects = tuple(
        (float(x), float(y), float(radius)) for x, y in zip(xs, ys)
    )
    return SyntheticScene(width=width, height=height, objects=objects, category=category)


def _disk_intersects(cx: float, cy: float, r: float, region: TileSpec) -> bool:
    dx = max(region.x - cx, 0.0, cx - (region.x + region.w))
    dy = max(region.y - cy, 0.0, cy - (region.y + region.h))
    return dx * dx + dy * dy <= r * r


@lru_cache(maxsize=4096)
def _object_array(objects: tuple[tuple[float, float, float], ...]) -> np.ndarray:
    return np.asarray(objects, dtype=np.float64)


def regional_true_count(scene: SyntheticScene, region: TileSpec) -> int:
    """Objects whose disk intersects the region (boundary objects count in
    every region they touch)."""
    if not scene.objects:
        return 0
    objects = _object_array(scene.objects)
    cx, cy, r = objects[:, 0], objects[:, 1], objects[:, 2]
    dx = np.maximum(np.maximum(region.x - cx, 0.0), cx - (region.x + region.w))
    dy = np.maximum(np.maximum(region.y - cy, 0.0), cy - (region.y + region.h))
    return int(np.count_nonzero(dx * dx + dy * dy <= r * r))


@lru_cache(maxsize=4096)
def _scene_digest_cached(
    width: int, height: int, category: str, objects: tuple
) -> bytes:
    packed = struct.pack("<ii", width, height)
    packed += category.encode("utf-8")
    packed += b"".join(struct.pack("<ddd", *obj) for obj in objects)
    return hashlib.sha256(packed).digest()


def _scene_digest(scene: SyntheticScene) -> bytes:
    return _scene_digest_cached(
        scene.width, scene.height, scene.category, scene.objects
    )


def _region_noise(scene: SyntheticScene, region: TileSpec, profile: MockBehaviorProfile) -> float:
    material = (
        struct.pack("<q", profile.seed)
        + _scene_digest(scene)
        + struct.pack("<iiii", region.x, region.y, region.w, region.h)
    )
    digest = hashlib.sha256(material).digest()
    gen = np.random.default_rng(int.from_bytes(digest[:16], "little"))
    return float(gen.normal(0.0, profile.noise_sigma))


def mock_count(
    scene: SyntheticScene, region: TileSpec, profile: MockBehaviorProfile
) -> int:
    """Simulated count of one region.

    The true regional count is compressed above the saturation point,
    scaled by deterministic noise, floored to an integer and clamped at
    zero. Flooring (rather than rounding) keeps the noise-free saturated
    estimate strictly below the true count for any compression slope.
    """
    if (
        region.x + region.w > scene.width
        or region.y + region.h > scene.height
    ):
        raise RegionOutOfBounds(
            f"region {region.box()} outside scene {scene.width}x{scene.height}"
        )
    n = regional_true_count(scene, region)
    s, alpha = profile.saturation_start, profile.compression
    perceived = float(n) if n <= s else s + alpha * (n - s)
    if profile.noise_sigma > 0:
        perceived *= 1.0 + _region_noise(scene, region, profile)
    return max(0, math.floor(perceived))


def write_scene_image(scene: SyntheticScene, scene_id: str, path: str | Path) -> None:
    """Render a small bitmap for the scene and tag it with the scene id.

    Pixels are cosmetic (a dot per object center); the id in the PNG
    metadata is what the mock model actually reads.
    """
    canvas = np.full((scene.height, scene.width), 235, dtype=np.uint8)
    for cx, cy, _ in scene.objects:
        px = min(scene.width - 1, int(cx))
        py = min(scene.height - 1, int(cy))
        canvas[py, px] = 20
    info = PngImagePlugin.PngInfo()
    info.add_text(SCENE_METADATA_KEY, scene_id)
    Image.fromarray(canvas, mode="L").save(path, format="PNG", pnginfo=info)


class MockModel:
    """Vision client over a registry of synthetic scenes.

    Counting prompts are answered in the trained-reply shape
    ``a photo of <count> <category>``; threshold prompts ("more than N")
    answer yes/no; ranking prompts answer with the correct ascending order
    of the queried regions' true counts (a perfect ranker, used to verify
    corpus round-trips). With ``exact=True`` every reply uses true counts,
    bypassing the bias profile.
    """

    def __init__(self, profile: MockBehaviorProfile | None = None, exact: bool = False):
        self.profile = profile or MockBehaviorProfile()
        self.exact = exact
        self._scenes: dict[str, SyntheticScene] = {}

    def register(self, scene_id: str, scene: SyntheticScene) -> None:
        self._scenes[scene_id] = scene

    def scene(self, scene_id: str) -> SyntheticScene:
        try:
            return self._scenes[scene_id]
        except KeyError:
            raise UnknownScene(f"no registered scene with id {scene_id!r}") from None

    def _resolve(self, data: bytes) -> tuple[SyntheticScene, TileSpec]:
        text, tile = decode_tile_metadata(data)
        scene_id = text.get(SCENE_METADATA_KEY)
        if not scene_id:
            raise UnknownScene("query image carries no scene id metadata")
        scene = self.scene(scene_id)
        return scene, tile or full_tile(scene.width, scene.height)

    def _estimate(self, scene: SyntheticScene, region: TileSpec) -> int:
        if self.exact:
            return regional_true_count(scene, region)
        return mock_count(scene, region, self.profile)

    def query(self, q: VisionQuery) -> ModelReply:
        resolved = [self._resolve(data) for data, _ in q.images]

        if _RANKING_MARKER in q.prompt:
            counts = [
                regional_true_count(scene, region) for scene, region in resolved
            ]
            order = [
                pos
                for pos, _ in sorted(
                    enumerate(counts, start=1), key=lambda item: (item[1], item[0])
                )
            ]
            text = render(TemplateKind.CRCO_RANK_ANSWER, order=order)
            return ModelReply(text=text, raw={"mock": "ranking"})

        scene, region = resolved[0]
        threshold = _MORE_THAN.search(q.prompt)
        if threshold:
            tau = int(threshold.group(1).replace(",", ""))
            estimate = self._estimate(scene, region)
            return ModelReply(
                text="yes" if estimate > tau else "no", raw={"mock": "threshold"}
            )

        estimate = self._estimate(scene, region)
        text = f"a photo of {estimate} {scene.category}"
        return ModelReply(text=text, raw={"mock": "count"})


_DATA_URL = re.compile(r"^data:(?P<media>[\w/+.-]+);base64,(?P<payload>.*)$", re.S)


def _query_from_chat_body(body: dict) -> VisionQuery:
    messages = body.get("messages") or []
    user = next((m for m in reversed(messages) if m.get("role") == "user"), None)
    if user is None:
        raise ValueError("request has no user message")
    content = user.get("content")
    images: list[tuple[bytes, str]] = []
    prompt = ""
    if isinstance(content, str):
        prompt = content
    else:
        for part in content or []:
            kind = part.get("type")
            if kind == "image_url":
                url = (part.get("image_url") or {}).get("url", "")
                match = _DATA_URL.match(url)
                if not match:
                    raise ValueError("image_url is not a base64 data URL")
                images.append(
                    (base64.b64decode(match.group("payload")), match.group("media"))
                )
            elif kind == "text":
                prompt = part.get("text", "")
    return VisionQuery(
        images=tuple(images),
        prompt=prompt,
        max_tokens=int(body.get("max_tokens", 64)),
        temperature=float(body.get("temperature", 0.0)),
    )


class _MockHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    model: MockModel = None  # set by the server factory

    def log_message(self, *args) -> None:  # keep test output quiet
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            query = _query_from_chat_body(body)
            reply = self.model.query(query)
        except (ValueError, KeyError, UnknownScene, RegionOutOfBounds) as exc:
            self._send_json(400, {"error": {"message": str(exc)}})
            return
        self._send_json(
            200,
            {
                "object": "chat.completion",
                "model": body.get("model", "countforge-mock"),
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": reply.text},
                        "finish_reason": "stop",
                    }
                ],
            },
        )


class MockServer:
    """Serve a MockModel over HTTP on an ephemeral local port."""

    def __init__(self, model: MockModel, host: str = "127.0.0.1", port: int = 0):
        handler = type("BoundMockHandler", (_MockHandler,), {"model": model})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
