"""Image generation backends behind one interface.

`MockBackend` is a deterministic stand-in used by the whole test suite: its
output is a pure function of the request's canonical bytes, so digests are
reproducible across processes and platforms. `RemoteDiffusionBackend` speaks
a small JSON-over-HTTP protocol to an external diffusion server.
"""

from __future__ import annotations

import base64
import hashlib
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import httpx

from .errors import BackendError, CapabilityError
from .model import GenerationRequest, ImageBlob, MaskRegion

BlobLoader = Callable[[str], bytes]

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Minimal SplitMix64; emits the output stream as big-endian bytes."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._buf = b""
        self._pos = 0

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def bytes(self, n: int) -> bytes:
        while len(self._buf) - self._pos < n:
            self._buf = self._buf[self._pos :] + self.next_u64().to_bytes(8, "big")
            self._pos = 0
        out = self._buf[self._pos : self._pos + n]
        self._pos += n
        return out


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    kind: str  # "mock" | "remote_diffusion"
    endpoint: Optional[str] = None
    capabilities: frozenset = frozenset()

    def __post_init__(self):
        if self.kind == "remote_diffusion" and not self.endpoint:
            raise BackendError("remote backend requires an endpoint")


class BackendHandle(Protocol):
    def result(self, timeout: Optional[float] = None) -> ImageBlob: ...

    def cancel(self) -> None: ...


class Backend(Protocol):
    descriptor: BackendDescriptor

    def submit(self, request: GenerationRequest) -> BackendHandle: ...


def check_capabilities(descriptor: BackendDescriptor, request: GenerationRequest) -> None:
    """Reject a request needing capabilities the backend lacks, before any I/O."""
    needed = set()
    if request.mask is not None:
        needed.add("inpaint")
    if request.control_image is not None:
        needed.add("control_image")
    if request.base_image is not None:
        needed.add("img2img")
    missing = needed - set(descriptor.capabilities)
    if missing:
        raise CapabilityError(
            f"backend {descriptor.name!r} lacks capabilities: {sorted(missing)}"
        )


def mock_generate(request: GenerationRequest, load_blob: BlobLoader) -> ImageBlob:
    """Deterministic generator, normative for every golden test.

    Noise pixels come from a SplitMix64 stream seeded with the first 8 bytes
    (big-endian) of the SHA-256 of the canonical request. With a mask, base
    pixels are copied verbatim wherever the mask bit is 0; without a mask a
    present base image is blended per channel at `params.strength`, rounding
    half-up.
    """
    canonical = request.canonical_bytes()
    digest = hashlib.sha256(canonical).digest()
    rng = SplitMix64(int.from_bytes(digest[:8], "big"))

    w, h = request.width, request.height
    out = bytearray(w * h * 4)
    for i in range(w * h):
        r, g, b = rng.bytes(3)
        out[i * 4 : i * 4 + 4] = bytes((r, g, b, 255))

    if request.base_image is not None:
        base = ImageBlob.from_encoded(load_blob(request.base_image)).pixels()
        if len(base) != len(out):
            raise BackendError("base image dimensions do not match request canvas")
        if request.mask is not None:
            mask = MaskRegion.from_png(load_blob(request.mask))
            if (mask.width, mask.height) != (w, h):
                raise BackendError("mask dimensions do not match request canvas")
            for i in range(w * h):
                if not mask.get(i % w, i // w):
                    out[i * 4 : i * 4 + 4] = base[i * 4 : i * 4 + 4]
        else:
            s = request.params.strength
            for i in range(len(out)):
                out[i] = int(base[i] * (1.0 - s) + out[i] * s + 0.5)

    return ImageBlob.from_pixels(bytes(out), w, h)


class _ImmediateHandle:
    def __init__(self, compute: Callable[[], ImageBlob]):
        self._compute = compute
        self._result: Optional[ImageBlob] = None

    def result(self, timeout: Optional[float] = None) -> ImageBlob:
        if self._result is None:
            self._result = self._compute()
        return self._result

    def cancel(self) -> None:
        pass


class MockBackend:
    """In-process deterministic backend declaring every capability."""

    def __init__(self, load_blob: BlobLoader):
        self.descriptor = BackendDescriptor(
            name="mock",
            kind="mock",
            capabilities=frozenset({"control_image", "inpaint", "img2img"}),
        )
        self._load_blob = load_blob

    def submit(self, request: GenerationRequest) -> BackendHandle:
        check_capabilities(self.descriptor, request)
        return _ImmediateHandle(lambda: mock_generate(request, self._load_blob))


class _RemoteHandle:
    def __init__(self, client: httpx.Client, endpoint: str, job_id: str, timeout: float):
        self._client = client
        self._endpoint = endpoint
        self.job_id = job_id
        self._timeout = timeout

    def result(self, timeout: Optional[float] = None) -> ImageBlob:
        deadline = time.monotonic() + (timeout if timeout is not None else self._timeout)
        url = f"{self._endpoint}/v1/jobs/{self.job_id}"
        while True:
            try:
                resp = self._client.get(url)
                resp.raise_for_status()
                body = resp.json()
            except httpx.HTTPError as exc:
                raise BackendError(f"remote backend unreachable: {exc}")
            state = body.get("state")
            if state == "done":
                try:
                    data = base64.b64decode(body["image_b64"])
                except (KeyError, ValueError):
                    raise BackendError("malformed done response: missing image")
                return ImageBlob.from_encoded(data)
            if state == "failed":
                raise BackendError(body.get("error") or "remote generation failed")
            if state not in ("queued", "running"):
                raise BackendError(f"malformed job state {state!r}")
            if time.monotonic() >= deadline:
                self.cancel()
                raise BackendError("timeout")
            time.sleep(0.2)

    def cancel(self) -> None:
        try:
            self._client.delete(f"{self._endpoint}/v1/jobs/{self.job_id}")
        except httpx.HTTPError:
            pass


class RemoteDiffusionBackend:
    """Client for the external diffusion server wire protocol.

    POST /v1/generate -> 202 {job_id}; GET /v1/jobs/{id} polls until a
    terminal state; DELETE cancels. Images travel base64-encoded.
    """

    def __init__(
        self,
        endpoint: str,
        load_blob: BlobLoader,
        capabilities: frozenset = frozenset({"control_image", "inpaint", "img2img"}),
        timeout: float = 120.0,
        client: Optional[httpx.Client] = None,
    ):
        self.descriptor = BackendDescriptor(
            name="remote", kind="remote_diffusion", endpoint=endpoint,
            capabilities=capabilities,
        )
        self._endpoint = endpoint.rstrip("/")
        self._load_blob = load_blob
        self._timeout = timeout
        self._client = client or httpx.Client(timeout=30.0)

    def wire_body(self, request: GenerationRequest) -> dict:
        body = {
            "stage": request.stage.label,
            "prompt": request.prompt,
            "seed": request.seed,
            "strength": request.params.strength,
            "width": request.width,
            "height": request.height,
        }
        if request.negative_prompt is not None:
            body["negative_prompt"] = request.negative_prompt
        if request.control_image is not None:
            body["control_strength"] = request.params.control_strength
        for key, digest in (
            ("base_image_b64", request.base_image),
            ("mask_b64", request.mask),
            ("control_image_b64", request.control_image),
        ):
            if digest is not None:
                body[key] = base64.b64encode(self._load_blob(digest)).decode("ascii")
        return body

    def submit(self, request: GenerationRequest) -> BackendHandle:
        check_capabilities(self.descriptor, request)
        try:
            resp = self._client.post(
                f"{self._endpoint}/v1/generate", json=self.wire_body(request)
            )
            resp.raise_for_status()
            job_id = resp.json()["job_id"]
        except httpx.HTTPStatusError as exc:
            detail = exc.response.text[:500]
            raise BackendError(f"remote backend error {exc.response.status_code}: {detail}")
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise BackendError(f"remote backend unreachable: {exc}")
        return _RemoteHandle(self._client, self._endpoint, job_id, self._timeout)
