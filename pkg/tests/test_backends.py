import base64
import json
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mock_oracle import canonical_request_bytes, noise_pixels
from sakugaflow.backends import (
    BackendDescriptor,
    MockBackend,
    RemoteDiffusionBackend,
    SplitMix64,
    check_capabilities,
    mock_generate,
)
from sakugaflow.errors import BackendError, CapabilityError
from sakugaflow.model import (
    GenerationParams,
    GenerationRequest,
    ImageBlob,
    MaskRegion,
    StageKind,
)

# frozen from the oracle: first pixels of the 16x16 rough fixture below
FIXTURE_PIXEL_PREFIX = bytes.fromhex("3d27d5ffa4d9feff70c67eff")


def simple_request(**overrides):
    kwargs = dict(
        stage=StageKind.ROUGH,
        prompt="rough sketch of fantasy character",
        seed=7,
        params=GenerationParams(),
        width=16,
        height=16,
    )
    kwargs.update(overrides)
    return GenerationRequest(**kwargs)


class _Blobs(dict):
    def loader(self, digest):
        return self[digest]


class TestMockGenerate:
    def test_matches_independent_oracle(self):
        request = simple_request()
        canon = canonical_request_bytes(
            stage="rough", prompt=request.prompt, seed=7, width=16, height=16
        )
        assert request.canonical_bytes() == canon
        expected = noise_pixels(canon, 16, 16)
        blob = mock_generate(request, lambda d: b"")
        assert blob.pixels() == expected
        assert expected[:12] == FIXTURE_PIXEL_PREFIX

    def test_pure_function(self):
        a = mock_generate(simple_request(), lambda d: b"")
        b = mock_generate(simple_request(), lambda d: b"")
        assert a.data == b.data
        assert a.digest == b.digest

    def test_different_seed_different_output(self):
        a = mock_generate(simple_request(), lambda d: b"")
        b = mock_generate(simple_request(seed=8), lambda d: b"")
        assert a.digest != b.digest

    def test_strength_zero_blend_is_identity(self):
        base = ImageBlob.from_pixels(bytes((i * 13) % 256 for i in range(16 * 16 * 4)), 16, 16)
        blobs = _Blobs({base.digest: base.data})
        request = simple_request(
            stage=StageKind.LINE,
            base_image=base.digest,
            params=GenerationParams(strength=0.0),
        )
        out = mock_generate(request, blobs.loader)
        assert out.pixels() == base.pixels()

    def test_blend_rounding_half_up(self):
        base_rgba = bytes((10, 20, 30, 255)) * 4
        base = ImageBlob.from_pixels(base_rgba, 2, 2)
        blobs = _Blobs({base.digest: base.data})
        request = simple_request(
            stage=StageKind.LINE, width=2, height=2,
            base_image=base.digest, params=GenerationParams(strength=0.5),
        )
        noise = noise_pixels(request.canonical_bytes(), 2, 2)
        out = mock_generate(request, blobs.loader).pixels()
        for i in range(len(out)):
            assert out[i] == int(base_rgba[i] * 0.5 + noise[i] * 0.5 + 0.5)

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_inpaint_locality_random_masks(self, data):
        w = h = 8
        base = ImageBlob.from_pixels(bytes((i * 31) % 256 for i in range(w * h * 4)), w, h)
        blobs = _Blobs({base.digest: base.data})
        flags = data.draw(st.lists(st.booleans(), min_size=w * h, max_size=w * h))
        if not any(flags):
            flags[0] = True
        mask = MaskRegion.from_bools(w, h, flags)
        mask_digest = "m" * 64
        blobs[mask_digest] = mask.to_png()
        request = simple_request(
            stage=StageKind.LINE, width=w, height=h,
            base_image=base.digest, mask=mask_digest,
        )
        out = mock_generate(request, blobs.loader).pixels()
        base_px = base.pixels()
        for i in range(w * h):
            if not flags[i]:
                assert out[i * 4 : i * 4 + 4] == base_px[i * 4 : i * 4 + 4]

    def test_completes_quickly_at_64(self):
        request = simple_request(width=64, height=64)
        start = time.monotonic()
        MockBackend(lambda d: b"").submit(request).result()
        assert time.monotonic() - start < 0.05


class TestCanonicalization:
    FIELD_TWEAKS = {
        "prompt": {"prompt": "other"},
        "seed": {"seed": 8},
        "width": {"width": 17},
        "height": {"height": 17},
        "negative_prompt": {"negative_prompt": "blurry"},
        "params": {"params": GenerationParams(strength=0.5)},
        "control_image": {"control_image": "c" * 64},
        "stage": {"stage": StageKind.LINE, "base_image": None},
    }

    @pytest.mark.parametrize("field", sorted(FIELD_TWEAKS))
    def test_injective_per_field(self, field):
        base = simple_request()
        changed = simple_request(**self.FIELD_TWEAKS[field])
        assert base.canonical_bytes() != changed.canonical_bytes()

    def test_digest_is_sha256_of_canonical(self):
        import hashlib

        request = simple_request()
        assert request.digest() == hashlib.sha256(request.canonical_bytes()).hexdigest()


class TestSplitMix64:
    def test_known_stream_contiguous(self):
        # byte extraction must be a contiguous view of the u64 output stream
        a = SplitMix64(1234)
        chunks = a.bytes(3) + a.bytes(5) + a.bytes(8)
        b = SplitMix64(1234)
        whole = b.bytes(16)
        assert chunks == whole


class TestCapabilities:
    def test_mask_to_capability_less_backend(self):
        calls = []

        def transport(request):
            calls.append(request)
            return httpx.Response(202, json={"job_id": "x"})

        backend = RemoteDiffusionBackend(
            "http://sd.example",
            lambda d: b"png",
            capabilities=frozenset({"img2img"}),
            client=httpx.Client(transport=httpx.MockTransport(transport)),
        )
        request = simple_request(
            stage=StageKind.LINE, base_image="b" * 64, mask="m" * 64
        )
        with pytest.raises(CapabilityError):
            backend.submit(request)
        assert calls == []  # rejected before any network traffic

    def test_descriptor_requires_endpoint(self):
        with pytest.raises(BackendError):
            BackendDescriptor(name="r", kind="remote_diffusion")

    def test_mock_declares_all(self):
        backend = MockBackend(lambda d: b"")
        assert backend.descriptor.capabilities == {"control_image", "inpaint", "img2img"}


class TestRemoteBackend:
    def _backend(self, handler, blobs=None, timeout=120.0):
        blobs = blobs or {}
        return RemoteDiffusionBackend(
            "http://sd.example",
            lambda d: blobs[d],
            timeout=timeout,
            client=httpx.Client(transport=httpx.MockTransport(handler)),
        )

    def test_happy_path_polls_to_done(self):
        result = ImageBlob.from_pixels(b"\x01\x02\x03\xff" * 16, 4, 4)
        states = iter(["queued", "running", "done"])

        def handler(request):
            if request.method == "POST":
                body = json.loads(request.content)
                assert body["stage"] == "rough"
                assert body["seed"] == 7
                return httpx.Response(202, json={"job_id": "job-1"})
            state = next(states)
            payload = {"state": state}
            if state == "done":
                payload["image_b64"] = base64.b64encode(result.data).decode()
            return httpx.Response(200, json=payload)

        blob = self._backend(handler).submit(simple_request()).result()
        assert blob.data == result.data

    def test_control_image_in_wire_body(self):
        blobs = {"c" * 64: b"control-bytes"}
        seen = {}

        def handler(request):
            if request.method == "POST":
                seen.update(json.loads(request.content))
                return httpx.Response(202, json={"job_id": "j"})
            return httpx.Response(200, json={"state": "failed", "error": "stop"})

        backend = self._backend(handler, blobs=blobs)
        request = simple_request(
            control_image="c" * 64, params=GenerationParams(control_strength=0.4)
        )
        handle = backend.submit(request)
        assert base64.b64decode(seen["control_image_b64"]) == b"control-bytes"
        assert seen["control_strength"] == 0.4
        with pytest.raises(BackendError):
            handle.result()

    def test_server_error_surfaced(self):
        def handler(request):
            return httpx.Response(500, text="gpu on fire")

        with pytest.raises(BackendError, match="gpu on fire"):
            self._backend(handler).submit(simple_request())

    def test_failed_state_carries_message(self):
        def handler(request):
            if request.method == "POST":
                return httpx.Response(202, json={"job_id": "j"})
            return httpx.Response(200, json={"state": "failed", "error": "oom"})

        handle = self._backend(handler).submit(simple_request())
        with pytest.raises(BackendError, match="oom"):
            handle.result()

    def test_timeout_cancels_job(self):
        deleted = []

        def handler(request):
            if request.method == "POST":
                return httpx.Response(202, json={"job_id": "j"})
            if request.method == "DELETE":
                deleted.append(str(request.url))
                return httpx.Response(200, json={})
            return httpx.Response(200, json={"state": "running"})

        handle = self._backend(handler, timeout=0.01).submit(simple_request())
        with pytest.raises(BackendError, match="timeout"):
            handle.result()
        assert deleted and deleted[0].endswith("/v1/jobs/j")

    def test_unreachable(self):
        def handler(request):
            raise httpx.ConnectError("down")

        with pytest.raises(BackendError, match="unreachable"):
            self._backend(handler).submit(simple_request())
