"""Prompt assembly, providers, and the embedding cache."""

import json
import logging
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from layoutgen.errors import InvalidInputError, ProviderError
from layoutgen.gateway import (
    CachedEmbeddingProvider,
    EchoMockProvider,
    GenerationParams,
    HashEmbeddingProvider,
    NoisyMockProvider,
    OpenAICompatibleProvider,
    PromptBundle,
    ProviderConfig,
    ReplayProvider,
    build_prompt,
    complete,
    embed,
    prompt_hash,
)
from layoutgen.geometry import get_domain
from layoutgen.retrieval import Exemplar
from layoutgen.serde import TaskKind, TypeConstraint, serialize_layout_html
from tests.conftest import make_layout

RICO = get_domain("rico")


def two_exemplars():
    return [
        Exemplar(
            id="a",
            constraint=TypeConstraint(("text",)),
            layout=make_layout(RICO.canvas, [("text", 0, 5, 40, 10)]),
        ),
        Exemplar(
            id="b",
            constraint=TypeConstraint(("image",)),
            layout=make_layout(RICO.canvas, [("image", 10, 30, 60, 60)]),
        ),
    ]


class TestGenerationParams:
    def test_defaults(self):
        params = GenerationParams()
        assert params.num_exemplars == 10
        assert params.num_samples == 10
        assert params.temperature == 0.7
        assert params.seed == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"num_exemplars": -1},
            {"num_samples": 0},
            {"temperature": -0.1},
            {"timeout": 0},
            {"max_retries": -1},
            {"backoff": -1.0},
            {"fan_out": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(InvalidInputError):
            GenerationParams(**kwargs)


class TestBuildPrompt:
    def test_structure_with_headers(self):
        exemplars = two_exemplars()
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=0
        )
        parts = bundle.rendered.split("\n\n")
        assert parts[0] == bundle.preamble
        assert parts[1].startswith("Exemplar 1\n")
        assert parts[2].startswith("Exemplar 2\n")
        assert parts[3].startswith("Test Sample\n")
        assert parts[3].endswith("Element Type Constraint: icon")
        assert bundle.test_block == "Element Type Constraint: icon"

    def test_headers_can_be_dropped(self):
        exemplars = two_exemplars()
        bundle = build_prompt(
            TaskKind.GEN_T,
            RICO,
            exemplars,
            TypeConstraint(("icon",)),
            seed=0,
            include_headers=False,
        )
        assert "Exemplar" not in bundle.rendered
        assert "Test Sample" not in bundle.rendered

    def test_generation_cue_is_appended(self):
        bundle = build_prompt(
            TaskKind.GEN_T,
            RICO,
            two_exemplars(),
            TypeConstraint(("icon",)),
            seed=0,
            generation_cue="<html>",
        )
        assert bundle.rendered.endswith("Element Type Constraint: icon\n<html>")

    def test_empty_cue_adds_nothing(self):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=0
        )
        assert bundle.rendered.endswith("Element Type Constraint: icon")

    def test_same_seed_same_prompt(self):
        a = build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=42
        )
        b = build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=42
        )
        assert a.rendered == b.rendered
        assert prompt_hash(a) == prompt_hash(b)

    def test_seed_controls_exemplar_order(self):
        # Seed 0 leaves two exemplars in place; seed 2 swaps them.
        exemplars = two_exemplars()
        identity = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=0
        )
        swapped = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=2
        )
        assert identity.exemplar_blocks == tuple(reversed(swapped.exemplar_blocks))
        assert identity.rendered != swapped.rendered
        # Headers are positional, so both prompts still read Exemplar 1 then 2.
        for bundle in (identity, swapped):
            assert bundle.rendered.index("Exemplar 1") < bundle.rendered.index(
                "Exemplar 2"
            )

    def test_retrieval_order_is_preserved_on_the_bundle(self):
        exemplars = two_exemplars()
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=2
        )
        assert [ex.id for ex in bundle.exemplars] == ["a", "b"]

    def test_zero_exemplars(self):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, [], TypeConstraint(("icon",)), seed=0
        )
        assert bundle.exemplar_blocks == ()
        assert bundle.rendered == (
            bundle.preamble + "\n\nTest Sample\nElement Type Constraint: icon"
        )

    def test_constraint_kinds_are_checked(self):
        with pytest.raises(InvalidInputError):
            build_prompt(
                TaskKind.GEN_TS, RICO, [], TypeConstraint(("icon",)), seed=0
            )

    def test_prompt_hash_matches_raw_string(self):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=0
        )
        assert prompt_hash(bundle) == prompt_hash(bundle.rendered)
        assert len(prompt_hash(bundle)) == 64


class TestEchoProvider:
    def test_echoes_best_exemplar(self):
        exemplars = two_exemplars()
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=2
        )
        provider = EchoMockProvider()
        results = provider.complete(bundle, GenerationParams(num_samples=3))
        want = serialize_layout_html(exemplars[0].layout)
        assert results == [want, want, want]

    def test_requires_exemplars(self):
        bundle = PromptBundle(
            preamble="", exemplar_blocks=(), test_block="x", rendered="x"
        )
        with pytest.raises(InvalidInputError):
            EchoMockProvider().complete(bundle, GenerationParams())


class TestNoisyProvider:
    def bundle(self):
        return build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=0
        )

    def test_deterministic_per_seed(self):
        provider = NoisyMockProvider()
        params = GenerationParams(num_samples=4, seed=9)
        assert provider.complete(self.bundle(), params) == provider.complete(
            self.bundle(), params
        )

    def test_different_seeds_differ(self):
        provider = NoisyMockProvider()
        a = provider.complete(self.bundle(), GenerationParams(num_samples=4, seed=1))
        b = provider.complete(self.bundle(), GenerationParams(num_samples=4, seed=2))
        assert a != b

    def test_jitter_stays_near_base_and_in_canvas(self):
        from layoutgen.serde import parse_layout_html

        exemplars = two_exemplars()
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, exemplars, TypeConstraint(("icon",)), seed=0
        )
        provider = NoisyMockProvider()
        results = provider.complete(bundle, GenerationParams(num_samples=6, seed=3))
        assert len(results) == 6
        for i, html in enumerate(results):
            base = exemplars[i % 2].layout
            layout, warnings = parse_layout_html(html, RICO)
            assert not warnings
            assert layout.labels() == base.labels()
            for got, orig in zip(layout.elements, base.elements):
                assert abs(got.box.left - orig.box.left) <= 3 + 2  # shift + clamp slack
                assert abs(got.box.top - orig.box.top) <= 3 + 2
                assert abs(got.box.width - orig.box.width) <= 2 + 3
                assert abs(got.box.height - orig.box.height) <= 2 + 3
                assert got.box.right <= RICO.canvas.width
                assert got.box.bottom <= RICO.canvas.height

    def test_requires_exemplars(self):
        bundle = PromptBundle(
            preamble="", exemplar_blocks=(), test_block="x", rendered="x"
        )
        with pytest.raises(InvalidInputError):
            NoisyMockProvider().complete(bundle, GenerationParams())


class TestReplayProvider:
    def fixture_file(self, tmp_path, entries):
        path = tmp_path / "replay.json"
        path.write_text(json.dumps(entries))
        return str(path)

    def test_serves_by_prompt_hash(self, tmp_path):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, two_exemplars(), TypeConstraint(("icon",)), seed=0
        )
        path = self.fixture_file(
            tmp_path,
            [{"prompt_hash": prompt_hash(bundle), "completions": ["one", "two"]}],
        )
        provider = ReplayProvider(path)
        assert provider.complete(bundle, GenerationParams(num_samples=2)) == [
            "one",
            "two",
        ]

    def test_truncates_to_num_samples(self, tmp_path):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, [], TypeConstraint(("icon",)), seed=0
        )
        path = self.fixture_file(
            tmp_path,
            [{"prompt_hash": prompt_hash(bundle), "completions": ["a", "b", "c"]}],
        )
        assert ReplayProvider(path).complete(
            bundle, GenerationParams(num_samples=2)
        ) == ["a", "b"]

    def test_short_fixture_warns_and_returns_all(self, tmp_path, caplog):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, [], TypeConstraint(("icon",)), seed=0
        )
        path = self.fixture_file(
            tmp_path, [{"prompt_hash": prompt_hash(bundle), "completions": ["a"]}]
        )
        with caplog.at_level(logging.WARNING, logger="layoutgen.gateway"):
            got = ReplayProvider(path).complete(
                bundle, GenerationParams(num_samples=5)
            )
        assert got == ["a"]
        assert any("returning all" in r.message for r in caplog.records)

    def test_unknown_prompt_is_an_error(self, tmp_path):
        bundle = build_prompt(
            TaskKind.GEN_T, RICO, [], TypeConstraint(("icon",)), seed=0
        )
        path = self.fixture_file(
            tmp_path, [{"prompt_hash": "0" * 64, "completions": ["a"]}]
        )
        with pytest.raises(ProviderError):
            ReplayProvider(path).complete(bundle, GenerationParams())

    def test_missing_file_is_a_provider_error(self, tmp_path):
        with pytest.raises(ProviderError):
            ReplayProvider(str(tmp_path / "nope.json"))

    def test_malformed_fixture_is_a_provider_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ProviderError):
            ReplayProvider(str(path))
        path.write_text(json.dumps([{"completions": ["a"]}]))
        with pytest.raises(ProviderError):
            ReplayProvider(str(path))


class TestCompleteWrapper:
    def test_wraps_raw_strings(self):
        class Recorder:
            def complete(self, bundle, params):
                self.bundle = bundle
                return ["ok"]

        recorder = Recorder()
        assert complete("raw prompt", GenerationParams(), recorder) == ["ok"]
        assert recorder.bundle.rendered == "raw prompt"

    def test_empty_result_is_an_error(self):
        class Hollow:
            def complete(self, bundle, params):
                return []

        with pytest.raises(ProviderError):
            complete("prompt", GenerationParams(), Hollow())


class TestHashEmbedding:
    def test_unit_norm_and_dimension(self):
        provider = HashEmbeddingProvider()
        vec = provider.embed("a header page for a website")
        assert len(vec) == provider.dimension == 64
        assert math.hypot(*vec) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic(self):
        provider = HashEmbeddingProvider()
        assert provider.embed("same text") == provider.embed("same text")

    def test_case_and_spacing_normalized(self):
        provider = HashEmbeddingProvider()
        assert provider.embed("Hello   World") == provider.embed("hello world")

    def test_different_texts_differ(self):
        provider = HashEmbeddingProvider()
        assert provider.embed("login page") != provider.embed("checkout page")

    def test_similar_texts_score_higher(self):
        from layoutgen.retrieval import text_similarity

        provider = HashEmbeddingProvider()
        query = provider.embed("a header page with three links and a logo")
        near = provider.embed("a header page with four links and a logo")
        far = provider.embed("pricing table comparing subscription tiers")
        assert text_similarity(query, near) > text_similarity(query, far)

    def test_empty_text_rejected(self):
        with pytest.raises(InvalidInputError):
            HashEmbeddingProvider().embed("")
        with pytest.raises(InvalidInputError):
            embed("", HashEmbeddingProvider())


class CountingEmbedder:
    dimension = 4

    def __init__(self):
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return (1.0, 0.0, 0.0, 0.0)


class TestEmbeddingCache:
    def test_second_lookup_hits_cache(self):
        inner = CountingEmbedder()
        cached = CachedEmbeddingProvider(inner)
        assert cached.embed("text") == (1.0, 0.0, 0.0, 0.0)
        assert cached.embed("text") == (1.0, 0.0, 0.0, 0.0)
        assert inner.calls == 1

    def test_distinct_texts_miss(self):
        inner = CountingEmbedder()
        cached = CachedEmbeddingProvider(inner)
        cached.embed("one")
        cached.embed("two")
        assert inner.calls == 2

    def test_persistence_round_trip(self, tmp_path):
        path = str(tmp_path / "cache.json")
        first = CachedEmbeddingProvider(CountingEmbedder(), path=path)
        first.embed("persisted text")
        first.save()

        inner = CountingEmbedder()
        second = CachedEmbeddingProvider(inner, path=path)
        assert second.embed("persisted text") == (1.0, 0.0, 0.0, 0.0)
        assert inner.calls == 0

    def test_corrupt_cache_is_ignored(self, tmp_path, caplog):
        path = tmp_path / "cache.json"
        path.write_text("{broken")
        with caplog.at_level(logging.WARNING, logger="layoutgen.gateway"):
            cached = CachedEmbeddingProvider(CountingEmbedder(), path=str(path))
        assert cached.embed("text") == (1.0, 0.0, 0.0, 0.0)
        assert any("embedding cache" in r.message for r in caplog.records)

    def test_dimension_is_forwarded(self):
        assert CachedEmbeddingProvider(CountingEmbedder()).dimension == 4


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length))
        self.server.seen.append(
            {
                "path": self.path,
                "payload": payload,
                "auth": self.headers.get("Authorization"),
            }
        )
        if self.server.scripted:
            status, body = self.server.scripted.pop(0)
        else:
            status, body = 200, {
                "choices": [{"message": {"content": "<html>\n<body>\n</body>\n</html>"}}]
            }
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep pytest output clean
        pass


@pytest.fixture()
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.seen = []
    server.scripted = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()
    thread.join(timeout=5)


def stub_provider(server):
    return OpenAICompatibleProvider(
        ProviderConfig(base_url=f"http://127.0.0.1:{server.server_address[1]}")
    )


OK_COMPLETION = {"choices": [{"message": {"content": "layout html"}}]}
FAST = dict(backoff=0.0, max_retries=1, num_samples=1, fan_out=1, timeout=5.0)


class TestHttpProvider:
    def bundle(self):
        return PromptBundle(
            preamble="", exemplar_blocks=(), test_block="p", rendered="p"
        )

    def test_successful_completion(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(200, OK_COMPLETION)]
        provider = stub_provider(stub_server)
        got = provider.complete(self.bundle(), GenerationParams(**FAST))
        assert got == ["layout html"]
        request = stub_server.seen[0]
        assert request["path"] == "/v1/chat/completions"
        assert request["auth"] == "Bearer test-key"
        assert request["payload"]["model"] == "gpt-3.5-turbo"
        assert request["payload"]["messages"] == [{"role": "user", "content": "p"}]
        assert request["payload"]["temperature"] == 0.7
        assert request["payload"]["presence_penalty"] == 0
        assert request["payload"]["frequency_penalty"] == 0

    def test_rate_limit_then_success(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(429, {}), (200, OK_COMPLETION)]
        provider = stub_provider(stub_server)
        got = provider.complete(self.bundle(), GenerationParams(**FAST))
        assert got == ["layout html"]
        assert len(stub_server.seen) == 2

    def test_server_errors_exhaust_retries(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(500, {}), (503, {})]
        provider = stub_provider(stub_server)
        with pytest.raises(ProviderError):
            provider.complete(self.bundle(), GenerationParams(**FAST))
        assert len(stub_server.seen) == 2  # max_retries=1 means two attempts

    def test_client_error_fails_immediately(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(400, {"error": "bad request"})]
        provider = stub_provider(stub_server)
        with pytest.raises(ProviderError):
            provider.complete(self.bundle(), GenerationParams(**FAST))
        assert len(stub_server.seen) == 1  # no retry on a 4xx other than 429

    def test_partial_success_keeps_good_samples(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(200, OK_COMPLETION), (400, {"error": "x"})]
        provider = stub_provider(stub_server)
        params = GenerationParams(
            backoff=0.0, max_retries=0, num_samples=2, fan_out=1, timeout=5.0
        )
        assert provider.complete(self.bundle(), params) == ["layout html"]

    def test_malformed_body_is_an_error(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(200, {"unexpected": True})]
        provider = stub_provider(stub_server)
        with pytest.raises(ProviderError):
            provider.complete(self.bundle(), GenerationParams(**FAST))

    def test_missing_api_key(self, stub_server, monkeypatch):
        monkeypatch.delenv("LAYOUTGEN_API_KEY", raising=False)
        provider = stub_provider(stub_server)
        with pytest.raises(ProviderError) as err:
            provider.embed("query text")
        assert "LAYOUTGEN_API_KEY" in str(err.value)
        with pytest.raises(ProviderError):
            provider.complete(self.bundle(), GenerationParams(**FAST))
        assert not stub_server.seen  # nothing was sent without a key

    def test_embedding_request(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(200, {"data": [{"embedding": [0.25, -0.5]}]})]
        provider = stub_provider(stub_server)
        assert provider.embed("query text") == (0.25, -0.5)
        request = stub_server.seen[0]
        assert request["path"] == "/v1/embeddings"
        assert request["payload"] == {
            "model": "text-embedding-ada-002",
            "input": "query text",
        }

    def test_malformed_embedding_body(self, stub_server, monkeypatch):
        monkeypatch.setenv("LAYOUTGEN_API_KEY", "test-key")
        stub_server.scripted = [(200, {"data": []})]
        provider = stub_provider(stub_server)
        with pytest.raises(ProviderError):
            provider.embed("query text")

    def test_empty_embed_text_rejected(self, stub_server):
        with pytest.raises(InvalidInputError):
            stub_provider(stub_server).embed("")
