"""Teacher client: prompt rendering, reply parsing, retries, checkpointing."""

from __future__ import annotations

import json

import pytest

from conftest import chat_envelope, teacher_reply_json
from gfp.core import Problem
from gfp.teacher import (
    EmptyField,
    HttpStatusError,
    MalformedJson,
    MissingCredential,
    MissingKey,
    MissingSolution,
    SynthDraft,
    TeacherConfig,
    TransportError,
    WrongType,
    load_checkpoint,
    parse_reply,
    render_prompt,
    request_synthesis,
    synthesize_corpus,
)

PROBLEM = Problem("p1", "Q1", 18.0, "S1")


def fast_config(url: str, **overrides) -> TeacherConfig:
    defaults = dict(endpoint_url=url, model_name="test-model",
                    max_retries=5, initial_backoff=0.01, parallelism=4,
                    request_timeout=5.0)
    defaults.update(overrides)
    return TeacherConfig(**defaults)


class TestRenderPrompt:
    def test_substitutes_both_tags(self):
        text = render_prompt(PROBLEM)
        assert "Q1" in text and "S1" in text
        assert "<question>" not in text and "<solution>" not in text

    def test_missing_solution(self):
        with pytest.raises(MissingSolution):
            render_prompt(Problem("p2", "Q2", 1.0, None))

    def test_adjacent_tags_replaced_independently(self):
        text = render_prompt(PROBLEM, template="x<question><solution>y")
        assert text == "xQ1S1y"

    def test_substituted_text_never_rescanned(self):
        tricky = Problem("p3", "contains <solution> tag", 1.0, "SOL")
        text = render_prompt(tricky, template="[<question>][<solution>]")
        assert text == "[contains <solution> tag][SOL]"


class TestParseReply:
    def test_happy_path(self):
        reply = parse_reply('{"hints":["h1","h2"],"code":"result = 5"}')
        assert reply.hints == ["h1", "h2"]
        assert reply.code == "result = 5"

    def test_missing_hints_key(self):
        with pytest.raises(MissingKey) as err:
            parse_reply('{"code":"result = 5"}')
        assert err.value.key == "hints"

    def test_missing_code_key(self):
        with pytest.raises(MissingKey) as err:
            parse_reply('{"hints":["h"]}')
        assert err.value.key == "code"

    def test_wrong_hint_type(self):
        with pytest.raises(WrongType):
            parse_reply('{"hints":"h1","code":"x"}')

    def test_not_json(self):
        with pytest.raises(MalformedJson):
            parse_reply("sure! here is the json: {")

    def test_non_object(self):
        with pytest.raises(WrongType):
            parse_reply('["h1"]')

    def test_empty_hints(self):
        with pytest.raises(EmptyField):
            parse_reply('{"hints":[],"code":"x"}')

    def test_blank_code(self):
        with pytest.raises(EmptyField):
            parse_reply('{"hints":["h"],"code":"  "}')

    def test_hints_are_sanitized(self):
        reply = parse_reply('{"hints":["a & b","c ## d"],"code":"x"}')
        assert reply.hints == ["a, b", "c, d"]


@pytest.mark.usefixtures("teacher_env")
class TestRequestSynthesis:
    def test_happy_path_and_body_contract(self, make_server):
        payload = teacher_reply_json(["h1", "h2"], "result = 5")
        server = make_server(lambda req: (200, chat_envelope(payload)))
        cfg = fast_config(server.url)

        reply = request_synthesis(PROBLEM, cfg)
        assert reply.hints == ["h1", "h2"]
        assert reply.code == "result = 5"

        body = server.requests[0].body
        assert body["model"] == "test-model"
        assert body["temperature"] == 0.0
        assert body["response_format"] == {"type": "json_object"}
        assert body["messages"][0] == {"role": "system", "content": ""}
        assert body["messages"][1]["role"] == "user"
        assert body["messages"][1]["content"] == render_prompt(PROBLEM)
        assert server.requests[0].headers["Authorization"] == "Bearer test-key"

    def test_retries_on_429_then_succeeds(self, make_server):
        payload = teacher_reply_json(["h"], "result = 1")
        script = [(429, {"error": "slow down"}), (429, {"error": "slow down"}),
                  (200, chat_envelope(payload))]
        server = make_server(lambda req: script[min(len(server.requests) - 1, 2)])
        cfg = fast_config(server.url)

        reply = request_synthesis(PROBLEM, cfg)
        assert reply.code == "result = 1"
        assert server.request_count == 3

    def test_permanent_500_exhausts_retries(self, make_server):
        server = make_server(lambda req: (500, {"error": "down"}))
        cfg = fast_config(server.url, max_retries=3)
        with pytest.raises(TransportError):
            request_synthesis(PROBLEM, cfg)
        assert server.request_count == cfg.max_retries + 1

    def test_client_error_is_not_retried(self, make_server):
        server = make_server(lambda req: (400, {"error": "bad request"}))
        cfg = fast_config(server.url)
        with pytest.raises(HttpStatusError) as err:
            request_synthesis(PROBLEM, cfg)
        assert err.value.status_code == 400
        assert server.request_count == 1

    def test_parse_error_not_retried_by_default(self, make_server):
        server = make_server(lambda req: (200, chat_envelope("not json at all")))
        cfg = fast_config(server.url)
        with pytest.raises(MalformedJson):
            request_synthesis(PROBLEM, cfg)
        assert server.request_count == 1

    def test_parse_error_reask_with_reminder_when_enabled(self, make_server):
        payload = teacher_reply_json(["h"], "result = 1")
        responses = [chat_envelope("garbage"), chat_envelope(payload)]
        server = make_server(lambda req: (200, responses[min(len(server.requests) - 1, 1)]))
        cfg = fast_config(server.url, retry_on_parse_error=True)

        reply = request_synthesis(PROBLEM, cfg)
        assert reply.code == "result = 1"
        assert server.request_count == 2
        second_prompt = server.requests[1].body["messages"][1]["content"]
        assert second_prompt.startswith(render_prompt(PROBLEM))
        assert "valid JSON" in second_prompt

    def test_missing_credential(self, make_server, monkeypatch):
        monkeypatch.delenv("TEACHER_API_KEY", raising=False)
        server = make_server(lambda req: (200, chat_envelope("{}")))
        with pytest.raises(MissingCredential):
            request_synthesis(PROBLEM, fast_config(server.url))


def make_problems(n: int) -> list[Problem]:
    return [Problem(f"p{i:02d}", f"Question {i}", float(i), f"Solution {i}")
            for i in range(1, n + 1)]


def scripted_teacher(make_server, fail_questions=frozenset()):
    """Teacher double: reply derives deterministically from the question text."""

    def respond(req):
        prompt = req.body["messages"][1]["content"]
        question = next(line for line in prompt.splitlines() if line.startswith("Question "))
        if question in fail_questions:
            return 500, {"error": "permanently down"}
        idx = question.split()[-1]
        payload = teacher_reply_json([f"hint {idx}a", f"hint {idx}b"], f"result = {idx}")
        return 200, chat_envelope(payload)

    return make_server(respond)


@pytest.mark.usefixtures("teacher_env")
class TestSynthesizeCorpus:
    def test_order_matches_input(self, make_server, tmp_path):
        problems = make_problems(10)
        server = scripted_teacher(make_server)
        cfg = fast_config(server.url)

        drafts = synthesize_corpus(problems, cfg, tmp_path / "ckpt.jsonl")
        assert [d.problem_id for d in drafts] == [p.id for p in problems]
        assert all(d.ok for d in drafts)
        assert drafts[4].code == "result = 5"
        assert server.request_count == 10

    def test_partial_failures_recorded_not_fatal(self, make_server, tmp_path):
        problems = make_problems(10)
        server = scripted_teacher(make_server, fail_questions={"Question 3", "Question 8"})
        cfg = fast_config(server.url, max_retries=1)

        drafts = synthesize_corpus(problems, cfg, tmp_path / "ckpt.jsonl")
        assert len(drafts) == 10
        failed = [d for d in drafts if not d.ok]
        assert {d.problem_id for d in failed} == {"p03", "p08"}
        assert all("TransportError" in d.error for d in failed)

    def test_resume_skips_checkpointed_ids(self, make_server, tmp_path):
        problems = make_problems(10)
        ckpt = tmp_path / "ckpt.jsonl"
        prior = [SynthDraft(p.id, [f"cached {p.id}"], "result = 0") for p in problems[:6]]
        ckpt.write_text("".join(
            json.dumps({"id": d.problem_id, "hints": d.hints, "code": d.code, "error": None}) + "\n"
            for d in prior))

        server = scripted_teacher(make_server)
        drafts = synthesize_corpus(problems, fast_config(server.url), ckpt)
        assert server.request_count == 4
        assert [d.problem_id for d in drafts] == [p.id for p in problems]
        assert drafts[0].hints == ["cached p01"]
        assert drafts[9].code == "result = 10"
        assert len(load_checkpoint(ckpt)) == 10

    def test_checkpoint_deterministic_across_runs(self, make_server, tmp_path):
        problems = make_problems(8)
        server = scripted_teacher(make_server)
        cfg = fast_config(server.url)

        synthesize_corpus(problems, cfg, tmp_path / "a.jsonl")
        synthesize_corpus(problems, cfg, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_parallelism_is_bounded(self, make_server, tmp_path):
        import time as _time

        def respond(req):
            _time.sleep(0.05)
            return 200, chat_envelope(teacher_reply_json(["h"], "result = 1"))

        server = make_server(respond)
        cfg = fast_config(server.url, parallelism=3)
        synthesize_corpus(make_problems(12), cfg, tmp_path / "ckpt.jsonl")
        assert server.max_in_flight <= 3

    def test_credential_absence_fatal_at_startup(self, make_server, tmp_path, monkeypatch):
        monkeypatch.delenv("TEACHER_API_KEY", raising=False)
        server = scripted_teacher(make_server)
        with pytest.raises(MissingCredential):
            synthesize_corpus(make_problems(2), fast_config(server.url), tmp_path / "c.jsonl")
        assert server.request_count == 0

    def test_missing_solution_becomes_failed_draft(self, make_server, tmp_path):
        problems = [Problem("p1", "Question 1", 1.0, "Solution 1"),
                    Problem("p2", "Question 2", 2.0, None)]
        server = scripted_teacher(make_server)
        drafts = synthesize_corpus(problems, fast_config(server.url), tmp_path / "c.jsonl")
        assert drafts[0].ok
        assert not drafts[1].ok
        assert "MissingSolution" in drafts[1].error
