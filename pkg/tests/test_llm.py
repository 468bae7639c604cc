from __future__ import annotations

import json

import pytest

from ste.llm import (
    ContextOverflow,
    Conversation,
    ConversationError,
    Gateway,
    Message,
    Role,
    ScriptedBackend,
    ScriptError,
    ScriptRule,
    TransportError,
    assistant,
    backend_from_spec,
    check_context,
    estimate_tokens,
    script_backend,
    user,
)


def conv(*texts, tag=""):
    msgs = []
    for i, t in enumerate(texts):
        msgs.append(user(t) if i % 2 == 0 else assistant(t))
    return Conversation(msgs, tag)


class TestScriptedBackend:
    def test_first_matching_rule_wins(self):
        b = ScriptedBackend([("hello", "A"), ("", "B")])
        assert b.generate(conv("hello there")) == "A"
        assert b.generate(conv("bye")) == "B"

    def test_sequence_then_exhausted(self):
        b = ScriptedBackend([ScriptRule("", ["one", "two"])])
        assert [b.generate(conv("x")), b.generate(conv("x"))] == ["one", "two"]
        with pytest.raises(ScriptError) as e:
            b.generate(conv("x"))
        assert e.value.code == "EXHAUSTED"

    def test_cycle(self):
        b = ScriptedBackend([ScriptRule("", ["one", "two"], cycle=True)])
        assert [b.generate(conv("x")) for _ in range(3)] == ["one", "two", "one"]

    def test_no_rule(self):
        with pytest.raises(ScriptError) as e:
            ScriptedBackend([("never", "x")]).generate(conv("hi"))
        assert e.value.code == "NO_SCRIPT"

    def test_tag_filter(self):
        b = ScriptedBackend([ScriptRule("", "tagged", tag="^a/"), ScriptRule("", "other")])
        assert b.generate(conv("x", tag="a/1")) == "tagged"
        assert b.generate(conv("x", tag="b/1")) == "other"

    def test_group_expansion(self):
        b = ScriptedBackend([(r"city (?P<c>\w+)", r"Weather in \g<c>")])
        assert b.generate(conv("city Paris please")) == "Weather in Paris"

    def test_mapping_by_message_key(self):
        b = ScriptedBackend([(r"Q: (?P<key>\w+)", {"a": "alpha", "*": "other"})])
        assert b.generate(conv("Q: a")) == "alpha"
        assert b.generate(conv("Q: z")) == "other"

    def test_mapping_by_tag_key(self):
        b = ScriptedBackend([ScriptRule("", {"e1": "first"}, tag=r"run/(?P<key>e\d+)")])
        assert b.generate(conv("x", tag="run/e1")) == "first"
        with pytest.raises(ScriptError):
            b.generate(conv("x", tag="run/e2"))

    def test_matches_last_user_message_only(self):
        b = ScriptedBackend([("needle", "found"), ("", "missed")])
        c = Conversation([user("needle"), assistant("ok"), user("hay")])
        assert b.generate(c) == "missed"

    def test_from_json_file(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps([{"match": "x", "responses": ["1", "2"]}, {"response": {"*": "d"}}]))
        b = backend_from_spec(f"scripted:{p}")
        assert b.generate(conv("x")) == "1"
        assert b.generate(conv("y")) == "d"

    def test_from_json_needs_response(self):
        with pytest.raises(ValueError):
            ScriptedBackend.from_json([{"match": "x"}])

    def test_empty_rules(self):
        with pytest.raises(ValueError):
            script_backend([])


class TestGateway:
    def test_logs_calls(self):
        g = Gateway(ScriptedBackend([("", "pong")]))
        reply = g.complete(conv("ping", tag="t"))
        assert reply == Message(Role.ASSISTANT, "pong")
        (rec,) = g.call_log
        assert rec.tag == "t" and rec.reply == "pong"

    def test_context_ceiling(self):
        g = Gateway(ScriptedBackend([("", "x")]), context_limit=5)
        with pytest.raises(ContextOverflow) as e:
            g.complete(conv("word " * 100, tag="big"))
        assert e.value.component == "big"

    def test_transport_retry_with_backoff(self):
        calls = []

        class Flaky:
            def generate(self, c):
                calls.append(1)
                if len(calls) < 3:
                    raise TransportError("reset")
                return "ok"

        delays = []
        g = Gateway(Flaky(), retries=3, backoff=0.5, sleep=delays.append)
        assert g.complete(conv("x")).content == "ok"
        assert delays == [0.5, 1.0]

    def test_transport_gives_up(self):
        class Down:
            def generate(self, c):
                raise TransportError("down")

        g = Gateway(Down(), retries=2, sleep=lambda s: None)
        with pytest.raises(TransportError):
            g.complete(conv("x"))

    def test_script_errors_are_not_retried(self):
        g = Gateway(ScriptedBackend([("never", "x")]), sleep=lambda s: pytest.fail("slept"))
        with pytest.raises(ScriptError):
            g.complete(conv("x"))

    @pytest.mark.parametrize(
        "messages",
        [
            [],
            [assistant("a")],
            [user("a"), user("b")],
            [user("a"), assistant("b")],
        ],
    )
    def test_invalid_conversations(self, messages):
        g = Gateway(ScriptedBackend([("", "x")]))
        with pytest.raises(ConversationError):
            g.complete(Conversation(messages))


class TestBudget:
    def test_estimate_is_monotone(self):
        assert estimate_tokens("") <= estimate_tokens("a b c") <= estimate_tokens("a b c d e f g")

    def test_check_context_names_largest_component(self):
        with pytest.raises(ContextOverflow) as e:
            check_context({"docs": "x " * 50, "query": "hi"}, 10)
        assert e.value.component == "docs"

    def test_within_limit_returns_total(self):
        assert check_context({"a": "one two", "b": "three"}, 1000) > 0


def test_backend_spec_errors():
    with pytest.raises(ValueError):
        backend_from_spec("mystery:thing")
    with pytest.raises(ValueError):
        backend_from_spec("remote:http://host")
