"""Toy denoisers, the query contract, persistence, and the remote client."""

import json
import math
import socket

import pytest

from maskscore import (
    BadLambda,
    BadModelFile,
    ConnectionFailed,
    DenoiserQuery,
    DenoiserResponse,
    IoError,
    ProtocolViolation,
    RemoteDenoiser,
    Timeout,
    TokenSequence,
    ToyARLM,
    ToyMaskedLM,
    UniformDenoiser,
    Vocabulary,
    VocabMismatch,
    ar_sequence_logprobs,
    build_vocabulary,
    load_toy_model,
    query_uniform,
    save_toy_model,
    tokenize,
    train_toy_ar_lm,
    train_toy_masked_lm,
)


def make_query(vocab, corrupted, targets, context=()):
    return DenoiserQuery(
        context_ids=tuple(context),
        corrupted_ids=tuple(corrupted),
        targets=dict(targets),
        mask_id=vocab.mask_id,
    )


# --- query and response contracts ---


def test_query_requires_targets_for_all_masks(tiny_vocab):
    m = tiny_vocab.mask_id
    with pytest.raises(ValueError):
        make_query(tiny_vocab, [m, 1], {})
    with pytest.raises(ValueError):
        make_query(tiny_vocab, [m, 1], {0: 0, 1: 1})


def test_query_rejects_mask_target_and_dirty_context(tiny_vocab):
    m = tiny_vocab.mask_id
    with pytest.raises(ValueError):
        make_query(tiny_vocab, [m], {0: m})
    with pytest.raises(ValueError):
        make_query(tiny_vocab, [m], {0: 0}, context=[m])
    with pytest.raises(ValueError):
        make_query(tiny_vocab, [m], {0: 0, 5: 1})


def test_response_rejects_bad_logprobs():
    with pytest.raises(ValueError):
        DenoiserResponse(logprobs={0: 0.1})
    with pytest.raises(ValueError):
        DenoiserResponse(logprobs={0: float("nan")})
    DenoiserResponse(logprobs={0: 0.0, 1: -2.5})


def test_vocab_mismatch_checks(tiny_vocab, masked_lm):
    q = DenoiserQuery(
        context_ids=(), corrupted_ids=(tiny_vocab.mask_id,), targets={0: 0},
        mask_id=tiny_vocab.mask_id,
    )
    # tiny_vocab has 3 tokens, the trained model has 5; mask ids differ
    with pytest.raises(VocabMismatch):
        masked_lm.query(q)
    big = make_query(masked_lm.vocab, [masked_lm.vocab.mask_id], {0: masked_lm.begin_id})
    with pytest.raises(VocabMismatch):
        masked_lm.query(big)


# --- masked toy model ---


def test_train_counts_repeated_pair(tiny_vocab):
    corpus = [tokenize("a b", tiny_vocab), tokenize("a b", tiny_vocab)]
    model = train_toy_masked_lm(corpus, tiny_vocab)
    begin, end = model.begin_id, model.end_id
    assert model.trigram == {(begin, 0, 1): 2, (0, 1, end): 2}
    assert model.bigram_left == {(begin, 0): 2, (0, 1): 2}
    assert model.bigram_right == {(0, 1): 2, (1, end): 2}
    assert model.unigram == {0: 2, 1: 2}


def test_unigram_component_smoothing():
    vocab = build_vocabulary(["a a b"])
    model = train_toy_masked_lm([tokenize("a a b", vocab)], vocab)
    total = sum(model.unigram.values())
    alpha = model.alpha_add
    p0 = (model.unigram[0] + alpha) / (total + alpha * vocab.size)
    assert p0 == pytest.approx(0.6, rel=1e-15)


def test_single_token_vocabulary_is_certain():
    vocab = Vocabulary(tokens=("a",), ids={"a": 0}, mask_id=1, size=1)
    model = train_toy_masked_lm([TokenSequence(ids=(0,), vocab=vocab)], vocab)
    assert model.token_logprob(model.begin_id, 0, model.end_id) == 0.0
    response = model.query(make_query(vocab, [vocab.mask_id], {0: 0}))
    assert response.logprobs == {0: 0.0}


def test_vanishing_alpha_deterministic_corpus():
    vocab = build_vocabulary(["a a", "b b"])
    corpus = [tokenize("a a", vocab)] * 5
    model = train_toy_masked_lm(corpus, vocab, alpha_add=1e-12)
    assert abs(model.token_logprob(model.begin_id, 0, 0)) < 1e-9


def test_hand_computed_mixture():
    # corpus "a b c" + "a b d": p(b | a, c) = .5*(2/5) + .2*(3/6) + .2*(2/5) + .1*(3/10)
    vocab = build_vocabulary(["a b c", "a b d"])
    corpus = [tokenize("a b c", vocab), tokenize("a b d", vocab)]
    model = train_toy_masked_lm(corpus, vocab)
    assert model.token_logprob(0, 1, 2) == pytest.approx(math.log(0.41), rel=1e-12)


def mixture_oracle(model, left, target, right):
    # recompute the interpolated conditional from the raw count tables
    alpha = model.alpha_add
    denom = alpha * model.vocab.size
    n3 = sum(c for (l, _, r), c in model.trigram.items() if l == left and r == right)
    n2l = sum(c for (l, _), c in model.bigram_left.items() if l == left)
    n2r = sum(c for (_, r), c in model.bigram_right.items() if r == right)
    n1 = sum(model.unigram.values())
    l3, l2l, l2r, l1 = model.lambdas
    p = (
        l3 * (model.trigram.get((left, target, right), 0) + alpha) / (n3 + denom)
        + l2l * (model.bigram_left.get((left, target), 0) + alpha) / (n2l + denom)
        + l2r * (model.bigram_right.get((target, right), 0) + alpha) / (n2r + denom)
        + l1 * (model.unigram.get(target, 0) + alpha) / (n1 + denom)
    )
    return math.log(p)


def test_mixture_matches_count_table_oracle(masked_lm):
    size = masked_lm.vocab.size
    contexts = [0, 1, size - 1, masked_lm.begin_id, masked_lm.end_id]
    for left in contexts:
        for right in contexts:
            for target in range(size):
                got = masked_lm.token_logprob(left, target, right)
                want = mixture_oracle(masked_lm, left, target, right)
                assert got == pytest.approx(want, rel=1e-12), (left, target, right)


def test_conditionals_sum_to_one(masked_lm):
    size = masked_lm.vocab.size
    contexts = [0, 2, size - 1, masked_lm.begin_id, masked_lm.end_id]
    for left in contexts:
        for right in contexts:
            total = math.fsum(
                math.exp(masked_lm.token_logprob(left, v, right)) for v in range(size)
            )
            assert abs(total - 1.0) <= 1e-9, (left, right)


def test_palindromic_corpus_is_direction_symmetric():
    vocab = build_vocabulary(["a b c d"])
    texts = ["a b c d", "b c a a", "d a b c"]
    seqs = []
    for text in texts:
        seq = tokenize(text, vocab)
        seqs.append(seq)
        seqs.append(TokenSequence(ids=tuple(reversed(seq.ids)), vocab=vocab))
    model = train_toy_masked_lm(seqs, vocab)
    for left in range(vocab.size):
        for right in range(vocab.size):
            for target in range(vocab.size):
                assert model.token_logprob(left, target, right) == pytest.approx(
                    model.token_logprob(right, target, left), rel=1e-12
                )


def test_masked_model_uses_right_context(masked_lm):
    # the same target under different right neighbors gets different mass
    values = {masked_lm.token_logprob(0, 1, r) for r in range(masked_lm.vocab.size)}
    assert len(values) > 1


def test_neighbor_scan_skips_masked_positions(masked_lm):
    vocab = masked_lm.vocab
    m = vocab.mask_id
    response = masked_lm.query(make_query(vocab, [m, m, 2], {0: 0, 1: 1}))
    begin = masked_lm.begin_id
    assert response.logprobs[0] == masked_lm.token_logprob(begin, 0, 2)
    assert response.logprobs[1] == masked_lm.token_logprob(begin, 1, 2)


def test_rightmost_mask_sees_end_sentinel(masked_lm):
    vocab = masked_lm.vocab
    m = vocab.mask_id
    response = masked_lm.query(make_query(vocab, [2, m], {1: 1}))
    assert response.logprobs[1] == masked_lm.token_logprob(2, 1, masked_lm.end_id)


def test_barrier_policy_ignores_context(corpus, vocab):
    model = train_toy_masked_lm(corpus, vocab, sentinel_policy="barrier")
    m = vocab.mask_id
    bare = model.query(make_query(vocab, [m, 2], {0: 1}))
    with_ctx = model.query(make_query(vocab, [m, 2], {0: 1}, context=[3, 4]))
    assert bare.logprobs == with_ctx.logprobs
    assert bare.logprobs[0] == model.token_logprob(model.begin_id, 1, 2)


def test_bridge_policy_conditions_on_context_tail(corpus, vocab):
    model = train_toy_masked_lm(corpus, vocab, sentinel_policy="bridge")
    m = vocab.mask_id
    with_ctx = model.query(make_query(vocab, [m, 2], {0: 1}, context=[3, 4]))
    assert with_ctx.logprobs[0] == model.token_logprob(4, 1, 2)
    # empty context falls back to the begin sentinel
    bare = model.query(make_query(vocab, [m, 2], {0: 1}))
    assert bare.logprobs[0] == model.token_logprob(model.begin_id, 1, 2)


def test_lambda_validation(tiny_vocab):
    with pytest.raises(BadLambda):
        ToyMaskedLM(tiny_vocab, lambdas=(0.5, 0.5))
    with pytest.raises(BadLambda):
        ToyMaskedLM(tiny_vocab, lambdas=(0.5, 0.5, 0.0, 0.0))
    with pytest.raises(BadLambda):
        ToyMaskedLM(tiny_vocab, lambdas=(0.4, 0.2, 0.2, 0.1))
    with pytest.raises(ValueError):
        ToyMaskedLM(tiny_vocab, alpha_add=0.0)
    with pytest.raises(ValueError):
        ToyMaskedLM(tiny_vocab, sentinel_policy="wrap")


# --- autoregressive baseline ---


def test_ar_counts_and_smoothing(tiny_vocab):
    model = train_toy_ar_lm([tokenize("a b", tiny_vocab)], tiny_vocab)
    assert model.bigram == {(model.begin_id, 0): 1, (0, 1): 1}
    # add-one over |V|=3: (1+1)/(1+3) at both steps
    lps = ar_sequence_logprobs(model, tokenize("a b", tiny_vocab))
    assert lps == pytest.approx([math.log(0.5), math.log(0.5)], rel=1e-15)


def test_ar_two_token_vocab_example():
    vocab = build_vocabulary(["a b"])
    model = train_toy_ar_lm([tokenize("a b", vocab)], vocab)
    lps = ar_sequence_logprobs(model, tokenize("a b", vocab))
    assert lps == pytest.approx([math.log(2 / 3), math.log(2 / 3)], rel=1e-15)


def test_ar_context_concat_identity(ar_lm, vocab):
    ctx = tokenize("a b", vocab)
    seq = tokenize("c d e", vocab)
    full = tokenize("a b c d e", vocab)
    with_ctx = ar_sequence_logprobs(ar_lm, seq, context=ctx)
    assert with_ctx == ar_sequence_logprobs(ar_lm, full)[len(ctx):]


def test_ar_ignores_future_tokens(ar_lm, vocab):
    first = ar_sequence_logprobs(ar_lm, tokenize("a b", vocab))[0]
    other = ar_sequence_logprobs(ar_lm, tokenize("a e", vocab))[0]
    assert first == other


def test_ar_rejects_corrupted(ar_lm, vocab):
    dirty = TokenSequence(ids=(0, vocab.mask_id), vocab=vocab)
    with pytest.raises(VocabMismatch):
        ar_sequence_logprobs(ar_lm, dirty)
    with pytest.raises(VocabMismatch):
        ar_sequence_logprobs(ar_lm, tokenize("a b", vocab), context=dirty)


def test_ar_rejects_bad_k(tiny_vocab):
    with pytest.raises(ValueError):
        ToyARLM(tiny_vocab, k_add=0.0)


# --- persistence ---


def test_save_load_masked_round_trip(tmp_path, corpus, vocab):
    model = train_toy_masked_lm(
        corpus, vocab, lambdas=(0.4, 0.3, 0.2, 0.1), alpha_add=0.5,
        sentinel_policy="bridge",
    )
    path = str(tmp_path / "masked.bin")
    save_toy_model(model, path)
    loaded = load_toy_model(path)
    assert isinstance(loaded, ToyMaskedLM)
    assert loaded.lambdas == model.lambdas
    assert loaded.alpha_add == model.alpha_add
    assert loaded.sentinel_policy == "bridge"
    assert loaded.vocab.tokens == vocab.tokens
    assert loaded.vocab.tokenizer_rule == vocab.tokenizer_rule
    assert loaded.trigram == model.trigram
    assert loaded.unigram == model.unigram
    for left, target, right in [(0, 1, 2), (4, 0, 1), (model.begin_id, 2, 3)]:
        assert loaded.token_logprob(left, target, right) == model.token_logprob(
            left, target, right
        )


def test_save_load_ar_round_trip(tmp_path, corpus, vocab):
    model = train_toy_ar_lm(corpus, vocab, k_add=0.25)
    path = str(tmp_path / "ar.bin")
    save_toy_model(model, path)
    loaded = load_toy_model(path)
    assert isinstance(loaded, ToyARLM)
    assert loaded.k_add == 0.25
    assert loaded.bigram == model.bigram
    seq = tokenize("a b c", vocab)
    assert loaded.sequence_logprobs(seq) == model.sequence_logprobs(seq)


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "junk.bin"
    bad.write_bytes(b"not a model at all")
    with pytest.raises(BadModelFile):
        load_toy_model(str(bad))


def test_load_rejects_truncation(tmp_path, corpus, vocab):
    path = tmp_path / "model.bin"
    save_toy_model(train_toy_masked_lm(corpus, vocab), str(path))
    blob = path.read_bytes()
    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(BadModelFile):
        load_toy_model(str(trunc))


def test_save_missing_dir_is_io_error(tmp_path, corpus, vocab):
    model = train_toy_masked_lm(corpus, vocab)
    target = tmp_path / "no_such_dir" / "model.bin"
    with pytest.raises(IoError):
        save_toy_model(model, str(target))
    assert not target.exists()
    assert list(tmp_path.iterdir()) == []  # no stray temp files either


def test_load_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        load_toy_model(str(tmp_path / "absent.bin"))


# --- remote client against a local stub ---


def sample_queries(vocab, n=6):
    m = vocab.mask_id
    out = []
    for pos in range(n):
        corrupted = [i % vocab.size for i in range(n)]
        corrupted[pos] = m
        out.append(make_query(vocab, corrupted, {pos: pos % vocab.size}, context=[0, 1]))
    return out


def test_remote_matches_uniform(stub_server, vocab):
    server = stub_server(vocab.size)
    remote = RemoteDenoiser(server.url, vocab)
    for q in sample_queries(vocab):
        assert remote.query(q).logprobs == query_uniform(vocab, q).logprobs


def test_remote_wire_format(stub_server, vocab):
    server = stub_server(vocab.size)
    remote = RemoteDenoiser(server.url, vocab)
    q = make_query(vocab, [0, vocab.mask_id, 2], {1: 1}, context=[3])
    remote.query(q)
    sent = server.requests[-1]
    assert sent["corrupted"] == [vocab.token_of(0), "[M]", vocab.token_of(2)]
    assert sent["context"] == [vocab.token_of(3)]
    assert sent["targets"] == {"1": vocab.token_of(1)}
    assert isinstance(sent["id"], str) and sent["id"]


def test_remote_query_many_preserves_order(stub_server, vocab):
    server = stub_server(vocab.size)

    def by_position(request):
        logprobs = {pos: -(int(pos) + 1) / 10.0 for pos in request["targets"]}
        body = json.dumps({"id": request["id"], "logprobs": logprobs})
        return 200, body.encode(), "application/json"

    server.transform = by_position
    remote = RemoteDenoiser(server.url, vocab, max_in_flight=4)
    queries = sample_queries(vocab)
    responses = remote.query_many(queries)
    for pos, response in enumerate(responses):
        assert response.logprobs == {pos: -(pos + 1) / 10.0}


def test_remote_positive_logprob_is_violation(stub_server, vocab):
    server = stub_server(vocab.size)

    def positive(request):
        logprobs = {pos: 0.1 for pos in request["targets"]}
        body = json.dumps({"id": request["id"], "logprobs": logprobs})
        return 200, body.encode(), "application/json"

    server.transform = positive
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation):
        remote.query(sample_queries(vocab)[0])


def test_remote_malformed_body_keeps_payload(stub_server, vocab):
    server = stub_server(vocab.size)
    server.transform = lambda request: (200, b"<html>oops</html>", "text/html")
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation) as info:
        remote.query(sample_queries(vocab)[0])
    assert b"oops" in info.value.payload


def test_remote_id_mismatch(stub_server, vocab):
    server = stub_server(vocab.size)

    def wrong_id(request):
        logprobs = {pos: -1.0 for pos in request["targets"]}
        return 200, json.dumps({"id": "other", "logprobs": logprobs}).encode(), "application/json"

    server.transform = wrong_id
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation):
        remote.query(sample_queries(vocab)[0])


def test_remote_missing_position(stub_server, vocab):
    server = stub_server(vocab.size)
    server.transform = lambda request: (
        200,
        json.dumps({"id": request["id"], "logprobs": {}}).encode(),
        "application/json",
    )
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation):
        remote.query(sample_queries(vocab)[0])


def test_remote_non_numeric_logprob(stub_server, vocab):
    server = stub_server(vocab.size)

    def stringy(request):
        logprobs = {pos: "-1.0" for pos in request["targets"]}
        return 200, json.dumps({"id": request["id"], "logprobs": logprobs}).encode(), "application/json"

    server.transform = stringy
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation):
        remote.query(sample_queries(vocab)[0])


def test_remote_http_error_status(stub_server, vocab):
    server = stub_server(vocab.size)
    server.transform = lambda request: (500, b"boom", "text/plain")
    remote = RemoteDenoiser(server.url, vocab)
    with pytest.raises(ProtocolViolation):
        remote.query(sample_queries(vocab)[0])


def test_remote_health_ok(stub_server, vocab):
    server = stub_server(vocab.size)
    body = RemoteDenoiser(server.url, vocab).health()
    assert body == {"status": "ok", "vocab_size": vocab.size}


def test_remote_health_violations(stub_server, vocab):
    server = stub_server(vocab.size)
    remote = RemoteDenoiser(server.url, vocab)
    server.health_transform = lambda: (200, json.dumps({"status": "ok", "vocab_size": True}).encode(), "application/json")
    with pytest.raises(ProtocolViolation):
        remote.health()
    server.health_transform = lambda: (200, json.dumps({"vocab_size": 9}).encode(), "application/json")
    with pytest.raises(ProtocolViolation):
        remote.health()
    server.health_transform = lambda: (503, b"warming up", "text/plain")
    with pytest.raises(ProtocolViolation):
        remote.health()


def test_remote_connection_refused(vocab):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    remote = RemoteDenoiser(f"http://127.0.0.1:{port}", vocab, timeout=0.5)
    with pytest.raises(ConnectionFailed):
        remote.query(sample_queries(vocab)[0])
    with pytest.raises(ConnectionFailed):
        remote.health()


def test_remote_timeout(stub_server, vocab):
    server = stub_server(vocab.size)
    server.delay = 2.0
    remote = RemoteDenoiser(server.url, vocab, timeout=0.2)
    with pytest.raises(Timeout):
        remote.query(sample_queries(vocab)[0])


def test_remote_rejects_bad_concurrency(vocab):
    with pytest.raises(ValueError):
        RemoteDenoiser("http://127.0.0.1:1", vocab, max_in_flight=0)


def test_uniform_denoiser_value(vocab):
    value = -math.log(vocab.size)
    response = UniformDenoiser(vocab).query(sample_queries(vocab)[2])
    assert all(lp == value for lp in response.logprobs.values())
