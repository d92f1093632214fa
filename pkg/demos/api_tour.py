"""Tour of the library API: estimation, decomposition, diagnostics.

Everything runs on toy models trained in-process, so the demo finishes
in a few seconds with no downloads.

Usage: python demos/api_tour.py
"""

import math
import random
from importlib import resources

from maskscore import (
    EstimatorConfig,
    UniformDenoiser,
    build_vocabulary,
    quality_profile,
    score_marginal,
    score_pmi,
    tokenize,
    train_toy_ar_lm,
    train_toy_masked_lm,
)
from maskscore.denoiser import ar_sequence_logprobs
from maskscore.diagnostics import directional_consistency, generate_reversal_pairs
from maskscore.estimator import estimate, exact_estimate
from maskscore.masking import timestep_grid


def load_corpus():
    ref = resources.files("maskscore.data").joinpath("demo_corpus.txt")
    return [line for line in ref.read_text().splitlines() if line.strip()]


def section(title):
    print(f"\n== {title} ==")


def main():
    lines = load_corpus()
    vocab = build_vocabulary(lines)
    corpus = [tokenize(line, vocab) for line in lines]
    model = train_toy_masked_lm(corpus, vocab)
    print(f"demo corpus: {len(lines)} lines, vocabulary size {vocab.size}")

    section("Monte-Carlo estimate vs exact enumeration")
    candidate = tokenize("the ferry carried workers to the mill", vocab)
    cfg = EstimatorConfig(k=4000, timesteps=4, seed=0)
    mc = estimate(model, candidate, None, cfg)
    exact = exact_estimate(model, candidate, None, timestep_grid(4))
    sigma = mc.sample_std / math.sqrt(cfg.k)
    print(f"  MC (K={cfg.k}):  {mc.score:.6f}  (std error {sigma:.6f})")
    print(f"  exact:           {exact.score:.6f}")
    print(f"  |difference|:    {abs(mc.score - exact.score):.6f}")

    section("uniform backend is a fixed point")
    uniform = UniformDenoiser(vocab)
    report = score_marginal(uniform, candidate, EstimatorConfig(k=16, seed=1))
    print(f"  score: {report.score:.6f}   -log|V|: {-math.log(vocab.size):.6f}")

    section("PMI: does the source inform the candidate?")
    # a corpus with a planted dependency: the source's final token ("storm"
    # or "drought") selects how the report that follows it begins
    rng = random.Random(7)
    planted = []
    for _ in range(300):
        cause, effect = rng.choice((("storm", "flooding"), ("drought", "dust")))
        planted.append(
            f"the {rng.choice(('north', 'south'))} region saw a {cause} "
            f"{effect} closed the {rng.choice(('road', 'ferry'))} for days"
        )
    pvocab = build_vocabulary(planted)
    bridge = train_toy_masked_lm(
        [tokenize(t, pvocab) for t in planted], pvocab, sentinel_policy="bridge"
    )
    candidate = tokenize("flooding closed the road for days", pvocab)
    cfg = EstimatorConfig(k=256, timesteps=4, seed=2)
    for label, text in (("matched source", "the north region saw a storm"),
                        ("mismatched source", "the north region saw a drought")):
        rep = score_pmi(bridge, candidate, tokenize(text, pvocab), cfg)
        print(f"  {label:18s} conditional={rep.conditional:+.4f} "
              f"marginal={rep.marginal:+.4f} pmi={rep.pmi:+.4f}")

    section("quality profile across masking rates")
    candidate = tokenize("workers repaired the bridge before the storm", vocab)
    source = tokenize("the bridge over the river closed at noon", vocab)
    profile = quality_profile(model, candidate, source, EstimatorConfig(k=160, timesteps=5, seed=3))
    for t, score in zip(profile.timesteps.values, profile.scores):
        bar = "#" * max(1, int(44 + 10 * score))
        print(f"  t={t:.2f}  {score:+.4f}  {bar}")

    section("directional consistency: masked vs autoregressive")
    pairs = generate_reversal_pairs(n=60, seed=4)
    train_pairs = generate_reversal_pairs(n=200, seed=5)
    texts = [t for pair in train_pairs for t in pair] + [t for pair in pairs for t in pair]
    rvocab = build_vocabulary(texts)
    rcorpus = [tokenize(t, rvocab) for t in texts[: 2 * len(train_pairs)]]
    masked = train_toy_masked_lm(rcorpus, rvocab)
    ar = train_toy_ar_lm(rcorpus, rvocab)
    mcfg = EstimatorConfig(k=24, timesteps=4, seed=6)

    def masked_scorer(text):
        return score_marginal(masked, tokenize(text, rvocab), mcfg).score

    def ar_scorer(text):
        values = ar_sequence_logprobs(ar, tokenize(text, rvocab))
        return sum(values) / len(values)

    for label, scorer in (("masked", masked_scorer), ("autoregressive", ar_scorer)):
        rep = directional_consistency(scorer, pairs)
        print(f"  {label:15s} mean consistency {rep.mean_consistency:.4f}  "
              f"rank correlation {rep.rank_correlation:+.4f}")
    print("  (the bidirectional scorer treats 'X verb Y' and its passive more alike)")


if __name__ == "__main__":
    random.seed(0)
    main()
