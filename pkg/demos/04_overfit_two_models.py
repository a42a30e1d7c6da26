"""Train both classifiers to 100% accuracy on a 30-pair synthetic corpus.

A quick sanity run: with dropout off and a modest learning rate, both the
encoder classifier and the compare-aggregate matcher memorize a small
synthetic inference corpus within a few dozen epochs.
"""

import numpy as np

from clinli.compaggr import CompAggrConfig, CompAggrModel
from clinli.synth import SynthSpec, generate_corpus
from clinli.tokenizer import build_word_vocab, train_wordpiece
from clinli.training import AdamState, adam_step, clip_gradients
from clinli.transformer import TransformerClassifier, TransformerConfig

corpus = generate_corpus(SynthSpec(count=30, seed=0))
sentences = [ex.premise for ex in corpus] + [ex.hypothesis for ex in corpus]
print("sample pair:", corpus[0].premise, "/", corpus[0].hypothesis, "->", corpus[0].gold_label)


def fit(model, lr, seed=0, max_epochs=300):
    params = model.parameters()
    state = AdamState(params)
    rng = np.random.default_rng(seed)
    for epoch in range(1, max_epochs + 1):
        for start in range(0, len(corpus), 10):
            batch = [corpus[i] for i in rng.permutation(len(corpus))[start : start + 10]]
            for p in params.values():
                p.grad = None
            loss, _ = model.batch_loss(batch, training=True, rng=rng)
            loss.backward()
            clip_gradients(params, 5.0)
            adam_step(params, state, lr)
        _, correct = model.batch_loss(corpus, training=False)
        if epoch % 10 == 0 or correct == len(corpus):
            print(f"  epoch {epoch:3d}: {correct}/{len(corpus)} correct")
        if correct == len(corpus):
            return epoch
    return None


print("\nencoder classifier:")
transformer = TransformerClassifier(
    TransformerConfig(d_e=32, num_heads=2, num_blocks=1, d_ff=64, max_len=24, dropout=0.0),
    train_wordpiece(sentences, 120),
    seed=0,
)
print(f"memorized after {fit(transformer, lr=1e-3)} epochs")

print("\ncompare-aggregate matcher:")
compaggr = CompAggrModel(
    CompAggrConfig(word_dim=16, repr_dim=16, filters_per_width=4, dropout=0.0),
    build_word_vocab(sentences),
    seed=0,
)
print(f"memorized after {fit(compaggr, lr=3e-3)} epochs")
