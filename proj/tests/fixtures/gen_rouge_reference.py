"""Writes rouge_reference.json: random token-id pairs scored by the rouge-score package."""
import json
import random

from rouge_score import rouge_scorer


class IdTokenizer:
    def tokenize(self, text):
        return text.split()


def main():
    rng = random.Random(2024)
    scorer = rouge_scorer.RougeScorer(["rouge1", "rouge2", "rougeL", "rougeLsum"], tokenizer=IdTokenizer())
    cases = []
    for _ in range(300):
        vocab = rng.randint(2, 12)

        def lines():
            return [[rng.randint(6, 5 + vocab) for _ in range(rng.randint(0 if rng.random() < 0.05 else 1, 7))]
                    for _ in range(rng.randint(1, 4))]

        cand, ref = lines(), lines()
        text = lambda ls: "\n".join(" ".join(map(str, l)) for l in ls)
        s = scorer.score(text(ref), text(cand))
        cases.append({
            "cand": cand,
            "ref": ref,
            **{k: [v.precision, v.recall, v.fmeasure] for k, v in s.items()},
        })
    with open("rouge_reference.json", "w") as f:
        json.dump(cases, f)


if __name__ == "__main__":
    main()
