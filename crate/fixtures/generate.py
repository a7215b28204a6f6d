"""Writes the bundled synthetic fixtures: a 20-document corpus with CoNLL-U
parses, an eventuality KG with phrase parses, and a small static vector table.

Run from this directory: python3 generate.py
"""

import json
import random

GROUPS = {
    "Economic": [("pay", "tax"), ("hire", "worker"), ("raise", "wage"), ("cut", "cost")],
    "Crime and Punishment": [("arrest", "suspect"), ("charge", "smuggler"), ("seize", "drug"), ("detain", "migrant")],
    "Legality": [("pass", "law"), ("sign", "bill"), ("seek", "permit"), ("file", "lawsuit")],
}
GROUP_RELATION = {"Economic": "Result", "Crime and Punishment": "Precedence", "Legality": "Reason"}
SHARED = [("visit", "city"), ("hold", "meeting")]
PAST = {
    "pay": "paid", "hire": "hired", "raise": "raised", "cut": "cut", "arrest": "arrested",
    "charge": "charged", "seize": "seized", "detain": "detained", "pass": "passed", "sign": "signed",
    "seek": "sought", "file": "filed", "visit": "visited", "hold": "held",
}
SUBJECTS = ["officials", "agents", "lawmakers", "employers", "courts"]


def row(i, form, lemma, upos, head, deprel):
    return f"{i}\t{form}\t{lemma}\t{upos}\t_\t_\t{head}\t{deprel}\t_\t_"


def active(subject, verb, obj):
    return [
        row(1, subject, subject, "NOUN", 2, "nsubj"),
        row(2, verb, verb, "VERB", 0, "root"),
        row(3, "the", "the", "DET", 4, "det"),
        row(4, obj, obj, "NOUN", 2, "obj"),
        row(5, ".", ".", "PUNCT", 2, "punct"),
    ]


def passive(verb, obj):
    return [
        row(1, "the", "the", "DET", 2, "det"),
        row(2, obj, obj, "NOUN", 4, "nsubj:pass"),
        row(3, "was", "be", "AUX", 4, "aux:pass"),
        row(4, PAST[verb], verb, "VERB", 0, "root"),
        row(5, ".", ".", "PUNCT", 4, "punct"),
    ]


def surface(rows):
    return " ".join(r.split("\t")[1] for r in rows)


def corpus(rng):
    labels = list(GROUPS)
    docs, blocks = [], []
    for n in range(20):
        label = labels[n % len(labels)]
        events = rng.sample(GROUPS[label], 3) + [rng.choice(SHARED)]
        rng.shuffle(events)
        sentences = []
        for j, (v, o) in enumerate(events):
            rows = passive(v, o) if (n + j) % 5 == 0 else active(rng.choice(SUBJECTS), v, o)
            sentences.append(rows)
        doc_id = f"doc{n:02d}"
        text = " ".join(surface(s)[0].upper() + surface(s)[1:].replace(" .", ".") for s in sentences)
        docs.append({"id": doc_id, "text": text, "domain": "immigration", "frame_label": label})
        block = [f"# doc_id = {doc_id}"]
        for k, rows in enumerate(sentences):
            block.append(f"# sent_id = {doc_id}-{k}\n# text = {surface(rows)}\n" + "\n".join(rows) + "\n")
        blocks.append("\n".join(block))
    return docs, "\n".join(blocks)


def phrase_rows(verb, obj, negated=False):
    if negated:
        return [
            row(1, "i", "i", "PRON", 4, "nsubj"),
            row(2, "do", "do", "AUX", 4, "aux"),
            row(3, "not", "not", "PART", 4, "advmod"),
            row(4, verb, verb, "VERB", 0, "root"),
            row(5, obj, obj, "NOUN", 4, "obj"),
        ]
    return [row(1, "i", "i", "PRON", 2, "nsubj"), row(2, verb, verb, "VERB", 0, "root"), row(3, obj, obj, "NOUN", 2, "obj")]


def kg(rng):
    phrases = {}

    def phrase(v, o, negated=False):
        text = f"i do not {v} {o}" if negated else f"i {v} {o}"
        phrases[text] = phrase_rows(v, o, negated)
        return text

    edges = []

    def edge(h, t, main, extra=None):
        rels = {main: rng.randint(3, 6)}
        if extra:
            rels[extra] = rng.randint(1, 2)
        edges.append({"head": h, "tail": t, "relations": rels})

    for label, events in GROUPS.items():
        for a in events:
            for b in events:
                if a != b:
                    edge(phrase(*a), phrase(*b), GROUP_RELATION[label], "Conjunction" if rng.random() < 0.3 else None)
    cross = [(a, b) for la, ea in GROUPS.items() for lb, eb in GROUPS.items() if la != lb for a in ea for b in eb]
    for a, b in rng.sample(cross, 36):
        edge(phrase(*a), phrase(*b), "Conjunction")
    for a in SHARED:
        for b in rng.sample([e for es in GROUPS.values() for e in es], 3):
            edge(phrase(*a), phrase(*b), "Conjunction")
    # a rare relation type that the unique-pair filter drops
    for a, b in rng.sample(cross, 3):
        edges.append({"head": phrase(*a), "tail": phrase(*b), "relations": {"Contrast": 9}})
    edge(phrase("pay", "tax", negated=True), phrase("raise", "wage"), "Reason")
    phrases["they protest"] = [row(1, "they", "they", "PRON", 2, "nsubj"), row(2, "protest", "protest", "VERB", 0, "root")]
    edge("they protest", phrase("pass", "law"), "Precedence")
    edge(phrase("sign", "bill"), "i missing parse", "Precedence")

    parse_text = "\n".join(f"# text = {t}\n" + "\n".join(r) + "\n" for t, r in sorted(phrases.items()))
    return edges, parse_text, phrases


def vectors(rng, phrases):
    words = sorted({w for t in phrases for w in t.split()})
    return "".join(w + " " + " ".join(f"{rng.gauss(0, 1):.4f}" for _ in range(8)) + "\n" for w in words)


def main():
    rng = random.Random(42)
    docs, parses = corpus(rng)
    with open("corpus.jsonl", "w") as f:
        f.writelines(json.dumps(d) + "\n" for d in docs)
    with open("corpus.conllu", "w") as f:
        f.write(parses)
    edges, kg_parses, phrases = kg(rng)
    with open("kg.jsonl", "w") as f:
        f.writelines(json.dumps(e) + "\n" for e in edges)
    with open("kg_phrases.conllu", "w") as f:
        f.write(kg_parses)
    with open("vectors.txt", "w") as f:
        f.write(vectors(rng, phrases))


if __name__ == "__main__":
    main()
