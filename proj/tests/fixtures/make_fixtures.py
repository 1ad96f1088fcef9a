#!/usr/bin/env python3
"""Regenerates every fixture file in this directory, deterministically.

Two toy languages share one lexicon: `xx` is written in Latin letters and
`yy` is its letter-for-letter Greek transliteration.  The language-model
corpora cycle through a fixed sentence sequence so their entropy floor is
low; the task files use different sentence lengths so no task sentence can
collide with a language-model line (asserted below).
"""

import pathlib

HERE = pathlib.Path(__file__).resolve().parent

# Letter-injective transliteration map (so the word-level map is injective).
GREEK = {
    "a": "α", "b": "β", "c": "χ", "d": "δ", "e": "ε", "f": "φ", "g": "γ",
    "h": "η", "i": "ι", "j": "ξ", "k": "κ", "l": "λ", "m": "μ", "n": "ν", "o": "ο",
    "p": "π", "r": "ρ", "s": "σ", "t": "τ", "u": "υ", "v": "ω", "y": "ψ",
}

PERS = ["anra", "belo", "doni", "mira"]
ORGS = ["coram", "elvo", "farin"]
NOUNS = ["talo", "kivi", "lumi", "vesi", "puro", "runo", "sato"]
VERBS = ["kulkee", "nousee", "laulaa", "vetaa", "istuu"]
ADJS = ["pieni", "vanha", "sini"]
ADPS = ["alla", "yli"]

LEXICON = PERS + ORGS + NOUNS + VERBS + ADJS + ADPS + ["se", "ja"]


def to_yy(word: str) -> str:
    return "".join(GREEK[c] for c in word)


def upos(word: str) -> str:
    if word in PERS or word in ORGS:
        return "PROPN"
    if word in NOUNS:
        return "NOUN"
    if word in VERBS:
        return "VERB"
    if word in ADJS:
        return "ADJ"
    if word in ADPS:
        return "ADP"
    if word == "se":
        return "DET"
    return "CCONJ"


# ---------------------------------------------------------------------------
# language-model corpora: 16 eight-token sentence types in a fixed cycle

def lm_types():
    names = PERS + ORGS
    types = []
    for i in range(16):
        n1 = NOUNS[i % 7]
        n2 = NOUNS[(i + 3) % 7]
        types.append([
            "se", ADJS[i % 3], n1, VERBS[i % 5], ADPS[i % 2], n2, "ja",
            names[i % 7],
        ])
    return types


def lm_corpus():
    lines = []
    for _ in range(15):  # 16 types x 15 cycles x 8 tokens = 1920 tokens
        for t in lm_types():
            lines.append(" ".join(t))
    return lines


# ---------------------------------------------------------------------------
# dependency fixtures: five templates, lexemes rotated by sentence index

def ud_sentence(k: int):
    n1 = NOUNS[(2 * k) % 7]
    n2 = NOUNS[(2 * k + 3) % 7]
    v = VERBS[k % 5]
    a = ADJS[k % 3]
    p = ADPS[k % 2]
    per = PERS[k % 4]
    per2 = PERS[(k + 1) % 4]
    t = k % 5
    if t == 0:
        tokens = ["se", a, n1, v, p, n2]
        heads = [3, 3, 4, 0, 6, 4]
        rels = ["det", "amod", "nsubj", "root", "case", "obl"]
    elif t == 1:
        tokens = [per, n1, v, "se", n2]
        heads = [2, 3, 0, 5, 3]
        rels = ["nmod:poss", "nsubj", "root", "det", "obj"]
    elif t == 2:
        tokens = [n1, v, a, n2]
        heads = [2, 0, 4, 2]
        rels = ["nsubj", "root", "amod", "obj"]
    elif t == 3:
        tokens = [per, "ja", per2, v, n1]
        heads = [4, 3, 1, 0, 4]
        rels = ["nsubj", "cc", "conj", "root", "obj"]
    else:
        tokens = ["se", per, n1, v, p, n2]
        heads = [3, 3, 4, 0, 6, 4]
        rels = ["det", "nmod:poss", "nsubj", "root", "case", "obl"]
    return tokens, heads, rels


def conllu(sents, translit=False):
    out = []
    for i, (tokens, heads, rels) in enumerate(sents):
        forms = [to_yy(w) if translit else w for w in tokens]
        out.append(f"# sent_id = {i + 1}")
        out.append("# text = " + " ".join(forms))
        for j, form in enumerate(forms):
            out.append("\t".join([
                str(j + 1), form, "_", upos(tokens[j]), "_", "_",
                str(heads[j]), rels[j], "_", "_",
            ]))
        out.append("")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# role-labeling fixtures: three templates keyed on the predicate position

def srl_sentence(k: int):
    n1 = NOUNS[(3 * k) % 7]
    n2 = NOUNS[(3 * k + 2) % 7]
    v = VERBS[(k + 2) % 5]
    per = PERS[(k + 2) % 4]
    t = k % 3
    if t == 0:
        tokens = [per, v, n1, "alla", n2]
        pred = 1
        tags = ["B-ARG0", "B-V", "B-ARG1", "B-AM-LOC", "I-AM-LOC"]
    elif t == 1:
        tokens = [n1, v, "se", n2]
        pred = 1
        tags = ["B-ARG0", "B-V", "B-ARG1", "I-ARG1"]
    else:
        tokens = ["yli", n1, per, v, n2]
        pred = 3
        tags = ["B-AM-LOC", "I-AM-LOC", "B-ARG0", "B-V", "B-ARG1"]
    return tokens, pred, tags


def srl_file(sents, translit=False):
    out = []
    for tokens, pred, tags in sents:
        for j, w in enumerate(tokens):
            form = to_yy(w) if translit else w
            out.append(f"{form}\t{'V' if j == pred else '_'}\t{tags[j]}")
        out.append("")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# entity fixtures: person and organization names from closed sets

def ner_sentence(k: int):
    p1 = PERS[k % 4]
    p2 = PERS[(k + 1) % 4]
    o1 = ORGS[k % 3]
    o2 = ORGS[(k + 1) % 3]
    n1 = NOUNS[(5 * k) % 7]
    n2 = NOUNS[(5 * k + 1) % 7]
    v = VERBS[(k + 3) % 5]
    t = k % 4
    if t == 0:
        tokens = [p1, p2, v, "se", n1]
        tags = ["B-PER", "I-PER", "O", "O", "O"]
    elif t == 1:
        tokens = ["se", n1, v, o1, o2]
        tags = ["O", "O", "O", "B-ORG", "I-ORG"]
    elif t == 2:
        tokens = [p1, v, "yli", o1, n1]
        tags = ["B-PER", "O", "O", "B-ORG", "O"]
    else:
        tokens = [n1, "ja", n2, v]
        tags = ["O", "O", "O", "O"]
    return tokens, tags


def ner_file(sents, translit=False):
    out = []
    for tokens, tags in sents:
        for w, tag in zip(tokens, tags):
            form = to_yy(w) if translit else w
            out.append(f"{form}\t{tag}")
        out.append("")
    return "\n".join(out) + "\n"


def main():
    lm_xx = lm_corpus()
    lm_yy = [" ".join(to_yy(w) for w in line.split()) for line in lm_xx]
    (HERE / "lm_xx.txt").write_text("\n".join(lm_xx) + "\n")
    (HERE / "lm_yy.txt").write_text("\n".join(lm_yy) + "\n")

    ud = [ud_sentence(k) for k in range(70)]
    assert len({tuple(s[0]) for s in ud}) == 70, "dependency sentences must be distinct"
    (HERE / "ud_train_xx.conllu").write_text(conllu(ud[:50]))
    (HERE / "ud_dev_xx.conllu").write_text(conllu(ud[50:60]))
    (HERE / "ud_test_xx.conllu").write_text(conllu(ud[60:70]))
    (HERE / "ud_train_yy.conllu").write_text(conllu(ud[:50], translit=True))

    srl = [srl_sentence(k) for k in range(36)]
    assert len({tuple(s[0]) for s in srl}) == 36, "role sentences must be distinct"
    (HERE / "srl_train_xx.tsv").write_text(srl_file(srl[:20]))
    (HERE / "srl_dev_xx.tsv").write_text(srl_file(srl[20:28]))
    (HERE / "srl_test_xx.tsv").write_text(srl_file(srl[28:36]))
    (HERE / "srl_train_yy.tsv").write_text(srl_file(srl[:20], translit=True))

    ner = [ner_sentence(k) for k in range(36)]
    assert len({tuple(s[0]) for s in ner}) == 36, "entity sentences must be distinct"
    (HERE / "ner_train_xx.tsv").write_text(ner_file(ner[:20]))
    (HERE / "ner_dev_xx.tsv").write_text(ner_file(ner[20:28]))
    (HERE / "ner_test_xx.tsv").write_text(ner_file(ner[28:36]))
    (HERE / "ner_train_yy.tsv").write_text(ner_file(ner[:20], translit=True))

    pairs = [f"{w} {to_yy(w)}" for w in LEXICON]
    assert len({p.split()[1] for p in pairs}) == len(LEXICON)
    (HERE / "dict_xx_yy.txt").write_text("\n".join(pairs) + "\n")

    # No task sentence may also be a language-model line (exclusion guard).
    lm_lines = set(lm_xx) | set(lm_yy)
    task_lines = {" ".join(s[0]) for s in ud + srl + ner}
    task_lines |= {" ".join(to_yy(w) for w in s[0]) for s in ud + srl + ner}
    assert not (lm_lines & task_lines), "task sentences leaked into the LM corpora"
    print(f"lexicon {len(LEXICON)} words; lm {sum(len(l.split()) for l in lm_xx)} tokens/side")


if __name__ == "__main__":
    main()
