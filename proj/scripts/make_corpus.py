#!/usr/bin/env python3
"""Builds data/corpus.txt and data/phrases.tsv from Norvig's big.txt.

big.txt ships inside the autocorrect 0.3.0 sdist (autocorrect/words.bz2).
Only the public-domain Project Gutenberg books at its start are used:
"The Adventures of Sherlock Holmes" and the opening of Beard's
"History of the United States".

    python3 scripts/make_corpus.py /path/to/big.txt data/
"""
import random
import re
import sys
from collections import Counter

TARGET_CHARS = 1_000_000
N_IV, N_OOV = 140, 70
SEED = 20201

# Modern words absent from 19th-century prose; one is injected per OOV phrase.
OOV_WORDS = """laptop email website smartphone podcast download upload online
selfie hashtag blog emoji wifi password username playlist streaming webcam
spreadsheet chatbot app browser inbox netflix skype zoom tablet keyboard
printer toaster microwave fridge jogging yoga pizza burrito sushi taco
uber scooter airport airline passport vaccine pandemic astronaut satellite
robot rocket cinema movie rockstar karaoke barbecue cheeseburger ketchup
popcorn chocolate cellphone texting voicemail software hardware internet
startup podcaster influencer meme gamer laptops emails websites""".split()


def book(text, start_marker, end_marker):
    s = text.index(start_marker)
    s = text.index("\n", s) + 1
    e = text.index(end_marker, s) if end_marker else len(text)
    return text[s:e]


def normalize(raw):
    t = raw.lower()
    t = t.replace("--", " ").replace("-", " ")
    t = re.sub(r"[;:]", ",", t)
    t = re.sub(r"[^a-z' .,?!\n]", " ", t)
    # apostrophes only inside words
    t = re.sub(r"(?<![a-z])'|'(?![a-z])", " ", t)
    t = re.sub(r"\s+", " ", t)
    t = re.sub(r" ([.,?!])", r"\1", t)
    t = re.sub(r"([.,?!])[.,?!]+", r"\1", t)
    return t.strip()


def sentences(text):
    paragraphs = re.split(r"\n\s*\n", text)
    out = []
    for p in paragraphs:
        p = normalize(p)
        for s in re.split(r"(?<=[.?!]) ", p):
            s = s.strip(" ,")
            if len(re.findall(r"[a-z]", s)) >= 2:
                out.append(s)
    return out


def words_of(s):
    return re.findall(r"[a-z']+", s)


def main():
    src, outdir = sys.argv[1], sys.argv[2]
    text = open(src, encoding="latin-1").read()
    holmes = book(text, "*** START OF THE PROJECT GUTENBERG EBOOK, THE ADVENTURES OF SHERLOCK HOLMES",
                  "*** END OF THE PROJECT GUTENBERG EBOOK, THE ADVENTURES OF SHERLOCK HOLMES")
    history = book(text, "*** START OF THIS PROJECT GUTENBERG EBOOK HISTORY OF THE UNITED STATES", None)
    sents = sentences(holmes) + sentences(history)

    total, kept = 0, []
    for s in sents:
        if total >= TARGET_CHARS:
            break
        kept.append(s)
        total += len(s) + 1

    rng = random.Random(SEED)
    candidates = [i for i, s in enumerate(kept)
                  if 5 <= len(words_of(s)) <= 9 and len(s) <= 48
                  and re.fullmatch(r"[a-z' ]+[.?!]?", s)]
    rng.shuffle(candidates)
    held = set(candidates[: 4 * (N_IV + N_OOV)])
    train = [s for i, s in enumerate(kept) if i not in held]

    counts = Counter(w for s in train for w in words_of(s))
    vocab = {w for w, c in counts.items() if c >= 2}

    iv = []
    for i in candidates[: 4 * (N_IV + N_OOV)]:
        phrase = re.sub(r"[.?!]$", "", kept[i]).strip()
        ws = phrase.split()
        if all(w in vocab for w in ws) and phrase not in iv:
            iv.append(phrase)
    if len(iv) < N_IV + N_OOV:
        sys.exit(f"only {len(iv)} in-vocabulary phrases")
    oov_words = [w for w in OOV_WORDS if w not in vocab]
    phrases = [("IV", p) for p in iv[:N_IV]]
    for k, p in enumerate(iv[N_IV:N_IV + N_OOV]):
        ws = p.split()
        slots = [j for j, w in enumerate(ws) if len(w) >= 3] or [len(ws) - 1]
        ws[rng.choice(slots)] = oov_words[k % len(oov_words)]
        phrases.append(("OOV", " ".join(ws)))
    rng.shuffle(phrases)

    with open(f"{outdir}/corpus.txt", "w") as f:
        f.write("\n".join(train) + "\n")
    with open(f"{outdir}/phrases.tsv", "w") as f:
        for tag, p in phrases:
            f.write(f"{tag}\t{p}\n")
    print(f"corpus: {len(train)} sentences, {sum(len(s) + 1 for s in train)} chars, "
          f"vocab {len(vocab)}; phrases: {len(phrases)}")


if __name__ == "__main__":
    main()
