#!/usr/bin/env python3
"""Generate resources/lexicons/antonyms.tsv from the English WordNet.

Needs nltk with the WordNet corpus:

    pip install nltk
    python3 -m nltk.downloader wordnet
    python3 scripts/build_antonyms.py --words data/fixture/fixture_ro-en.tsv \
        --out resources/lexicons/antonyms.tsv --update-sums

Each output line is `word<TAB>antonym1,antonym2,...`, lowercase, sorted, with
single-word ASCII-alphabetic entries only. With --words, only words appearing
in the given files (any column) are kept, which keeps the file small and
reviewable. --update-sums rewrites the SHA256SUMS manifest next to the output
so the loader's checksum verification passes.
"""

import argparse
import hashlib
import pathlib
import re
import sys

WORD = re.compile(r"^[a-z]+$")


def wordnet_antonyms():
    from nltk.corpus import wordnet as wn

    out = {}
    for synset in wn.all_synsets():
        for lemma in synset.lemmas():
            word = lemma.name().lower()
            if not WORD.match(word):
                continue
            for ant in lemma.antonyms():
                a = ant.name().lower()
                if WORD.match(a) and a != word:
                    out.setdefault(word, set()).add(a)
    return out


def words_in(paths):
    seen = set()
    for p in paths:
        for tok in re.findall(r"[A-Za-z]+", pathlib.Path(p).read_text(encoding="utf-8")):
            seen.add(tok.lower())
    return seen


def update_sums(lexicon_dir):
    manifest = lexicon_dir / "SHA256SUMS"
    lines = []
    for line in manifest.read_text().splitlines():
        digest, name = line.split(None, 1)
        data = (lexicon_dir / name.strip()).read_bytes()
        lines.append(f"{hashlib.sha256(data).hexdigest()}  {name.strip()}")
    manifest.write_text("\n".join(lines) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="resources/lexicons/antonyms.tsv")
    ap.add_argument("--words", nargs="*", default=[], help="restrict to words found in these files")
    ap.add_argument("--update-sums", action="store_true")
    args = ap.parse_args()

    table = wordnet_antonyms()
    if args.words:
        keep = words_in(args.words)
        table = {w: a for w, a in table.items() if w in keep}
    out = pathlib.Path(args.out)
    out.write_text("".join(f"{w}\t{','.join(sorted(a))}\n" for w, a in sorted(table.items())), encoding="utf-8")
    print(f"{len(table)} entries written to {out}", file=sys.stderr)
    if args.update_sums:
        update_sums(out.parent)


if __name__ == "__main__":
    main()
