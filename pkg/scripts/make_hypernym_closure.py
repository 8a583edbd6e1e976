#!/usr/bin/env python3
"""Generate a hypernym-closure file from the public WordNet database.

For every requested target concept (default: color, shape) this walks the
noun hierarchy and emits one ``word<TAB>target`` line for each single-word
lemma found anywhere below a synset whose lemmas include the target word.
The output is exactly the line-delimited format ``viewmatch stats
--closure`` and ``viewmatch.dataset_tools.HypernymClosure.read`` consume: a
word counts as a hyponym of a target if any of its senses sits under any
sense of the target.

Requires the ``nltk`` package plus its ``wordnet`` corpus; neither is a
dependency of the library itself — this script is the documented recipe
for producing the file, run wherever the database is available:

    pip install nltk
    python -c "import nltk; nltk.download('wordnet')"
    python scripts/make_hypernym_closure.py --targets color,shape \
        --out closure.tsv
"""

import argparse
import sys


def collect_hyponym_lemmas(wordnet, target: str) -> set[str]:
    lemmas: set[str] = set()
    for synset in wordnet.synsets(target, pos=wordnet.NOUN):
        for hyponym in synset.closure(lambda s: s.hyponyms()):
            for lemma in hyponym.lemma_names():
                word = lemma.casefold()
                if "_" in word or word == target:
                    continue
                lemmas.add(word)
    return lemmas


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--targets", default="color,shape",
                        help="comma-separated target concepts")
    parser.add_argument("--out", default="-",
                        help="output path, or - for stdout")
    args = parser.parse_args(argv)

    try:
        from nltk.corpus import wordnet
        wordnet.ensure_loaded()
    except LookupError:
        print("error: the wordnet corpus is not downloaded; run "
              "python -c \"import nltk; nltk.download('wordnet')\"",
              file=sys.stderr)
        return 1
    except ImportError:
        print("error: this script needs the nltk package (pip install nltk)",
              file=sys.stderr)
        return 1

    lines = []
    for target in (t.strip().casefold() for t in args.targets.split(",")):
        if not target:
            continue
        for word in sorted(collect_hyponym_lemmas(wordnet, target)):
            lines.append(f"{word}\t{target}")

    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
        print(f"wrote {len(lines)} pairs to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
