"""Regenerates fres_reference.tsv.

Column 1: textstat 0.7.13 Flesch Reading Ease (CMU pronouncing dictionary
syllables, pyphen fallback). Column 2: the vowel-group formula computed here,
independently of the Rust code. Column 3: the passage.
"""
import re
import sys

import textstat


def syllables(word):
    if any(c.isdigit() for c in word):
        return 1
    letters = [c.lower() for c in word if c.isalpha()]
    if not letters:
        return 1
    groups, prev = 0, False
    for c in letters:
        v = c in "aeiouy"
        if v and not prev:
            groups += 1
        prev = v
    if letters[-1] == "e" and groups > 1:
        groups -= 1
    return max(groups, 1)


def vowel_group_fres(text):
    words = [w for w in text.split() if any(c.isalnum() for c in w)]
    sentences = 0
    has_word = False
    for i, c in enumerate(text):
        if c.isalnum():
            has_word = True
        if c in ".!?" and (i + 1 == len(text) or text[i + 1].isspace()) and has_word:
            sentences += 1
            has_word = False
    if has_word:
        sentences += 1
    sentences = max(sentences, 1)
    syl = sum(syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syl / len(words))


print("# score_textstat<TAB>score_vowel_group<TAB>text; see make_fres_reference.py")
for line in sys.stdin:
    t = line.strip()
    if t:
        print("%.4f\t%.10f\t%s" % (textstat.flesch_reading_ease(t), vowel_group_fres(t), t))
