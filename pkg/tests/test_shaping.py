"""Contextual shaping checks against an independent joining oracle.

The oracle below re-derives positional forms with a single left-to-right
scan carrying a "previous letter connects forward" flag -- a different
organization from the shaper's precomputed neighbor arrays.  It shares the
joining-class *table* (which is plain data, spot-checked separately); only
the algorithm is independently recoded.
"""

from __future__ import annotations

import unicodedata

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glyphtext.shaping import (
    ArabicShaper,
    Cluster,
    Form,
    JoiningClass,
    PLACEHOLDER_BASE,
    is_combining_mark,
    load_joining_classes,
    normalize,
    presentation_form,
)

LETTERS = [chr(c) for c in range(0x0621, 0x064B)]  # hamza .. yeh
MARKS = [chr(c) for c in range(0x064B, 0x0653)]    # fathatan .. sukun
TATWEEL = "ـ"

_CLASSES = load_joining_classes()


def oracle_forms(text: str) -> list[Form]:
    """Linear-scan reference: carry whether the previous base connects on."""
    text = normalize(text)
    # group into (base, marks) clusters exactly as Unicode combining
    # classes dictate; a leading mark gets the dotted-circle placeholder
    bases: list[int] = []
    for ch in text:
        if is_combining_mark(ord(ch)) and bases:
            continue
        if is_combining_mark(ord(ch)):
            bases.append(PLACEHOLDER_BASE)
        else:
            bases.append(ord(ch))
    cls = [_CLASSES.get(b, JoiningClass.TRANSPARENT if is_combining_mark(b)
                        else JoiningClass.NON_JOINING) for b in bases]

    joins = (JoiningClass.DUAL, JoiningClass.RIGHT_JOINING)
    forms: list[Form] = []
    prev_connects = False
    for i, c in enumerate(cls):
        nxt = None
        for j in range(i + 1, len(cls)):
            if cls[j] is not JoiningClass.TRANSPARENT:
                nxt = cls[j]
                break
        if c is JoiningClass.TRANSPARENT:
            forms.append(Form.ISOLATED)
            continue
        to_prev = prev_connects and c in joins
        to_next = c is JoiningClass.DUAL and nxt in joins
        if to_prev and to_next:
            forms.append(Form.MEDIAL)
        elif to_prev:
            forms.append(Form.FINAL)
        elif to_next:
            forms.append(Form.INITIAL)
        else:
            forms.append(Form.ISOLATED)
        prev_connects = c is JoiningClass.DUAL
    return forms


def shaper_forms(shaper: ArabicShaper, text: str) -> list[Form]:
    return [sc.form for sc in shaper.shape_text(text)]


def random_arabic_text(rng: np.random.Generator) -> str:
    pool = LETTERS + MARKS + [" ", TATWEEL, "a", "1", "‍"]
    weights = [3.0] * len(LETTERS) + [1.0] * len(MARKS) + [2.0, 1.0, 0.5, 0.5, 0.3]
    p = np.array(weights) / sum(weights)
    n = int(rng.integers(1, 30))
    return "".join(rng.choice(pool, size=n, p=p))


def test_oracle_agreement_randomized():
    shaper = ArabicShaper()
    rng = np.random.default_rng(0)
    mismatches = 0
    for _ in range(1000):
        text = random_arabic_text(rng)
        if shaper_forms(shaper, text) != oracle_forms(text):
            mismatches += 1
    assert mismatches == 0


def test_seen_takes_all_four_forms():
    shaper = ArabicShaper()
    seen = "س"
    beh = "ب"
    assert shaper_forms(shaper, seen) == [Form.ISOLATED]
    assert shaper_forms(shaper, seen + beh)[0] == Form.INITIAL
    assert shaper_forms(shaper, beh + seen + beh)[1] == Form.MEDIAL
    assert shaper_forms(shaper, beh + seen)[1] == Form.FINAL


def test_beh_with_diacritics_clusters_and_joins():
    shaper = ArabicShaper()
    # beh+fatha then beh+shadda+kasra: marks ride their base cluster and
    # stay transparent to joining, so beh still takes INITIAL/FINAL.
    # NFC reorders the pair canonically (kasra ccc=32 before shadda ccc=33).
    text = "بَبِّ"
    shaped = shaper.shape_text(text)
    assert len(shaped) == 2
    assert shaped[0].base == 0x0628 and shaped[0].marks == (0x064E,)
    assert shaped[1].base == 0x0628 and shaped[1].marks == (0x0650, 0x0651)
    assert [sc.form for sc in shaped] == [Form.INITIAL, Form.FINAL]


def test_right_joiner_blocks_forward_connection():
    shaper = ArabicShaper()
    # alef joins only to the right: beh-alef-beh renders beh INITIAL,
    # alef FINAL, then the chain is broken and the last beh is ISOLATED
    forms = shaper_forms(shaper, "باب")
    assert forms == [Form.INITIAL, Form.FINAL, Form.ISOLATED]


def test_non_joining_separator_isolates():
    shaper = ArabicShaper()
    forms = shaper_forms(shaper, "ب ب")
    assert forms == [Form.ISOLATED, Form.ISOLATED, Form.ISOLATED]


def test_tatweel_is_dual_joining():
    shaper = ArabicShaper()
    forms = shaper_forms(shaper, "بـب")
    assert forms == [Form.INITIAL, Form.MEDIAL, Form.FINAL]


def test_joining_class_spot_values():
    shaper = ArabicShaper()
    assert shaper.joining_class(0x0628) is JoiningClass.DUAL          # beh
    assert shaper.joining_class(0x0627) is JoiningClass.RIGHT_JOINING # alef
    assert shaper.joining_class(0x0621) is JoiningClass.NON_JOINING   # hamza
    assert shaper.joining_class(0x064B) is JoiningClass.TRANSPARENT   # fathatan
    assert shaper.joining_class(ord("A")) is JoiningClass.NON_JOINING


def test_presentation_forms_match_unicode_names():
    # unicodedata names are an independent route to Presentation Forms-B
    cases = [
        (0x0633, Form.ISOLATED, "ARABIC LETTER SEEN ISOLATED FORM"),
        (0x0633, Form.FINAL, "ARABIC LETTER SEEN FINAL FORM"),
        (0x0633, Form.INITIAL, "ARABIC LETTER SEEN INITIAL FORM"),
        (0x0633, Form.MEDIAL, "ARABIC LETTER SEEN MEDIAL FORM"),
        (0x0628, Form.INITIAL, "ARABIC LETTER BEH INITIAL FORM"),
        (0x0627, Form.FINAL, "ARABIC LETTER ALEF FINAL FORM"),
    ]
    for cp, form, name in cases:
        got = presentation_form(cp, form)
        assert got is not None
        assert unicodedata.name(chr(got)) == name


def test_normalize_strips_formatting_keeps_whitespace():
    assert normalize("ب‌ا") == "با"  # ZWNJ removed
    assert normalize("a\tb\nc") == "a\tb\nc"
    # NFC composes alef + madda above into alef-with-madda
    assert normalize("آ") == "آ"


def test_leading_mark_gets_placeholder_base():
    shaper = ArabicShaper()
    shaped = shaper.shape_text("َب")
    assert shaped[0].base == PLACEHOLDER_BASE
    assert shaped[0].marks == (0x064E,)
    assert shaped[1].base == 0x0628


def test_empty_and_whitespace_only():
    shaper = ArabicShaper()
    assert shaper.shape_text("") == []
    assert [sc.form for sc in shaper.shape_text("  ")] == [Form.ISOLATED] * 2


arabic_text = st.text(
    alphabet=st.sampled_from(LETTERS + MARKS + [" ", TATWEEL]),
    min_size=0, max_size=25,
)


@settings(max_examples=200, deadline=None)
@given(arabic_text)
def test_property_matches_oracle(text):
    assert shaper_forms(ArabicShaper(), text) == oracle_forms(text)


@settings(max_examples=100, deadline=None)
@given(arabic_text)
def test_property_cluster_count(text):
    """One shaped cluster per non-mark character (plus placeholder runs)."""
    norm = normalize(text)
    shaped = ArabicShaper().shape_text(text)
    n_marks_attached = sum(len(sc.marks) for sc in shaped if sc.base != PLACEHOLDER_BASE)
    n_placeholder_marks = sum(len(sc.marks) for sc in shaped if sc.base == PLACEHOLDER_BASE)
    n_bases = sum(1 for sc in shaped if sc.base != PLACEHOLDER_BASE)
    assert n_bases + n_marks_attached + n_placeholder_marks == len(norm)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(LETTERS), min_size=2, max_size=8),
       st.sampled_from(MARKS))
def test_property_marks_transparent_to_joining(letters, mark):
    """Attaching a mark to any letter never changes the form sequence."""
    shaper = ArabicShaper()
    plain = "".join(letters)
    for i in range(len(letters)):
        marked = "".join(ls + (mark if j == i else "") for j, ls in enumerate(letters))
        assert shaper_forms(shaper, marked) == shaper_forms(shaper, plain)
