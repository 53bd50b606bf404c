"""Stemmer oracle tests.

Two layers: the per-step example pairs published with the classic
algorithm (each exercises exactly one step), and a frozen vocabulary of
full-pipeline results derived by tracing every word through all steps by
hand.
"""
import pytest

from bioqa.retrieval import stemmer
from bioqa.retrieval.stemmer import stem

STEP1A_PAIRS = [
    ("caresses", "caress"),
    ("ponies", "poni"),
    ("ties", "ti"),
    ("caress", "caress"),
    ("cats", "cat"),
]

STEP1B_PAIRS = [
    ("feed", "feed"),
    ("agreed", "agree"),
    ("plastered", "plaster"),
    ("bled", "bled"),
    ("motoring", "motor"),
    ("sing", "sing"),
    ("conflated", "conflate"),
    ("troubled", "trouble"),
    ("sized", "size"),
    ("hopping", "hop"),
    ("tanned", "tan"),
    ("falling", "fall"),
    ("hissing", "hiss"),
    ("fizzed", "fizz"),
    ("failing", "fail"),
    ("filing", "file"),
]

STEP1C_PAIRS = [
    ("happy", "happi"),
    ("sky", "sky"),
]

STEP2_PAIRS = [
    ("relational", "relate"),
    ("conditional", "condition"),
    ("rational", "rational"),
    ("valenci", "valence"),
    ("hesitanci", "hesitance"),
    ("digitizer", "digitize"),
    ("conformabli", "conformable"),
    ("radicalli", "radical"),
    ("differentli", "different"),
    ("vileli", "vile"),
    ("analogousli", "analogous"),
    ("vietnamization", "vietnamize"),
    ("predication", "predicate"),
    ("operator", "operate"),
    ("feudalism", "feudal"),
    ("decisiveness", "decisive"),
    ("hopefulness", "hopeful"),
    ("callousness", "callous"),
    ("formaliti", "formal"),
    ("sensitiviti", "sensitive"),
    ("sensibiliti", "sensible"),
]

STEP3_PAIRS = [
    ("triplicate", "triplic"),
    ("formative", "form"),
    ("formalize", "formal"),
    ("electriciti", "electric"),
    ("electrical", "electric"),
    ("hopeful", "hope"),
    ("goodness", "good"),
]

STEP4_PAIRS = [
    ("revival", "reviv"),
    ("allowance", "allow"),
    ("inference", "infer"),
    ("airliner", "airlin"),
    ("gyroscopic", "gyroscop"),
    ("adjustable", "adjust"),
    ("defensible", "defens"),
    ("irritant", "irrit"),
    ("replacement", "replac"),
    ("adjustment", "adjust"),
    ("dependent", "depend"),
    ("adoption", "adopt"),
    ("communism", "commun"),
    ("activate", "activ"),
    ("angulariti", "angular"),
    ("homologous", "homolog"),
    ("effective", "effect"),
    ("bowdlerize", "bowdler"),
]

STEP5A_PAIRS = [
    ("probate", "probat"),
    ("rate", "rate"),
    ("cease", "ceas"),
]

STEP5B_PAIRS = [
    ("controll", "control"),
    ("roll", "roll"),
]


@pytest.mark.parametrize("word,expected", STEP1A_PAIRS)
def test_step1a(word, expected):
    assert stemmer._step1a(word) == expected


@pytest.mark.parametrize("word,expected", STEP1B_PAIRS)
def test_step1b(word, expected):
    assert stemmer._step1b(word) == expected


@pytest.mark.parametrize("word,expected", STEP1C_PAIRS)
def test_step1c(word, expected):
    assert stemmer._step1c(word) == expected


@pytest.mark.parametrize("word,expected", STEP2_PAIRS)
def test_step2(word, expected):
    assert stemmer._step2(word) == expected


@pytest.mark.parametrize("word,expected", STEP3_PAIRS)
def test_step3(word, expected):
    assert stemmer._step3(word) == expected


@pytest.mark.parametrize("word,expected", STEP4_PAIRS)
def test_step4(word, expected):
    assert stemmer._step4(word) == expected


@pytest.mark.parametrize("word,expected", STEP5A_PAIRS)
def test_step5a(word, expected):
    assert stemmer._step5a(word) == expected


@pytest.mark.parametrize("word,expected", STEP5B_PAIRS)
def test_step5b(word, expected):
    assert stemmer._step5b(word) == expected


# full-pipeline results, each traced through the rule sequence by hand
FULL_PAIRS = [
    ("caresses", "caress"),
    ("ponies", "poni"),
    ("ties", "ti"),
    ("cats", "cat"),
    ("feed", "feed"),
    ("agreed", "agre"),
    ("plastered", "plaster"),
    ("bled", "bled"),
    ("motoring", "motor"),
    ("sing", "sing"),
    ("conflated", "conflat"),
    ("troubled", "troubl"),
    ("sized", "size"),
    ("hopping", "hop"),
    ("tanned", "tan"),
    ("falling", "fall"),
    ("hissing", "hiss"),
    ("fizzed", "fizz"),
    ("failing", "fail"),
    ("filing", "file"),
    ("happy", "happi"),
    ("sky", "sky"),
    ("relational", "relat"),
    ("conditional", "condit"),
    ("rational", "ration"),
    ("valenci", "valenc"),
    ("hesitanci", "hesit"),
    ("digitizer", "digit"),
    ("conformabli", "conform"),
    ("radicalli", "radic"),
    ("differentli", "differ"),
    ("vileli", "vile"),
    ("analogousli", "analog"),
    ("vietnamization", "vietnam"),
    ("predication", "predic"),
    ("operator", "oper"),
    ("feudalism", "feudal"),
    ("decisiveness", "decis"),
    ("hopefulness", "hope"),
    ("callousness", "callous"),
    ("formaliti", "formal"),
    ("sensitiviti", "sensit"),
    ("sensibiliti", "sensibl"),
    ("triplicate", "triplic"),
    ("formative", "form"),
    ("formalize", "formal"),
    ("electriciti", "electr"),
    ("electrical", "electr"),
    ("hopeful", "hope"),
    ("goodness", "good"),
    ("revival", "reviv"),
    ("allowance", "allow"),
    ("inference", "infer"),
    ("airliner", "airlin"),
    ("gyroscopic", "gyroscop"),
    ("adjustable", "adjust"),
    ("defensible", "defens"),
    ("irritant", "irrit"),
    ("replacement", "replac"),
    ("adjustment", "adjust"),
    ("dependent", "depend"),
    ("adoption", "adopt"),
    ("communism", "commun"),
    ("activate", "activ"),
    ("angulariti", "angular"),
    ("homologous", "homolog"),
    ("effective", "effect"),
    ("bowdlerize", "bowdler"),
    ("probate", "probat"),
    ("rate", "rate"),
    ("cease", "ceas"),
    ("controll", "control"),
    ("roll", "roll"),
    ("reduces", "reduc"),
    ("fevers", "fever"),
    ("aspirin", "aspirin"),
]


@pytest.mark.parametrize("word,expected", FULL_PAIRS)
def test_full_pipeline(word, expected):
    assert stem(word) == expected


def test_short_words_unchanged():
    for word in ("a", "an", "to", "is"):
        assert stem(word) == word


def test_digit_tokens_pass_through():
    assert stem("covid19") == "covid19"
    assert stem("2024") == "2024"
