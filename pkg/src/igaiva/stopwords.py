"""Built-in stopword lists for Spanish and English ticket text."""

from __future__ import annotations

from typing import AbstractSet, Iterable

SPANISH = frozenset("""
a al algo algunas algunos ante antes como con contra cual cuando de del desde
donde dos durante e el ella ellas ellos en entre era erais eran eras eres es
esa esas ese eso esos esta estaba estado estamos estan estar estas este esto
estos fue fueron fui ha habia han hasta hay la las le les lo los mas me mi mia
mias mientras mio mios mis mucho muchos muy nada ni no nos nosotras nosotros
nuestra nuestras nuestro nuestros o os otra otras otro otros para pero poco
por porque que quien quienes se sea sean segun ser si sido sin sobre sois
somos son soy su sus suya suyas suyo suyos tambien tanto te tenemos tengo ti
tiene tienen toda todas todo todos tu tus tuya tuyas tuyo tuyos un una unas
uno unos vosotras vosotros vuestra vuestras vuestro vuestros y ya yo él ésta
éste
""".split())

ENGLISH = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can did do does doing down during each
few for from further had has have having he her here hers herself him himself
his how i if in into is it its itself just me more most my myself no nor not
now of off on once only or other our ours ourselves out over own same she
should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what
when where which while who whom why will with you your yours yourself
yourselves
""".split())

_NAMED: dict[str, frozenset[str]] = {
    "es": SPANISH,
    "en": ENGLISH,
    "es+en": SPANISH | ENGLISH,
    "en+es": SPANISH | ENGLISH,
    "none": frozenset(),
}


def resolve(stopwords: str | AbstractSet[str] | Iterable[str] | None) -> frozenset[str]:
    """Map a stopword spec (set id like "es", "en", "es+en", None, or an
    explicit collection of terms) to a frozen set."""
    if stopwords is None:
        return frozenset()
    if isinstance(stopwords, str):
        try:
            return _NAMED[stopwords]
        except KeyError:
            raise ValueError(
                f"unknown stopword set {stopwords!r}; expected one of {sorted(_NAMED)}"
            ) from None
    return frozenset(stopwords)
