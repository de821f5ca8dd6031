"""Two worked multi-hop rollouts and a 20-document toy corpus that supports them.

Used by the test suite and ``scripts/replay_case_studies.py`` to exercise the
whole loop with scripted models.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Question
from .retrieval import CorpusDoc

_PREAMBLE = "Based on the provided contexts, here are the answers to the given queries: "

TOY_CORPUS: tuple[CorpusDoc, ...] = (
    CorpusDoc("d01", "WINNER (band)",
              "WINNER is a South Korean boy group formed in 2013 by YG Entertainment through the "
              "survival program WIN: Who Is Next. Their debut album 2014 S/S was released in August 2014."),
    CorpusDoc("d02", "2014 S/S",
              "2014 S/S is the first studio record by the South Korean quartet WINNER, released by "
              "YG Entertainment in August 2014. It topped the Gaon weekly chart."),
    CorpusDoc("d03", "YG Entertainment",
              "YG Entertainment is a South Korean entertainment company founded by Yang Hyun-suk in 1996. "
              "It created and manages the boy groups BIGBANG, iKON and WINNER."),
    CorpusDoc("d04", "iKON",
              "iKON is a South Korean boy group formed by YG Entertainment. The group's debut album "
              "Welcome was released in 2015."),
    CorpusDoc("d05", "BIGBANG",
              "BIGBANG is a South Korean boy band formed by YG Entertainment in 2006 and one of the "
              "best-selling acts in K-pop."),
    CorpusDoc("d06", "EXO",
              "EXO is a South Korean-Chinese boy group formed by SM Entertainment. Their debut album "
              "XOXO was released in 2013."),
    CorpusDoc("d07", "BTS",
              "BTS is a South Korean boy group formed by Big Hit Entertainment. Their first album "
              "2 Cool 4 Skool came out in 2013."),
    CorpusDoc("d08", "K-pop rookies of 2014",
              "Rookie artists of 2014 in K-pop included several male groups whose first albums charted "
              "in their debut year."),
    CorpusDoc("d09", "SM Entertainment",
              "SM Entertainment is a South Korean entertainment company founded by Lee Soo-man in 1995."),
    CorpusDoc("d10", "Yang Hyun-suk",
              "Yang Hyun-suk is a South Korean record executive and former member of Seo Taiji and Boys."),
    CorpusDoc("d11", "John V, Prince of Anhalt-Zerbst",
              "John V of Anhalt-Zerbst (1504 to 1551) was a German prince of the House of Ascania and ruler "
              "of the principality of Anhalt-Zerbst. He was the son of Ernest I, Prince of Anhalt-Dessau, "
              "and Margarete of Munsterberg."),
    CorpusDoc("d12", "Ernest I, Prince of Anhalt-Dessau",
              "Ernest I, Prince of Anhalt-Dessau (died 12 June 1516) was a German prince of the House of "
              "Ascania and ruler of the principality of Anhalt-Dessau. He was the father of John V, "
              "George III and Joachim I."),
    CorpusDoc("d13", "Anhalt-Zerbst",
              "Anhalt-Zerbst was a principality of the Holy Roman Empire ruled by a branch of the House "
              "of Ascania."),
    CorpusDoc("d14", "Anhalt-Dessau",
              "Anhalt-Dessau was a principality of the Holy Roman Empire with its residence at Dessau."),
    CorpusDoc("d15", "House of Ascania",
              "The House of Ascania is a dynasty of German rulers whose branches governed Anhalt, "
              "Brandenburg and Saxony."),
    CorpusDoc("d16", "Margarete of Munsterberg",
              "Margarete of Munsterberg was a duchess and the wife of Ernest I of Anhalt-Dessau."),
    CorpusDoc("d17", "George III, Prince of Anhalt-Dessau",
              "George III was a German prince and Protestant reformer who co-ruled Anhalt-Dessau "
              "with his brothers."),
    CorpusDoc("d18", "Joachim I, Prince of Anhalt-Dessau",
              "Joachim I was a German prince who ruled Anhalt-Dessau jointly with his brothers."),
    CorpusDoc("d19", "Wolfgang, Prince of Anhalt-Kothen",
              "Wolfgang of Anhalt-Kothen was a German prince and one of the signers of the Augsburg "
              "Confession."),
    CorpusDoc("d20", "German princes of the 16th century",
              "Sixteenth century German princes often shared rule of a principality among brothers, "
              "and genealogies record their birth and death dates."),
)


@dataclass(frozen=True)
class CaseStudy:
    question: Question
    policy_script: tuple[str, ...]
    squeezer_script: tuple[str, ...]
    # doc that retrieval must surface for each search turn
    evidence: tuple[str, ...]


WINNER_CASE = CaseStudy(
    question=Question(
        "hotpotqa-winner",
        "2014 S/S is the debut album of a South Korean boy group that was formed by who?",
        ("YG Entertainment",),
        "hotpotqa",
    ),
    policy_script=(
        "<think>To determine who formed the boy group, I need to first identify the boy group.</think>\n"
        "<search>boy group that debuted with the album 2014 S/S ## male group first album 2014 S/S debut "
        "## K-pop boy groups debut albums 2014 rookie artists</search>",
        "<think>Now that I know the boy group that debuted with the album 2014 S/S is WINNER. "
        "I can directly find who formed them.</think>\n"
        "<search>who formed the boy group WINNER ## WINNER boy group created by who ## who created the WINNER</search>",
        "<answer>YG Entertainment</answer>",
    ),
    squeezer_script=(
        _PREAMBLE + "WINNER is the boy group.",
        _PREAMBLE + "YG Entertainment.",
    ),
    evidence=("d02", "d03"),
)

ANHALT_CASE = CaseStudy(
    question=Question(
        "2wiki-anhalt",
        "When did John V, Prince Of Anhalt-Zerbst's father die?",
        ("12 June 1516",),
        "2wikimultihopqa",
    ),
    policy_script=(
        "<think>To determine when John V, Prince of Anhalt-Zerbst's father died, I need to first "
        "identify who his father was.</think>\n"
        "<search>father of John V, Prince of Anhalt-Zerbst ## John V Prince of Anhalt-Zerbst's father "
        "## Anhalt-Zerbst royal family tree German princes 17th century genealogy</search>",
        "<think>Now that I know his father. I can directly find when he died.</think>\n"
        "<search>Ernest I Prince of Anhalt-Dessau death date ## when did Ernest I, Prince of Anhalt-Dessau "
        "die ## Anhalt-Dessau rulers 16th century German princes death dates biography</search>",
        "<answer>12 June 1516</answer>",
    ),
    squeezer_script=(
        _PREAMBLE + "Ernest I, Prince of Anhalt-Dessau.",
        _PREAMBLE + "12 June 1516.",
    ),
    evidence=("d11", "d12"),
)

CASES = (WINNER_CASE, ANHALT_CASE)
