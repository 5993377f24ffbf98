"""Instruction and response templates, rendered byte-exactly from typed params.

Rendering is pure: the same kind and params always produce the same string,
and the output never contains the literal ``[obj]``/``[num]`` placeholders.
"""

from __future__ import annotations

import enum

from .errors import MissingPlaceholder


class TemplateKind(str, enum.Enum):
    BASELINE_QUESTION = "baseline_question"
    BASELINE_ANSWER = "baseline_answer"
    D3T_RANGE_QUESTION = "d3t_range_question"
    D3T_YES = "d3t_yes"
    D3T_NO = "d3t_no"
    D3T_FINAL_QUESTION = "d3t_final_question"
    D3T_FINAL_ANSWER = "d3t_final_answer"
    CRCO_RANK_QUESTION = "crco_rank_question"
    CRCO_RANK_ANSWER = "crco_rank_answer"
    SINGLE_ROUND_RANGE_QUESTION = "single_round_range_question"
    INFERENCE_QUESTION = "inference_question"


_COUNT_WORDS = {
    2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
    7: "seven", 8: "eight", 9: "nine", 10: "ten",
}


def _need(params: dict, kind: TemplateKind, key: str):
    if key not in params or params[key] is None:
        raise MissingPlaceholder(f"{kind.value} requires parameter {key!r}")
    return params[key]


def _count_word(k: int) -> str:
    return _COUNT_WORDS.get(k, str(k))


def render(kind: TemplateKind | str, **params) -> str:
    """Render one template kind with its placeholder parameters.

    Parameters by kind: ``obj`` (category name) for all question kinds;
    ``num`` for the count answers; ``tau`` for the range probe; ``order``
    (presented indices in ascending-count order) for the ranking answer;
    ``k`` for the ranking question; ``ranges`` (list of (lower, upper))
    for the single-round range question.
    """
    kind = TemplateKind(kind)
    if kind in (
        TemplateKind.BASELINE_QUESTION,
        TemplateKind.D3T_FINAL_QUESTION,
        TemplateKind.INFERENCE_QUESTION,
    ):
        obj = _need(params, kind, "obj")
        return f"How many {obj} are there in the image?"
    if kind in (TemplateKind.BASELINE_ANSWER, TemplateKind.D3T_FINAL_ANSWER):
        num = _need(params, kind, "num")
        obj = _need(params, kind, "obj")
        return f"a photo of {num} {obj}"
    if kind is TemplateKind.D3T_RANGE_QUESTION:
        tau = _need(params, kind, "tau")
        obj = _need(params, kind, "obj")
        return f"Are there more than {tau} {obj} in the image?"
    if kind is TemplateKind.D3T_YES:
        return "yes"
    if kind is TemplateKind.D3T_NO:
        return "no"
    if kind is TemplateKind.CRCO_RANK_QUESTION:
        obj = _need(params, kind, "obj")
        k = int(_need(params, kind, "k"))
        return (
            f"Given {_count_word(k)} images, rank them in ascending order "
            f"based on their counts of {obj}"
        )
    if kind is TemplateKind.CRCO_RANK_ANSWER:
        order = _need(params, kind, "order")
        if not order:
            raise MissingPlaceholder("crco_rank_answer requires a non-empty order")
        return " < ".join(f"Image {i}" for i in order)
    if kind is TemplateKind.SINGLE_ROUND_RANGE_QUESTION:
        obj = _need(params, kind, "obj")
        ranges = _need(params, kind, "ranges")
        if not ranges:
            raise MissingPlaceholder("single_round_range_question requires ranges")
        listing = ", ".join(f"[{lo},{hi}]" for lo, hi in ranges)
        return (
            f"Given the image, please determine into which range the number "
            f"of {obj} falls: {{{listing}}}."
        )
    raise MissingPlaceholder(f"unknown template kind {kind!r}")
