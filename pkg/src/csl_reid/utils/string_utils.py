"""Utils functions for the csl-reid command line."""

import logging

from pyparsing import (
    Dict,
    Group,
    Literal,
    Optional,
    ParseException,
    QuotedString,
    White,
    Word,
    ZeroOrMore,
    alphanums,
    alphas,
)
from pyparsing import pyparsing_common as ppc

logger = logging.getLogger(__name__)

# Bare values may carry variant names ("ica+pct"), signs and relative paths.
BARE_VALUE_CHARS = alphanums + "_.+-/"


def convert_string_to_dict(input_string):
    """Convert a string of ``key=value`` overrides into a Python dict.

    Accepted forms: optional ``{}`` or ``[]`` around the pairs, ``=``, ``:``
    or whitespace between key and value, ``,`` or ``;`` between pairs, dotted
    keys (``train.lr0``) and quoted or bare values. ``None``/``null`` become
    an empty string.

    Args:
        input_string (str): String representation of a dict

    Returns:
        dict or None: Dictionary parsed from the input string, or None if parsing fails

    Examples:
        >>> convert_string_to_dict("train.lr0=0.05, train.epochs=3")
        {'train.lr0': 0.05, 'train.epochs': 3}
        >>> convert_string_to_dict('{"train.variant": "ica+pct"}')
        {'train.variant': 'ica+pct'}
        >>> convert_string_to_dict("train.decay_epochs='10,15'")
        {'train.decay_epochs': '10,15'}
        >>> convert_string_to_dict("train.lr0=")
        None
    """
    if not input_string or not isinstance(input_string, str):
        return {}

    left_brace = Literal("{").suppress() | Literal("[").suppress()
    right_brace = Literal("}").suppress() | Literal("]").suppress()

    quoted_string = QuotedString('"', escChar="\\", unquoteResults=True) | QuotedString(
        "'", escChar="\\", unquoteResults=True
    )
    dotted_identifier = Word(alphas + "_", alphanums + "_.")
    bare_value = Word(BARE_VALUE_CHARS)

    numeric_value = ppc.number()
    null_value = Literal("None") | Literal("null") | Literal("NULL")
    null_value.setParseAction(lambda: [""])

    # A number only counts when the whole token is numeric ("1e-3", not "1x").
    value = null_value | (numeric_value + ~Word(BARE_VALUE_CHARS)) | quoted_string | bare_value
    key = quoted_string | dotted_identifier

    colon_or_equals = (Literal(":") | Literal("=")).suppress()
    whitespace = White(min=1).leaveWhitespace().suppress()
    delimiter = colon_or_equals | whitespace

    key_value_pair = Group(key + delimiter + value)
    pair_separator = (Literal(",") | Literal(";")).suppress()
    pairs = key_value_pair + ZeroOrMore(pair_separator + key_value_pair)

    grammar = Optional(left_brace) + Optional(Dict(pairs)) + Optional(right_brace)

    try:
        result = grammar.parseString(input_string, parseAll=True).asDict()
        return result
    except ParseException as parse_error:
        logger.warning('Failed to parse string to dictionary: "%s"', input_string)
        logger.debug("Error: %s", parse_error, exc_info=True)
        return None


def parse_int_list(value):
    """Parse ``"10,15"`` / ``"10 15"`` / ``[10, 15]`` into a list of ints."""
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    if isinstance(value, (int, float)):
        return [int(value)]
    text = str(value).strip().strip("[]()")
    if not text:
        return []
    return [int(part) for part in text.replace(",", " ").split()]
