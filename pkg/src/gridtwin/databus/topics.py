"""Topic path validation and wildcard filter matching.

Publish topics are plain `/`-separated paths.  Subscription filters may use
`+` (exactly one segment) and `#` (rest of the path, last segment only).
"""

from __future__ import annotations


class TopicError(ValueError):
    pass


def split_topic(path: str) -> list[str]:
    if not isinstance(path, str) or path == "":
        raise TopicError("empty topic")
    segments = path.split("/")
    if any(seg == "" for seg in segments):
        raise TopicError(f"empty segment in topic {path!r}")
    return segments


def validate_publish_topic(path: str) -> None:
    """Reject wildcards and empty segments on the publish side."""
    for seg in split_topic(path):
        if "+" in seg or "#" in seg:
            raise TopicError(f"wildcard in publish topic {path!r}")


def validate_filter(path: str) -> None:
    segments = split_topic(path)
    for i, seg in enumerate(segments):
        if seg == "#":
            if i != len(segments) - 1:
                raise TopicError(f"'#' must be the last segment in {path!r}")
        elif ("#" in seg or "+" in seg) and seg != "+":
            raise TopicError(f"wildcard must stand alone in segment of {path!r}")


def filter_is_valid(path: str) -> bool:
    try:
        validate_filter(path)
    except TopicError:
        return False
    return True


def topic_matches(filt: str, topic: str) -> bool:
    """True when ``filt`` (may contain wildcards) matches ``topic``."""
    fsegs = filt.split("/")
    tsegs = topic.split("/")
    for i, fseg in enumerate(fsegs):
        if fseg == "#":
            return True
        if i >= len(tsegs):
            return False
        if fseg != "+" and fseg != tsegs[i]:
            return False
    return len(fsegs) == len(tsegs)
