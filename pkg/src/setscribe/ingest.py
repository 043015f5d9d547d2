"""Benchmark group construction from dataset metadata.

Two grouping rules are supported: caption identity (groups of records
sharing one exact caption string) and attribute templates over artwork
metadata (genre/style, optionally artist). Image downloading is out of
scope; availability arrives as an input flag and manual curation as an
exclusion list.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import IngestError

log = logging.getLogger(__name__)

MIN_GROUP_SIZE = 50
CAPTION_STAGE1_MIN = 101   # "more than 100" records per caption
WIKIART_TWO_ATTR_MIN = 500  # "more than 499" images for (genre, style)

WIKIART_ARTISTS = (
    "Albrecht Durer", "Boris Kustodiev", "Camille Pissarro", "Childe Hassam",
    "Claude Monet", "Edgar Degas", "Eugene Boudin", "Gustave Dore",
    "Ilya Repin", "Ivan Aivazovsky", "Ivan Shishkin", "John Singer Sargent",
    "Marc Chagall", "Martiros Saryan", "Nicholas Roerich", "Pablo Picasso",
    "Paul Cezanne", "Pierre Auguste Renoir", "Pyotr Konchalovsky",
    "Raphael Kirchner", "Rembrandt", "Salvador Dali", "Vincent van Gogh",
)

WIKIART_GENRES = (
    "Abstract paintings", "Cityscapes", "Genre paintings", "Illustrations",
    "Landscapes", "Nude paintings", "Portraits", "Religious paintings",
    "Sketches and studies", "Still lifes",
)

WIKIART_STYLES = (
    "Abstract Expressionism", "Action painting", "Analytical Cubism",
    "Art Nouveau", "Baroque", "Color Field Painting", "Contemporary Realism",
    "Cubism", "Early Renaissance", "Expressionism", "Fauvism",
    "High Renaissance", "Impressionism", "Mannerism Late Renaissance",
    "Minimalism", "Naive Art Primitivism", "New Realism",
    "Northern Renaissance", "Pointillism", "Pop Art", "Post Impressionism",
    "Realism", "Rococo", "Romanticism", "Symbolism", "Synthetic Cubism",
    "Ukiyo-e",
)


@dataclass(frozen=True)
class GroupSpec:
    caption: str
    member_ids: tuple[str, ...]
    source: str  # caption_identity | wikiart_attrs

    def to_json(self) -> dict:
        return {
            "caption": self.caption,
            "member_ids": list(self.member_ids),
            "source": self.source,
        }


def _dedup(ids) -> tuple[str, ...]:
    out, seen = [], set()
    for i in ids:
        if i not in seen:
            seen.add(i)
            out.append(i)
    return tuple(out)


def group_by_caption(records, exclusions=()) -> list[GroupSpec]:
    """Group records sharing an exact caption.

    Stage 1 keeps captions with more than 100 records; stage 2 keeps
    groups with at least 50 available, de-duplicated members.
    """
    excluded = set(exclusions)
    by_caption: dict[str, list[dict]] = {}
    for rec in records:
        by_caption.setdefault(str(rec["caption"]), []).append(rec)

    groups = []
    for caption in sorted(by_caption):
        if caption in excluded:
            continue
        recs = by_caption[caption]
        if len(recs) < CAPTION_STAGE1_MIN:
            continue
        members = _dedup(str(r["id"]) for r in recs if r.get("available"))
        if len(members) < MIN_GROUP_SIZE:
            continue
        groups.append(GroupSpec(caption=caption, member_ids=members,
                                source="caption_identity"))
    return groups


def wikiart_caption(genre: str, style: str, artist: str | None = None) -> str:
    if not genre or not style:
        raise IngestError("genre and style must be non-empty")
    if artist:
        return f"{genre} by {artist} in {style} Style"
    return f"{genre} in {style} Style"


def group_wikiart(records, exclusions=()) -> list[GroupSpec]:
    """Group artwork records by (genre, style) and by (genre, style,
    artist); two-attribute groups need more than 499 members, three-
    attribute ones at least 50, and every group is re-filtered at 50
    after de-duplication."""
    excluded = set(exclusions)
    records = list(records)
    for rec in records:
        if rec.get("artist") and rec["artist"] not in WIKIART_ARTISTS:
            log.warning("unknown artist value %r", rec["artist"])
        if rec["genre"] not in WIKIART_GENRES:
            log.warning("unknown genre value %r", rec["genre"])
        if rec["style"] not in WIKIART_STYLES:
            log.warning("unknown style value %r", rec["style"])

    two_attr: dict[tuple[str, str], list[str]] = {}
    three_attr: dict[tuple[str, str, str], list[str]] = {}
    for rec in records:
        rid = str(rec["id"])
        two_attr.setdefault((rec["genre"], rec["style"]), []).append(rid)
        if rec.get("artist"):
            key = (rec["genre"], rec["style"], rec["artist"])
            three_attr.setdefault(key, []).append(rid)

    groups = []
    for (genre, style), ids in sorted(two_attr.items()):
        if len(ids) < WIKIART_TWO_ATTR_MIN:
            continue
        members = _dedup(ids)
        if len(members) < MIN_GROUP_SIZE:
            continue
        caption = wikiart_caption(genre, style)
        if caption not in excluded:
            groups.append(GroupSpec(caption, members, "wikiart_attrs"))
    for (genre, style, artist), ids in sorted(three_attr.items()):
        if len(ids) < MIN_GROUP_SIZE:
            continue
        members = _dedup(ids)
        if len(members) < MIN_GROUP_SIZE:
            continue
        caption = wikiart_caption(genre, style, artist)
        if caption not in excluded:
            groups.append(GroupSpec(caption, members, "wikiart_attrs"))
    return groups
