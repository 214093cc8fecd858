"""Cuff geometry and multicontact stimulation current patterns.

The cuff carries eight contacts: two plain rings at the extremities and six
individual contacts evenly spaced (60 deg apart) around the central
circumference.  Stimulation configurations are expressed as charge-balanced
per-contact weight maps: the cathodic fraction is negative, anodic fractions
positive, and the weights always sum to zero exactly.  Weights are stored as
`fractions.Fraction` so thirds and sixths balance without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

N_CENTRAL = 6
STEERED_ANODE_FRACTION = Fraction(1, 3)


@dataclass(frozen=True, order=True)
class ContactId:
    """One of the eight cuff contacts."""

    kind: str  # "ring_distal" | "ring_proximal" | "central"
    index: int = 0  # 1..6 for central contacts, 0 for rings

    def __post_init__(self) -> None:
        if self.kind in ("ring_distal", "ring_proximal"):
            if self.index != 0:
                raise ValueError(f"ring contacts carry no index, got {self.index}")
        elif self.kind == "central":
            if not 1 <= self.index <= N_CENTRAL:
                raise ValueError(f"central contact index must be 1..{N_CENTRAL}, got {self.index}")
        else:
            raise ValueError(f"unknown contact kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "ring_distal":
            return "RD"
        if self.kind == "ring_proximal":
            return "RP"
        return f"C{self.index}"

    @classmethod
    def parse(cls, label: str) -> "ContactId":
        lbl = label.strip().upper()
        if lbl == "RD":
            return RING_DISTAL
        if lbl == "RP":
            return RING_PROXIMAL
        if lbl.startswith("C") and lbl[1:].isdigit():
            return central(int(lbl[1:]))
        raise ValueError(f"unknown contact label {label!r}")


RING_DISTAL = ContactId("ring_distal")
RING_PROXIMAL = ContactId("ring_proximal")


def central(k: int) -> ContactId:
    return ContactId("central", k)


ALL_CONTACTS: tuple[ContactId, ...] = (
    RING_DISTAL,
    RING_PROXIMAL,
    *(central(k) for k in range(1, N_CENTRAL + 1)),
)


def opposite(k: int) -> int:
    """Index of the central contact diametrically opposite contact k."""
    if not 1 <= k <= N_CENTRAL:
        raise ValueError(f"central contact index must be 1..{N_CENTRAL}, got {k}")
    return ((k + 2) % N_CENTRAL) + 1


def central_angle_deg(k: int) -> float:
    """Angular position of central contact k around the circumference."""
    if not 1 <= k <= N_CENTRAL:
        raise ValueError(f"central contact index must be 1..{N_CENTRAL}, got {k}")
    return (k - 1) * 360.0 / N_CENTRAL


_DEFAULT_ANGLES = tuple(central_angle_deg(k) for k in range(1, N_CENTRAL + 1))


@dataclass(frozen=True)
class CuffLayout:
    """Physical placement of the eight contacts on the cuff cylinder.

    Dimensions default to a 3 mm inner diameter with rings 4 mm either side of
    the central plane; the device datasheet values are not public, so both are
    plain configuration inputs.
    """

    inner_diameter_um: float = 3000.0
    ring_offsets_um: tuple[float, float] = (-4000.0, 4000.0)  # (distal, proximal)
    central_angles_deg: tuple[float, ...] = _DEFAULT_ANGLES

    def __post_init__(self) -> None:
        if self.inner_diameter_um <= 0:
            raise ValueError("cuff diameter must be positive")
        if len(self.central_angles_deg) != N_CENTRAL:
            raise ValueError(f"expected {N_CENTRAL} central contact angles")
        for k, angle in enumerate(self.central_angles_deg, start=1):
            expected = central_angle_deg(k)
            if (angle - expected) % 360.0 != 0.0:
                raise ValueError(
                    f"central contacts must sit 60 deg apart: C{k} at {angle} deg, expected {expected}"
                )
        distal, proximal = self.ring_offsets_um
        if distal != -proximal:
            raise ValueError("ring offsets must be symmetric about the central plane")

    @property
    def radius_um(self) -> float:
        return self.inner_diameter_um / 2.0


DEFAULT_LAYOUT = CuffLayout()


def contact_position(layout: CuffLayout, contact: ContactId) -> tuple[float, float, float]:
    """Reference point of a contact on the cuff cylinder, in micrometres.

    Central contact k sits at its layout angle in the z=0 plane; ring contacts
    are referenced at angle 0 at their axial offset (their full circumference
    matters only to the field model, which expands rings itself).
    """
    r = layout.radius_um
    if contact.kind == "central":
        theta = math.radians(layout.central_angles_deg[contact.index - 1])
        return (r * math.cos(theta), r * math.sin(theta), 0.0)
    if contact.kind == "ring_distal":
        return (r, 0.0, layout.ring_offsets_um[0])
    if contact.kind == "ring_proximal":
        return (r, 0.0, layout.ring_offsets_um[1])
    raise ValueError(f"unknown contact {contact!r}")


class CurrentPattern(Mapping[ContactId, Fraction]):
    """Signed per-contact fractions of the total stimulation current.

    Cathodic weights are negative.  Construction rejects any weight set that
    does not sum to zero exactly, so every pattern is charge balanced by
    construction.
    """

    __slots__ = ("_weights",)

    def __init__(self, weights: Mapping[ContactId, Fraction | int]):
        cleaned: dict[ContactId, Fraction] = {}
        for contact, w in weights.items():
            if not isinstance(contact, ContactId):
                raise ValueError(f"pattern keys must be ContactId, got {contact!r}")
            frac = Fraction(w)
            if frac != 0:
                cleaned[contact] = frac
        total = sum(cleaned.values(), Fraction(0))
        if total != 0:
            raise ValueError(f"pattern weights must sum to zero, got {total}")
        self._weights = dict(sorted(cleaned.items()))

    def __getitem__(self, contact: ContactId) -> Fraction:
        return self._weights[contact]

    def __iter__(self) -> Iterator[ContactId]:
        return iter(self._weights)

    def __len__(self) -> int:
        return len(self._weights)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, CurrentPattern):
            return self._weights == other._weights
        return NotImplemented

    def __hash__(self) -> int:
        return hash(tuple(self._weights.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{c.label}: {w}" for c, w in self._weights.items())
        return f"CurrentPattern({{{inner}}})"

    def weight(self, contact: ContactId) -> Fraction:
        return self._weights.get(contact, Fraction(0))

    @property
    def total(self) -> Fraction:
        return sum(self._weights.values(), Fraction(0))

    def cathodes(self) -> tuple[ContactId, ...]:
        return tuple(c for c, w in self._weights.items() if w < 0)

    def rotated(self, steps: int) -> "CurrentPattern":
        """Pattern with every central contact label advanced by `steps` positions."""
        out: dict[ContactId, Fraction] = {}
        for contact, w in self._weights.items():
            if contact.kind == "central":
                out[central((contact.index - 1 + steps) % N_CENTRAL + 1)] = w
            else:
                out[contact] = w
        return CurrentPattern(out)

    def rows(self) -> list[dict[str, object]]:
        """Tabular form (contact, numerator, denominator) for export."""
        return [
            {"contact": c.label, "weight_num": w.numerator, "weight_den": w.denominator}
            for c, w in self._weights.items()
        ]


def make_str_pattern(k: int) -> CurrentPattern:
    """Steering pattern k: central cathode k, one third of the anodic current
    on each ring and one third on the diametrically opposite central contact."""
    if not 1 <= k <= N_CENTRAL:
        raise ValueError(f"steering index must be 1..{N_CENTRAL}, got {k}")
    return CurrentPattern(
        {
            central(k): Fraction(-1),
            RING_DISTAL: STEERED_ANODE_FRACTION,
            RING_PROXIMAL: STEERED_ANODE_FRACTION,
            central(opposite(k)): STEERED_ANODE_FRACTION,
        }
    )


def make_ring_pattern() -> CurrentPattern:
    """Ring configuration: cathodic current split evenly over the six central
    contacts against the two rings (tripolar convention; swappable here)."""
    weights: dict[ContactId, Fraction] = {
        central(k): Fraction(-1, 6) for k in range(1, N_CENTRAL + 1)
    }
    weights[RING_DISTAL] = Fraction(1, 2)
    weights[RING_PROXIMAL] = Fraction(1, 2)
    return CurrentPattern(weights)


@dataclass(frozen=True)
class StimConfig:
    """One of the seven stimulation configurations (ring or STR1..6)."""

    kind: str  # "ring" | "str"
    k: int
    pattern: CurrentPattern

    def __post_init__(self) -> None:
        if self.kind == "ring":
            if self.k != 0:
                raise ValueError("ring configuration carries no steering index")
        elif self.kind == "str":
            if not 1 <= self.k <= N_CENTRAL:
                raise ValueError(f"steering index must be 1..{N_CENTRAL}, got {self.k}")
        else:
            raise ValueError(f"unknown configuration kind {self.kind!r}")

    @property
    def name(self) -> str:
        return "RING" if self.kind == "ring" else f"STR{self.k}"

    @property
    def index(self) -> int:
        """Stable ordering index: ring first, then STR1..6."""
        return self.k


def ring_config() -> StimConfig:
    return StimConfig("ring", 0, make_ring_pattern())


def str_config(k: int) -> StimConfig:
    return StimConfig("str", k, make_str_pattern(k))


def all_configs() -> tuple[StimConfig, ...]:
    """The seven configurations in canonical order."""
    return (ring_config(), *(str_config(k) for k in range(1, N_CENTRAL + 1)))


def parse_config(name: str) -> StimConfig:
    up = name.strip().upper()
    if up == "RING":
        return ring_config()
    if up.startswith("STR") and up[3:].isdigit():
        return str_config(int(up[3:]))
    raise ValueError(f"unknown configuration name {name!r}")
