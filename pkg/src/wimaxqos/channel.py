"""Air link between subscriber and base station: fixed delay, Bernoulli loss."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .qos import MacPdu


@dataclass
class LinkModel:
    one_way_delay: int = 1_000
    pdu_loss_prob: float = 0.005
    rng: random.Random | None = None
    delivered: int = 0
    lost: int = 0

    def __post_init__(self):
        if not 0.0 <= self.pdu_loss_prob <= 1.0:
            raise ValueError("pdu_loss_prob must be in [0, 1]")
        if self.one_way_delay < 0:
            raise ValueError("one_way_delay must be non-negative")

    def transmit(self, pdu: MacPdu, now: int) -> int | None:
        """Delivery time of ``pdu`` sent at ``now``, or None if it is lost.

        One uniform draw per PDU, even at p=0 or p=1, so changing the loss
        probability never shifts the stream.
        """
        u = self.rng.random() if self.rng is not None else 1.0
        if u < self.pdu_loss_prob:
            self.lost += 1
            return None
        self.delivered += 1
        return now + self.one_way_delay
