"""Per-stock limit order book cleared once per step at mid-prices.

Orders collected during a step are matched by price priority (ties broken by
submission sequence), each match trading at the midpoint of the bid and ask
limits.  The market price for the next step is the last, lowest-level midpoint
cleared; unmatched orders do not rest across steps.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Side(enum.Enum):
    BID = "bid"
    ASK = "ask"


@dataclass
class Order:
    agent_id: int
    stock_id: int
    side: Side
    price: float
    quantity: int


@dataclass(frozen=True)
class Trade:
    buyer_id: int
    seller_id: int
    price: float
    quantity: int
    step: int


@dataclass
class ClearingResult:
    trades: list[Trade]
    new_price: float
    volume: int
    residual_spread: float | None


@dataclass
class _Entry:
    order: Order
    seq: int
    remaining: int


@dataclass
class OrderBook:
    """Order collection for one stock within one time step."""

    stock_id: int = 0
    bids: list[_Entry] = field(default_factory=list)
    asks: list[_Entry] = field(default_factory=list)
    _seq: int = 0

    def submit(self, order: Order) -> None:
        """Insert an order keeping bids descending / asks ascending by price.

        Equal prices keep submission order (earlier first).  Rejects
        non-positive price or quantity.
        """
        if not (order.price > 0.0) or order.price != order.price or order.price == float("inf"):
            raise ValueError(f"order price must be positive and finite, got {order.price}")
        if order.quantity <= 0 or int(order.quantity) != order.quantity:
            raise ValueError(f"order quantity must be a positive integer, got {order.quantity}")
        entry = _Entry(order, self._seq, int(order.quantity))
        self._seq += 1
        book = self.bids if order.side is Side.BID else self.asks
        # Stable insertion: scan from the back, most orders arrive near the top.
        key = -order.price if order.side is Side.BID else order.price
        lo, hi = 0, len(book)
        while lo < hi:
            mid = (lo + hi) // 2
            other = book[mid].order.price
            other_key = -other if order.side is Side.BID else other
            if other_key <= key:
                lo = mid + 1
            else:
                hi = mid
        book.insert(lo, entry)

    def best_bid(self) -> float | None:
        return self.bids[0].order.price if self.bids else None

    def best_ask(self) -> float | None:
        return self.asks[0].order.price if self.asks else None

    def spread(self) -> float | None:
        """Best ask minus best bid; None unless both sides are present.

        Recorded before clearing, so a crossed book yields a negative value.
        """
        bid, ask = self.best_bid(), self.best_ask()
        if bid is None or ask is None:
            return None
        return ask - bid

    def clear(self, prev_price: float, step: int) -> ClearingResult:
        """Match crossing orders top-down and report the resulting market state.

        Matching proceeds while the best bid price >= best ask price; every
        match trades min(remaining quantities) at the limits' midpoint, the
        residual side keeping its level.  A bid and ask from the same agent
        are discarded pairwise without trading or price impact.  Orders left
        unmatched are dropped (the book is emptied by this call).
        """
        trades: list[Trade] = []
        volume = 0
        last_price = None
        bi = ai = 0
        bids, asks = self.bids, self.asks
        while bi < len(bids) and ai < len(asks):
            bid, ask = bids[bi], asks[ai]
            if bid.order.price < ask.order.price:
                break
            qty = min(bid.remaining, ask.remaining)
            if bid.order.agent_id == ask.order.agent_id:
                # Self-crossing is economically void: drop the matched amount.
                bid.remaining -= qty
                ask.remaining -= qty
            else:
                price = 0.5 * (bid.order.price + ask.order.price)
                trades.append(Trade(bid.order.agent_id, ask.order.agent_id, price, qty, step))
                volume += qty
                last_price = price
                bid.remaining -= qty
                ask.remaining -= qty
            if bid.remaining == 0:
                bi += 1
            if ask.remaining == 0:
                ai += 1
        residual = None
        if bi < len(bids) and ai < len(asks):
            residual = asks[ai].order.price - bids[bi].order.price
        self.bids, self.asks = [], []
        new_price = last_price if last_price is not None else prev_price
        return ClearingResult(trades, new_price, volume, residual)

    def iter_entries(self):
        """All live entries in submission order (used by the order-flow log)."""
        return sorted(self.bids + self.asks, key=lambda e: e.seq)
