"""Portfolio accounting and strategy simulation on two-contract price series.

Capital decomposes as I = A + C: the market value of the contract holdings
plus free cash. Direct transaction fees are tracked outside the account, so
net profit is growth minus total fees by definition, and skipped (unfilled)
orders cost nothing.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field, replace

import numpy as np

PRICE_CSV_HEADER = ("tick", "price_a", "price_b")


class PriceCsvError(ValueError):
    """Malformed price file; the message names the offending row."""


@dataclass(frozen=True)
class PriceSeries:
    """Closing prices for contracts A and B over ticks 0..T."""

    price_a: np.ndarray
    price_b: np.ndarray

    def __post_init__(self):
        a, b = np.asarray(self.price_a, float), np.asarray(self.price_b, float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("price columns must be 1-D and equally long")
        if len(a) < 2:
            raise ValueError("a price series needs at least two ticks")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("prices must be strictly positive")
        object.__setattr__(self, "price_a", a)
        object.__setattr__(self, "price_b", b)
        a.setflags(write=False)
        b.setflags(write=False)

    @property
    def last_tick(self) -> int:
        return len(self.price_a) - 1

    def prices_at(self, tick: int) -> tuple[float, float]:
        return float(self.price_a[tick]), float(self.price_b[tick])


def load_price_csv(path) -> PriceSeries:
    """Read `tick,price_a,price_b` rows; ticks must run 0..T in order."""
    rows_a, rows_b = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PriceCsvError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != PRICE_CSV_HEADER:
            raise PriceCsvError(
                f"{path}: header must be {','.join(PRICE_CSV_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise PriceCsvError(f"{path}:{lineno}: expected 3 columns")
            try:
                tick, pa, pb = int(row[0]), float(row[1]), float(row[2])
            except ValueError:
                raise PriceCsvError(f"{path}:{lineno}: non-numeric value") from None
            if tick != len(rows_a):
                raise PriceCsvError(
                    f"{path}:{lineno}: tick {tick} out of order (expected {len(rows_a)})"
                )
            if pa <= 0 or pb <= 0:
                raise PriceCsvError(f"{path}:{lineno}: non-positive price")
            rows_a.append(pa)
            rows_b.append(pb)
    if len(rows_a) < 2:
        raise PriceCsvError(f"{path}: need at least two price rows")
    return PriceSeries(np.array(rows_a), np.array(rows_b))


@dataclass
class Portfolio:
    """Contract holdings, cash, and the latest marks."""

    qty_a: int
    qty_b: int
    cash: float
    price_a: float
    price_b: float

    def __post_init__(self):
        if self.qty_a < 0 or self.qty_b < 0:
            raise ValueError("short positions are not allowed")

    @property
    def market_value_a(self) -> float:
        return self.qty_a * self.price_a

    @property
    def market_value_b(self) -> float:
        return self.qty_b * self.price_b

    @property
    def market_value(self) -> float:
        return self.market_value_a + self.market_value_b

    @property
    def capital(self) -> float:
        return self.market_value + self.cash

    def mark(self, price_a: float, price_b: float) -> None:
        self.price_a = price_a
        self.price_b = price_b

    @classmethod
    def with_capital(
        cls, capital: float, qty_a: int, qty_b: int, price_a: float, price_b: float
    ) -> "Portfolio":
        cash = capital - (qty_a * price_a + qty_b * price_b)
        if cash < 0:
            raise ValueError("initial holdings exceed the target capital")
        return cls(qty_a, qty_b, cash, price_a, price_b)


def default_portfolio(series: PriceSeries) -> Portfolio:
    """10,000,000 of capital holding 1,000 contracts of each asset."""
    pa, pb = series.prices_at(0)
    return Portfolio.with_capital(10_000_000.0, 1000, 1000, pa, pb)


class StrategyKind(enum.Enum):
    BUY_AND_HOLD = "BuyAndHold"
    HONEST = "Honest"
    SPOOFING = "Spoofing"


@dataclass(frozen=True)
class StrategySpec:
    """What to trade, when, and at which execution quality.

    Spoofing trades execute at impact-improved prices: buys at
    price*(1-impact_bps/1e4), sells at price*(1+impact_bps/1e4). Fees are
    fee_rate times executed notional, charged only on filled orders.
    """

    kind: StrategyKind
    trade_ticks: tuple[int, ...]
    trade_size: int = 100
    fee_rate: float = 0.0005
    impact_bps: float = 25.0
    side: str = "buy"

    def __post_init__(self):
        if self.kind is StrategyKind.BUY_AND_HOLD and self.trade_ticks:
            raise ValueError("buy-and-hold takes no trade schedule")
        if self.trade_size <= 0:
            raise ValueError("trade_size must be positive")
        if self.impact_bps < 0:
            raise ValueError("impact_bps must be non-negative")
        if self.side not in ("buy", "sell"):
            raise ValueError("side must be 'buy' or 'sell'")


#: Accumulation schedules anchored at the quarter marks of a 92-tick window.
def default_specs() -> dict[StrategyKind, StrategySpec]:
    return {
        StrategyKind.BUY_AND_HOLD: StrategySpec(StrategyKind.BUY_AND_HOLD, ()),
        StrategyKind.HONEST: StrategySpec(StrategyKind.HONEST, (23, 46, 69, 92)),
        StrategyKind.SPOOFING: StrategySpec(StrategyKind.SPOOFING, (46, 92)),
    }


@dataclass(frozen=True)
class TradeRecord:
    tick: int
    asset: str
    side: str
    quantity: int
    market_price: float
    exec_price: float
    fee: float
    filled: bool


@dataclass(frozen=True)
class TickRecord:
    tick: int
    price_a: float
    price_b: float
    qty_a: int
    qty_b: int
    cash: float
    market_value: float
    capital: float


@dataclass(frozen=True)
class BacktestReport:
    strategy: str
    initial_capital: float
    final_capital: float
    growth: float
    total_fees: float
    net_profit: float
    profit_pct: float
    trade_log: tuple[TradeRecord, ...]
    capital_curve: tuple[TickRecord, ...]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "initial_capital": self.initial_capital,
            "final_capital": self.final_capital,
            "growth": self.growth,
            "total_fees": self.total_fees,
            "net_profit": self.net_profit,
            "profit_pct": self.profit_pct,
            "trade_log": [vars(t) for t in self.trade_log],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def curve_csv(self) -> str:
        lines = ["tick,price_a,price_b,qty_a,qty_b,cash,market_value,capital"]
        for r in self.capital_curve:
            lines.append(
                f"{r.tick},{r.price_a:.6f},{r.price_b:.6f},{r.qty_a},{r.qty_b},"
                f"{r.cash:.6f},{r.market_value:.6f},{r.capital:.6f}"
            )
        return "\n".join(lines) + "\n"


def _execute(portfolio, spec, tick, asset, market_price, trades):
    impact = spec.impact_bps / 10_000.0 if spec.kind is StrategyKind.SPOOFING else 0.0
    if spec.side == "buy":
        exec_price = market_price * (1.0 - impact)
        cost = spec.trade_size * exec_price
        filled = portfolio.cash >= cost
        if filled:
            portfolio.cash -= cost
            if asset == "a":
                portfolio.qty_a += spec.trade_size
            else:
                portfolio.qty_b += spec.trade_size
    else:
        exec_price = market_price * (1.0 + impact)
        held = portfolio.qty_a if asset == "a" else portfolio.qty_b
        filled = held >= spec.trade_size
        if filled:
            portfolio.cash += spec.trade_size * exec_price
            if asset == "a":
                portfolio.qty_a -= spec.trade_size
            else:
                portfolio.qty_b -= spec.trade_size
    fee = spec.fee_rate * spec.trade_size * exec_price if filled else 0.0
    trades.append(
        TradeRecord(
            tick=tick,
            asset=asset,
            side=spec.side,
            quantity=spec.trade_size,
            market_price=market_price,
            exec_price=exec_price,
            fee=fee,
            filled=filled,
        )
    )
    return fee


def run_strategy(
    series: PriceSeries, spec: StrategySpec, initial: Portfolio
) -> BacktestReport:
    """Mark to market every tick, execute the schedule, report growth and fees.

    Orders whose cost exceeds available cash (or size exceeds holdings when
    selling) are skipped: logged unfilled, no fee, no position change.
    """
    out_of_range = [t for t in spec.trade_ticks if not 0 <= t <= series.last_tick]
    if out_of_range:
        raise ValueError(f"trade ticks {out_of_range} outside 0..{series.last_tick}")

    portfolio = replace(initial)
    trades: list[TradeRecord] = []
    curve: list[TickRecord] = []
    total_fees = 0.0
    schedule = set(spec.trade_ticks)
    initial_capital = None
    for tick in range(series.last_tick + 1):
        pa, pb = series.prices_at(tick)
        portfolio.mark(pa, pb)
        if initial_capital is None:
            initial_capital = portfolio.capital
        if tick in schedule:
            total_fees += _execute(portfolio, spec, tick, "a", pa, trades)
            total_fees += _execute(portfolio, spec, tick, "b", pb, trades)
        curve.append(
            TickRecord(
                tick=tick,
                price_a=pa,
                price_b=pb,
                qty_a=portfolio.qty_a,
                qty_b=portfolio.qty_b,
                cash=portfolio.cash,
                market_value=portfolio.market_value,
                capital=portfolio.capital,
            )
        )
    growth = portfolio.capital - initial_capital
    net_profit = growth - total_fees
    return BacktestReport(
        strategy=spec.kind.value,
        initial_capital=initial_capital,
        final_capital=portfolio.capital,
        growth=growth,
        total_fees=total_fees,
        net_profit=net_profit,
        profit_pct=100.0 * net_profit / initial_capital,
        trade_log=tuple(trades),
        capital_curve=tuple(curve),
    )


def summarize_runs(reports) -> dict[str, tuple[float, float]]:
    """Per strategy: mean and population standard deviation of profit_pct."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to summarize")
    by_strategy: dict[str, list[float]] = {}
    for report in reports:
        by_strategy.setdefault(report.strategy, []).append(report.profit_pct)
    return {
        name: (float(np.mean(vals)), float(np.std(vals)))
        for name, vals in by_strategy.items()
    }
