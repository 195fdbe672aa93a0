"""Linear communication-dominated energy model.

Amounts are kept as integer picojoules: idle (60 uW) and sleep (3 uW) draws
are whole picojoules per simulated microsecond, so every charge is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PJ_PER_UJ = 1_000_000
CATEGORIES = ("tx", "rx", "idle", "sleep")


@dataclass(frozen=True)
class EnergyModel:
    tx_uj_per_byte: float = 2.0
    power_factors: tuple = (0.5, 0.75, 1.0, 1.5)
    rx_uj_per_byte: float = 1.0
    idle_uw: int = 60
    sleep_uw: int = 3
    capacity_j: float = 10_000.0

    def tx_pj(self, nbytes: int, level: int) -> int:
        per_byte = round(self.tx_uj_per_byte * self.power_factors[level - 1] * PJ_PER_UJ)
        return nbytes * per_byte

    def rx_pj(self, nbytes: int) -> int:
        return nbytes * round(self.rx_uj_per_byte * PJ_PER_UJ)

    def idle_pj(self, duration_us: int) -> int:
        return duration_us * self.idle_uw

    def sleep_pj(self, duration_us: int) -> int:
        return duration_us * self.sleep_uw

    @property
    def capacity_pj(self) -> int:
        return round(self.capacity_j * 1e12)


@dataclass
class EnergyLedger:
    model: EnergyModel = field(default_factory=EnergyModel)
    per_category: dict = field(default_factory=lambda: dict.fromkeys(CATEGORIES, 0))

    @property
    def consumed_pj(self) -> int:
        return sum(self.per_category.values())

    @property
    def consumed_uj(self) -> float:
        return self.consumed_pj / PJ_PER_UJ

    @property
    def battery(self) -> int:
        """Remaining charge in whole percent."""
        left = max(0, self.model.capacity_pj - self.consumed_pj)
        return (100 * left) // self.model.capacity_pj

    def charge(self, category: str, amount_pj: int) -> int:
        if category not in self.per_category:
            raise KeyError(category)
        if amount_pj < 0:
            raise ValueError("energy charges are nonnegative")
        self.per_category[category] += amount_pj
        return amount_pj

    def energy_charge(self, category: str, quantity: int, level: int = 3) -> float:
        """Charge ``quantity`` bytes (tx/rx) or microseconds (idle/sleep); returns uJ."""
        m = self.model
        amount = {
            "tx": lambda: m.tx_pj(quantity, level),
            "rx": lambda: m.rx_pj(quantity),
            "idle": lambda: m.idle_pj(quantity),
            "sleep": lambda: m.sleep_pj(quantity),
        }[category]()
        return self.charge(category, amount) / PJ_PER_UJ
