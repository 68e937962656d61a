"""Ground truth the rest of the system observes and perturbs.

Per-region soil moisture follows a first-order gain/loss balance: losses scale
with a baseline dry rate modulated by temperature and air humidity, gains come
from pump delivery converted to gravimetric percent via the dry-soil mass of
the root zone (1 L of water = 1 kg). Sensor models reproduce the hardware:
a DHT22 with gaussian accuracy-class noise and an FC28 read through a 10-bit
ADC over 0-5.0 V with +/-2 LSB noise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .errors import BadQuantityError, NoWeatherError, UnknownRegionError
from .kernel import Kernel, SimTime

ADC_MAX = 1023
ADC_VOLTS = 5.0

DHT22_SIGMA_TEMP = 0.5  # degC, part accuracy class
DHT22_SIGMA_HUM = 2.0  # %RH
FC28_NOISE_LSB = 2

DEFAULT_DRY_RAW = 850  # typical FC28 reading in air
DEFAULT_WET_RAW = 350  # typical FC28 reading in water

REFERENCE_TEMP_C = 25.0


@dataclass(frozen=True)
class Region:
    id: int
    name: str
    position: tuple[float, float]
    area_m2: float
    root_depth_m: float
    bulk_density_kg_m3: float

    def dry_soil_mass_kg(self) -> float:
        return self.bulk_density_kg_m3 * self.root_depth_m * self.area_m2


@dataclass
class SoilState:
    moisture_pct: float
    target_pct: float
    dry_rate_pct_per_hour: float
    temp_coeff_per_degc: float


@dataclass
class PumpState:
    on: bool = False
    flow_rate_lpm: float = 54.0
    total_delivered_l: float = 0.0
    commanded_remaining_l: float = 0.0


@dataclass(frozen=True)
class RawSample:
    adc_raw: int

    @property
    def voltage(self) -> float:
        return ADC_VOLTS * self.adc_raw / ADC_MAX


@dataclass(frozen=True)
class PumpCommand:
    kind: str  # "on" | "off"
    quantity_l: float | None = None

    @classmethod
    def on(cls, quantity_l: float) -> "PumpCommand":
        return cls("on", quantity_l)

    @classmethod
    def off(cls) -> "PumpCommand":
        return cls("off")


class WeatherTrace:
    """Piecewise-linear (time, temperature, humidity) series."""

    def __init__(self, points: list[tuple[SimTime, float, float]]):
        if not points:
            raise NoWeatherError("weather trace is empty")
        self.points = sorted(points)

    def covers(self, t: SimTime) -> bool:
        return self.points[0][0] <= t <= self.points[-1][0]

    def at(self, t: SimTime) -> tuple[float, float]:
        if not self.covers(t):
            raise NoWeatherError(
                f"t={t} outside trace [{self.points[0][0]}, {self.points[-1][0]}]"
            )
        points = self.points
        for i in range(len(points) - 1):
            t0, temp0, hum0 = points[i]
            t1, temp1, hum1 = points[i + 1]
            if t0 <= t <= t1:
                if t1 == t0:
                    return temp1, hum1
                frac = (t - t0) / (t1 - t0)
                return temp0 + frac * (temp1 - temp0), hum0 + frac * (hum1 - hum0)
        return points[-1][1], points[-1][2]


@dataclass
class SoilStepResult:
    moisture_pct: float
    delivered_l: float
    pump_stopped: bool


@dataclass
class RegionPlot:
    """One region's physical state plus its sensor hardware parameters."""

    region: Region
    soil: SoilState
    pump: PumpState
    dry_raw: int = DEFAULT_DRY_RAW
    wet_raw: int = DEFAULT_WET_RAW
    sensor_noise: bool = True
    _dht_rng: random.Random | None = field(default=None, repr=False)
    _fc28_rng: random.Random | None = field(default=None, repr=False)


class Farm:
    """All regions, their weather, and the sensors/pumps attached to them."""

    def __init__(self, kernel: Kernel, weather: WeatherTrace):
        self.kernel = kernel
        self.weather = weather
        self.plots: dict[int, RegionPlot] = {}

    def add_region(
        self,
        region: Region,
        soil: SoilState,
        pump: PumpState,
        dry_raw: int = DEFAULT_DRY_RAW,
        wet_raw: int = DEFAULT_WET_RAW,
        sensor_noise: bool = True,
    ) -> RegionPlot:
        plot = RegionPlot(
            region=region,
            soil=soil,
            pump=pump,
            dry_raw=dry_raw,
            wet_raw=wet_raw,
            sensor_noise=sensor_noise,
        )
        plot._dht_rng = self.kernel.rng_stream(f"dht22:{region.id}")
        plot._fc28_rng = self.kernel.rng_stream(f"fc28:{region.id}")
        self.plots[region.id] = plot
        return plot

    def plot(self, region_id: int) -> RegionPlot:
        try:
            return self.plots[region_id]
        except KeyError:
            raise UnknownRegionError(f"region {region_id} not configured") from None

    def sample_dht22(self, region_id: int, t: SimTime) -> tuple[float, float]:
        plot = self.plot(region_id)
        temp, hum = self.weather.at(t)
        if plot.sensor_noise:
            temp += plot._dht_rng.gauss(0.0, DHT22_SIGMA_TEMP)
            hum += plot._dht_rng.gauss(0.0, DHT22_SIGMA_HUM)
        return temp, min(100.0, max(0.0, hum))

    def sample_fc28(self, region_id: int, t: SimTime) -> RawSample:
        plot = self.plot(region_id)
        span = plot.dry_raw - plot.wet_raw
        raw = round(plot.dry_raw - (plot.soil.moisture_pct / 100.0) * span)
        if plot.sensor_noise:
            raw += plot._fc28_rng.randint(-FC28_NOISE_LSB, FC28_NOISE_LSB)
        return RawSample(adc_raw=min(ADC_MAX, max(0, raw)))

    def apply_pump(self, region_id: int, command: PumpCommand) -> PumpState:
        plot = self.plot(region_id)
        pump = plot.pump
        if command.kind == "on":
            if command.quantity_l is None or command.quantity_l <= 0:
                raise BadQuantityError(f"pump-on quantity {command.quantity_l!r}")
            pump.on = True
            pump.commanded_remaining_l = command.quantity_l
        elif command.kind == "off":
            pump.on = False
            pump.commanded_remaining_l = 0.0
        else:
            raise BadQuantityError(f"unknown pump command {command.kind!r}")
        return pump

    def step_soil(
        self, region_id: int, dt_ms: int, weather: tuple[float, float] | None = None
    ) -> SoilStepResult:
        """Advance one region by dt: integrate pump delivery, then gain/loss."""
        if dt_ms <= 0:
            raise BadQuantityError(f"dt must be positive, got {dt_ms}")
        plot = self.plot(region_id)
        soil, pump = plot.soil, plot.pump

        delivered = 0.0
        stopped = False
        if pump.on:
            delivered = pump.flow_rate_lpm * (dt_ms / 60000.0)
            pump.total_delivered_l += delivered
            pump.commanded_remaining_l -= delivered
            if pump.commanded_remaining_l <= 1e-9:
                pump.on = False
                pump.commanded_remaining_l = 0.0
                stopped = True

        if weather is None:
            temp, hum = self.weather.at(self.kernel.now)
        else:
            temp, hum = weather

        gain = 100.0 * delivered / plot.region.dry_soil_mass_kg()
        dt_hours = dt_ms / 3_600_000.0
        loss = (
            soil.dry_rate_pct_per_hour
            * (1.0 + soil.temp_coeff_per_degc * (temp - REFERENCE_TEMP_C))
            * (1.0 - hum / 100.0)
            * dt_hours
        )
        soil.moisture_pct = min(100.0, max(0.0, soil.moisture_pct + gain - loss))
        return SoilStepResult(soil.moisture_pct, delivered, stopped)
