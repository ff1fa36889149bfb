"""Per-building tracking controller with online parameter identification.

Each building runs a receding-horizon loop: given the shift command for the
next T hours, it plans thermal charge schedules for its storage devices by
solving the tracking QP, applies only the first step, and at the end of
every day refines its device parameter estimates from the day's prediction
errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .qpsolver import (
    AdmmSettings,
    AdmmWorkspace,
    TrackingProblem,
    device_block_from_battery,
    stacked_qp_data,
)
from .simenv import EnvAction, EnvConfig
from .vbattery import VirtualBattery

ETA_RANGE = (1.0, 6.0)
DECAY_RANGE = (1e-4, 1.0)
GAIN_MIN = 1e-4
ADAGRAD_EPS = 1e-10
ZERO_COMMAND_TOL = 1e-12

# Indices into the per-device gradient accumulator.
_K_ETA, _K_DECAY, _K_GAIN = 0, 1, 2


@dataclass
class DeviceModel:
    """One storage device as the controller believes it to be.

    ``capacity_kwh``, ``rated_power_kw`` and ``rate_limit_kwh`` come off the
    nameplate and are taken as known; ``decay``, ``charge_gain`` and ``eta``
    are estimates refined online.
    """

    name: str
    decay: float
    charge_gain: float
    eta: float
    capacity_kwh: float
    rated_power_kw: float
    rate_limit_kwh: float

    def __post_init__(self):
        if self.capacity_kwh <= 0:
            raise ValueError("capacity_kwh must be positive")
        if self.rated_power_kw <= 0:
            raise ValueError("rated_power_kw must be positive")
        if self.rate_limit_kwh < 0:
            raise ValueError("rate_limit_kwh must be >= 0")
        self.project()

    def project(self) -> None:
        """Clamp the estimated parameters to their physical ranges."""
        self.decay = float(np.clip(self.decay, *DECAY_RANGE))
        self.charge_gain = float(max(self.charge_gain, GAIN_MIN))
        self.eta = float(np.clip(self.eta, *ETA_RANGE))

    def kappa(self) -> np.ndarray:
        return np.array([self.eta, self.decay, self.charge_gain])


def device_models_from_attributes(attrs, cfg: EnvConfig, eta_cooling: float):
    """Nominal device models for one building, from its attribute sheet.

    ``eta_cooling`` is the operator's engineering guess for the heat pump
    conversion factor (for instance the climate-mean COP). The DHW heater
    efficiency starts from the configured value; the projection box keeps
    all estimates within their declared ranges.
    """
    retention = 1.0 - cfg.storage_loss_coeff
    models = []
    if attrs.cooling_tank_capacity_kwh > 0 and attrs.heat_pump_rated_kw > 0:
        cap = attrs.cooling_tank_capacity_kwh
        models.append(
            DeviceModel(
                name="cooling",
                decay=retention,
                charge_gain=1.0,
                eta=eta_cooling,
                capacity_kwh=cap,
                rated_power_kw=attrs.heat_pump_rated_kw,
                rate_limit_kwh=cfg.rate_fraction * cap,
            )
        )
    if attrs.has_dhw_tank and attrs.dhw_tank_capacity_kwh > 0 and attrs.heater_rated_kw > 0:
        cap = attrs.dhw_tank_capacity_kwh
        models.append(
            DeviceModel(
                name="dhw",
                decay=retention,
                charge_gain=1.0,
                eta=cfg.eta_dhw,
                capacity_kwh=cap,
                rated_power_kw=attrs.heater_rated_kw,
                rate_limit_kwh=cfg.rate_fraction * cap,
            )
        )
    return models


def randomize_device_models(models, rng: np.random.Generator, spread: float = 0.2):
    """Fresh copies with each estimated parameter drawn from a uniform band
    around its nominal value, then projected."""
    out = []
    for m in models:
        lo, hi = 1.0 - spread, 1.0 + spread
        out.append(
            replace(
                m,
                decay=m.decay * rng.uniform(lo, hi),
                charge_gain=m.charge_gain * rng.uniform(lo, hi),
                eta=m.eta * rng.uniform(lo, hi),
            )
        )
    return out


@dataclass
class _Sample:
    forecast_net_kwh: float
    actual_net_kwh: float
    u: np.ndarray
    soc_before: np.ndarray
    soc_after: np.ndarray


class BuildingController:
    """Receding-horizon tracker plus end-of-day identification."""

    def __init__(
        self,
        building_index: int,
        devices,
        horizon: int = 12,
        adagrad_lr: float = 0.01,
        settings: AdmmSettings | None = None,
    ):
        self.building_index = building_index
        self.devices = list(devices)
        names = [d.name for d in self.devices]
        if len(set(names)) != len(names):
            raise ValueError("device names must be unique")
        self.horizon = horizon
        self.adagrad_lr = adagrad_lr
        self.settings = settings or AdmmSettings()
        self._accum = {d.name: np.zeros(3) for d in self.devices}
        self._samples: list[_Sample] = []
        self._workspace: AdmmWorkspace | None = None
        self._warm: tuple[np.ndarray, np.ndarray] | None = None
        self.solver_failures = 0
        self.days_updated = 0

    # ---------------------------------------------------------- planning

    def _batteries(self, q0_forecasts: dict, socs: dict) -> list[VirtualBattery]:
        t = self.horizon
        vbs = []
        for d in self.devices:
            q0 = np.asarray(q0_forecasts[d.name], dtype=float)
            if q0.shape != (t,):
                raise ValueError(f"q0 forecast for {d.name} must have length {t}")
            # Forecasts can overshoot what the converter could ever serve;
            # clip so the input box stays nonempty.
            q0 = np.clip(q0, 0.0, d.eta * d.rated_power_kw)
            soc = float(np.clip(socs[d.name], 0.0, d.capacity_kwh))
            vbs.append(
                VirtualBattery(
                    decay=d.decay,
                    charge_gain=d.charge_gain,
                    cop=np.full(t, d.eta),
                    rated_power_kw=d.rated_power_kw,
                    baseline_draw_kwh=q0,
                    soc=soc,
                    soc_min=0.0,
                    soc_max=d.capacity_kwh,
                )
            )
        return vbs

    def _shifted_warm(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Advance last hour's solution one step as this hour's starting point."""
        if self._warm is None:
            return None
        x, y = self._warm
        t = self.horizon
        d = len(self.devices)

        def shift(vec, blocks):
            out = vec.copy()
            for i in range(blocks):
                seg = vec[i * t : (i + 1) * t]
                out[i * t : (i + 1) * t] = np.concatenate([seg[1:], seg[-1:]])
            return out

        # y is stacked [input boxes (d*t), state boxes (d*t)]: same layout.
        return shift(x, d), shift(y, 2 * d)

    def act(self, command, q0_forecasts: dict, socs: dict) -> tuple[EnvAction, dict]:
        """Plan against the T-hour shift command; return the first-step action."""
        command = np.asarray(command, dtype=float)
        if command.shape != (self.horizon,):
            raise ValueError(f"command must have length {self.horizon}")
        if not self.devices:
            return EnvAction(), {"status": "no_devices", "iterations": 0}
        if np.max(np.abs(command)) < ZERO_COMMAND_TOL:
            # Nothing requested: doing nothing is feasible and optimal.
            self._warm = None
            return EnvAction(), {"status": "zero_command", "iterations": 0}
        vbs = self._batteries(q0_forecasts, socs)
        blocks = [
            device_block_from_battery(vb, d.rate_limit_kwh, d.rate_limit_kwh)
            for vb, d in zip(vbs, self.devices)
        ]
        prob = TrackingProblem(command, blocks)
        p, q, s, lo, hi = stacked_qp_data(prob)
        if self._workspace is None:
            self._workspace = AdmmWorkspace(p, s, self.settings)
        sol = self._workspace.solve(q, lo, hi, warm=self._shifted_warm())
        if sol.status != "optimal":
            self.solver_failures += 1
            self._warm = None
            return EnvAction(), {"status": sol.status, "iterations": sol.iterations}
        self._warm = (sol.x, sol.y)
        # The iterate is feasible only to solver tolerance; the command sent
        # to the plant must respect the hard box exactly.
        first = {
            d.name: float(
                np.clip(prob.split(sol.x)[i][0], blocks[i].u_lo[0], blocks[i].u_hi[0])
            )
            for i, d in enumerate(self.devices)
        }
        action = EnvAction(
            cooling_charge_kwh=first.get("cooling", 0.0),
            dhw_charge_kwh=first.get("dhw", 0.0),
        )
        info = {
            "status": sol.status,
            "iterations": sol.iterations,
            "objective": prob.objective(sol.x),
            "planned_first_step": first,
        }
        return action, info

    def predict_consumption(self, forecast_net_kwh: float, u: dict) -> float:
        """Building net load implied by the forecast plus storage actions."""
        extra = sum(float(u.get(d.name, 0.0)) / d.eta for d in self.devices)
        return float(forecast_net_kwh) + extra

    # ---------------------------------------------------- identification

    def observe(
        self,
        forecast_net_kwh: float,
        actual_net_kwh: float,
        applied: dict,
        soc_before: dict,
        soc_after: dict,
    ) -> None:
        """Record one hour's outcome for the nightly parameter update."""
        self._samples.append(
            _Sample(
                forecast_net_kwh=float(forecast_net_kwh),
                actual_net_kwh=float(actual_net_kwh),
                u=np.array([float(applied.get(d.name, 0.0)) for d in self.devices]),
                soc_before=np.array(
                    [float(soc_before[d.name]) for d in self.devices]
                ),
                soc_after=np.array([float(soc_after[d.name]) for d in self.devices]),
            )
        )

    def day_loss(self) -> float:
        """Squared consumption prediction error over the buffered samples."""
        total = 0.0
        for smp in self._samples:
            pred = smp.forecast_net_kwh + sum(
                smp.u[j] / d.eta for j, d in enumerate(self.devices)
            )
            total += (pred - smp.actual_net_kwh) ** 2
        return total

    def _adagrad(self, dev: DeviceModel, slot: int, grad: float) -> float:
        acc = self._accum[dev.name]
        acc[slot] += grad * grad
        return self.adagrad_lr * grad / np.sqrt(acc[slot] + ADAGRAD_EPS)

    def end_of_day_update(self) -> dict:
        """Sweep the day's samples once, stepping each estimate per sample.

        Consumption residuals drive the conversion factors; the state
        recursion residual drives retention and charge gain. Returns a
        trace row with the pre-update loss and the refreshed estimates.
        """
        loss_before = self.day_loss()
        n_samples = len(self._samples)
        for smp in self._samples:
            pred = smp.forecast_net_kwh + sum(
                smp.u[j] / d.eta for j, d in enumerate(self.devices)
            )
            r = pred - smp.actual_net_kwh
            for j, d in enumerate(self.devices):
                if smp.u[j] != 0.0:
                    g = 2.0 * r * (-smp.u[j] / d.eta**2)
                    d.eta -= self._adagrad(d, _K_ETA, g)
                r2 = d.decay * smp.soc_before[j] + d.charge_gain * smp.u[j] - smp.soc_after[j]
                if smp.soc_before[j] != 0.0:
                    d.decay -= self._adagrad(d, _K_DECAY, 2.0 * r2 * smp.soc_before[j])
                if smp.u[j] != 0.0:
                    d.charge_gain -= self._adagrad(d, _K_GAIN, 2.0 * r2 * smp.u[j])
                d.project()
        self._samples.clear()
        self._workspace = None
        self._warm = None
        self.days_updated += 1
        row = {
            "building": self.building_index,
            "day": self.days_updated,
            "loss": loss_before,
            "n_samples": n_samples,
        }
        for d in self.devices:
            row[f"{d.name}_eta"] = d.eta
            row[f"{d.name}_decay"] = d.decay
            row[f"{d.name}_gain"] = d.charge_gain
        return row

    # ------------------------------------------------------- persistence

    def state_dict(self) -> dict:
        return {
            "building_index": self.building_index,
            "horizon": self.horizon,
            "adagrad_lr": self.adagrad_lr,
            "solver_failures": self.solver_failures,
            "days_updated": self.days_updated,
            "devices": [
                {
                    "name": d.name,
                    "decay": d.decay,
                    "charge_gain": d.charge_gain,
                    "eta": d.eta,
                    "capacity_kwh": d.capacity_kwh,
                    "rated_power_kw": d.rated_power_kw,
                    "rate_limit_kwh": d.rate_limit_kwh,
                }
                for d in self.devices
            ],
            "accumulators": {k: v.tolist() for k, v in self._accum.items()},
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "BuildingController":
        ctrl = cls(
            d["building_index"],
            [DeviceModel(**dev) for dev in d["devices"]],
            horizon=d["horizon"],
            adagrad_lr=d["adagrad_lr"],
        )
        ctrl.solver_failures = d["solver_failures"]
        ctrl.days_updated = d["days_updated"]
        for k, v in d["accumulators"].items():
            ctrl._accum[k] = np.array(v)
        return ctrl

    def to_json(self) -> str:
        return json.dumps(self.state_dict())

    @classmethod
    def from_json(cls, text: str) -> "BuildingController":
        return cls.from_state_dict(json.loads(text))
