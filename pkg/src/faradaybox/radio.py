"""RF link-budget math for the shielded provisioning box.

Pure dB arithmetic: free-space path loss, received power through the box
wall, thermal noise floor, and the Shannon minimum SNR for a target data
rate. Everything a receiver needs to decide "can I decode this frame" is
collected into a ReceptionVerdict.

Units follow the conventions used throughout: dBm for powers, dB for
gains/losses, centimeters for distance, megahertz for carrier frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

BOLTZMANN_J_PER_K = 1.380649e-23

# Software transmit power the radio chip will actually accept.
DEFAULT_RADIO_MAX_PTX_DBM = 20.0


class CalibrationError(ValueError):
    """Requested in-box power level cannot be reached by the radio."""


@dataclass(frozen=True)
class LinkBudget:
    """One directed radio path: transmit side, path, and shielding.

    lbox_db is the box-wall attenuation crossed by this path; use 0 when
    both endpoints sit on the same side of the wall.
    """

    ptx_dbm: float
    gtx_db: float = 0.0
    grx_db: float = 0.0
    lbox_db: float = 0.0
    distance_cm: float = 1.0
    freq_mhz: float = 2400.0

    def __post_init__(self) -> None:
        if self.distance_cm <= 0:
            raise ValueError(f"distance_cm must be > 0, got {self.distance_cm}")
        if self.freq_mhz <= 0:
            raise ValueError(f"freq_mhz must be > 0, got {self.freq_mhz}")
        if self.lbox_db < 0:
            raise ValueError(f"lbox_db must be >= 0, got {self.lbox_db}")


@dataclass(frozen=True)
class ChannelParams:
    """Receiver-side channel assumptions for the SNR threshold.

    data_rate_bps is the rate the receiver must sustain to be useful:
    the full firmware stream rate for an eavesdropper who wants the
    image, a low control rate for a node that only needs to hear its
    own traffic.
    """

    bandwidth_hz: float
    data_rate_bps: float
    temperature_k: float = 290.0

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.data_rate_bps <= 0:
            raise ValueError(f"data_rate_bps must be > 0, got {self.data_rate_bps}")
        if self.temperature_k <= 0:
            raise ValueError(f"temperature_k must be > 0, got {self.temperature_k}")


@dataclass(frozen=True)
class ReceptionVerdict:
    """Outcome of a link-budget evaluation at one receiver."""

    prx_dbm: float
    noise_floor_dbm: float
    snr_db: float
    required_snr_db: float
    above_sensitivity: bool
    above_capacity_threshold: bool
    decodable: bool

    def as_dict(self) -> dict:
        return {
            "prx_dbm": self.prx_dbm,
            "noise_floor_dbm": self.noise_floor_dbm,
            "snr_db": self.snr_db,
            "required_snr_db": self.required_snr_db,
            "above_sensitivity": self.above_sensitivity,
            "above_capacity_threshold": self.above_capacity_threshold,
            "decodable": self.decodable,
        }


def fspl_db(distance_cm: float, freq_mhz: float) -> float:
    """Free-space path loss: 20*log10(d_cm) + 20*log10(f_MHz) - 67.55."""
    if distance_cm <= 0 or freq_mhz <= 0:
        raise ValueError("distance_cm and freq_mhz must be > 0")
    return 20.0 * math.log10(distance_cm) + 20.0 * math.log10(freq_mhz) - 67.55


def received_power_dbm(budget: LinkBudget) -> float:
    """Received power: ptx + gtx - FSPL + grx - lbox."""
    return (
        budget.ptx_dbm
        + budget.gtx_db
        - fspl_db(budget.distance_cm, budget.freq_mhz)
        + budget.grx_db
        - budget.lbox_db
    )


def noise_floor_dbm(params: ChannelParams) -> float:
    """Thermal noise power kTB over the receiver bandwidth, in dBm."""
    watts = BOLTZMANN_J_PER_K * params.temperature_k * params.bandwidth_hz
    return 10.0 * math.log10(watts / 1e-3)


def required_snr_db(params: ChannelParams) -> float:
    """Shannon minimum SNR to sustain data_rate_bps: 10*log10(2^(C/B) - 1).

    Best case for the receiver; real coding needs more.
    """
    ratio = params.data_rate_bps / params.bandwidth_hz
    if ratio > 50:
        # 2^r - 1 ~ 2^r beyond double precision; avoids overflow.
        return 10.0 * ratio * math.log10(2.0)
    return 10.0 * math.log10(2.0 ** ratio - 1.0)


def reception_verdict(
    budget: LinkBudget,
    params: ChannelParams,
    rx_sensitivity_dbm: float,
) -> ReceptionVerdict:
    """Decide whether a receiver with the given sensitivity can decode.

    Decodable requires both: received power at or above the hardware
    sensitivity, and SNR at or above the capacity threshold for the
    receiver's target data rate.
    """
    prx = received_power_dbm(budget)
    floor = noise_floor_dbm(params)
    snr = prx - floor
    required = required_snr_db(params)
    above_sens = prx >= rx_sensitivity_dbm
    above_cap = snr >= required
    return ReceptionVerdict(
        prx_dbm=prx,
        noise_floor_dbm=floor,
        snr_db=snr,
        required_snr_db=required,
        above_sensitivity=above_sens,
        above_capacity_threshold=above_cap,
        decodable=above_sens and above_cap,
    )


def calibrate_tx(
    target_prx_dbm: float,
    worst_case_distance_cm: float,
    freq_mhz: float,
    hw_attenuation_db: float = 80.0,
    radio_max_ptx_dbm: float = DEFAULT_RADIO_MAX_PTX_DBM,
) -> float:
    """Software transmit power so the farthest in-box node hears target_prx.

    The radiated power is the software setting minus the fixed attenuator
    chain; invert the in-box budget (no gains, no shielding):

        ptx_sw = target + hw_attenuation + FSPL(worst_case_distance)

    Raises CalibrationError when the radio cannot go that high.
    """
    ptx = target_prx_dbm + hw_attenuation_db + fspl_db(worst_case_distance_cm, freq_mhz)
    if ptx > radio_max_ptx_dbm:
        raise CalibrationError(
            f"required software ptx {ptx:.2f} dBm exceeds radio maximum "
            f"{radio_max_ptx_dbm:.2f} dBm; use less hardware attenuation or "
            f"a shorter worst-case distance"
        )
    return ptx


def rogue_power_inside_dbm(
    attacker_ptx_dbm: float,
    attacker_gtx_db: float,
    distance_cm: float,
    freq_mhz: float,
    lbox_db: float,
) -> float:
    """Power an external transmitter lands inside the closed box.

    The inbound direction of the same budget: the box wall attenuates the
    rogue network's signal before a node inside can hear it.
    """
    return received_power_dbm(
        LinkBudget(
            ptx_dbm=attacker_ptx_dbm,
            gtx_db=attacker_gtx_db,
            grx_db=0.0,
            lbox_db=lbox_db,
            distance_cm=distance_cm,
            freq_mhz=freq_mhz,
        )
    )
