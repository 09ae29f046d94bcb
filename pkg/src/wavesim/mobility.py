"""Straight-highway kinematics: 1-D positions, exact rational arithmetic.

Positions are evaluated lazily at query time; a profile is an exact linear
function of the microsecond clock, so two equal-speed nodes keep a constant
separation with no drift.
"""

from dataclasses import dataclass
from fractions import Fraction

from .engine import US_PER_SECOND


def kmh_to_ms(speed_kmh) -> Fraction:
    """Exact conversion: v * 1000 / 3600 m/s."""
    if speed_kmh < 0:
        raise ValueError(f"speed must be non-negative, got {speed_kmh}")
    return Fraction(speed_kmh) * Fraction(1000, 3600)


@dataclass(frozen=True)
class MobilityProfile:
    initial_position_m: Fraction
    speed_kmh: Fraction
    direction: int = 1  # +1 or -1 along the road axis
    start_time_us: int = 0

    @property
    def speed_ms(self) -> Fraction:
        return kmh_to_ms(self.speed_kmh)


def make_profile(initial_position_m, speed_kmh, direction: int = 1,
                 start_time_us: int = 0) -> MobilityProfile:
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    return MobilityProfile(Fraction(initial_position_m), Fraction(speed_kmh),
                           direction, start_time_us)


def position_at(profile: MobilityProfile, t_us: int) -> Fraction:
    if t_us < profile.start_time_us:
        raise ValueError(
            f"position queried at t={t_us} us before profile start "
            f"{profile.start_time_us} us")
    dt_s = Fraction(t_us - profile.start_time_us, US_PER_SECOND)
    return profile.initial_position_m + profile.direction * profile.speed_ms * dt_s


def contact_window_s(profile_a: MobilityProfile, profile_b: MobilityProfile,
                     comm_range_m) -> Fraction | None:
    """Analytic in-range duration for two same-direction profiles.

    2*comm_range/|dv| for unequal speeds (full disc traverse); None marks an
    unbounded window (equal speeds that start within range).
    """
    dv = abs(profile_a.direction * profile_a.speed_ms
             - profile_b.direction * profile_b.speed_ms)
    if dv == 0:
        gap = abs(profile_a.initial_position_m - profile_b.initial_position_m)
        return None if gap <= comm_range_m else Fraction(0)
    return 2 * Fraction(comm_range_m) / dv
