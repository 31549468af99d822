"""Model size profiles: channel counts, slice layout, window size.

The ``paper`` profile carries the full-size configuration; ``toy`` keeps
every mechanism (multiple slices, both passes, all context modules) at a
size where tests run in milliseconds; ``toy-single`` has exactly one
slice, which disables every inter-slice module and exercises the
degenerate path.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

__all__ = ["Profile", "PROFILES", "profile_by_name", "profile_by_id"]


@dataclass(frozen=True)
class Profile:
    """Static codec dimensions.

    ``latent_channels`` must equal ``slice_channels * slice_count``; the
    latent grid is coded as ``slice_count`` channel slices of
    ``slice_channels`` each.  ``hyper_channels`` is the channel count of
    the side-information grid, and ``window`` the odd side length of the
    local attention neighborhood.
    """

    name: str
    profile_id: int
    hyper_channels: int
    latent_channels: int
    slice_channels: int
    slice_count: int
    window: int

    def __post_init__(self) -> None:
        if self.slice_channels * self.slice_count != self.latent_channels:
            raise ConfigError(
                f"profile {self.name}: {self.slice_channels} x {self.slice_count}"
                f" != {self.latent_channels} latent channels"
            )
        if self.window < 1 or self.window % 2 != 1:
            raise ConfigError(f"profile {self.name}: window must be odd")
        if min(self.hyper_channels, self.latent_channels, self.slice_count) < 1:
            raise ConfigError(f"profile {self.name}: all sizes must be >= 1")


PROFILES: dict[str, Profile] = {
    p.name: p
    for p in (
        Profile(
            name="toy",
            profile_id=0,
            hyper_channels=16,
            latent_channels=32,
            slice_channels=8,
            slice_count=4,
            window=5,
        ),
        Profile(
            name="paper",
            profile_id=1,
            hyper_channels=192,
            latent_channels=320,
            slice_channels=32,
            slice_count=10,
            window=5,
        ),
        Profile(
            name="toy-single",
            profile_id=2,
            hyper_channels=16,
            latent_channels=8,
            slice_channels=8,
            slice_count=1,
            window=5,
        ),
    )
}


def profile_by_name(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(
            f"unknown profile {name!r}; choose from {sorted(PROFILES)}"
        ) from None


def profile_by_id(profile_id: int) -> Profile:
    for p in PROFILES.values():
        if p.profile_id == profile_id:
            return p
    raise ConfigError(f"unknown profile id {profile_id}")
