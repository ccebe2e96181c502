"""Named scenario presets shipped as config files."""

from importlib import resources

from .config import parse_config

PRESETS = (
    "example1-compressible",
    "example1-nearly-incompressible",
    "example2-isotropic",
    "example2-anisotropic",
    "example3-heterogeneous",
)


def preset_text(name):
    if name not in PRESETS:
        raise ValueError(f"unknown scenario {name!r}; available: {', '.join(PRESETS)}")
    return resources.files("porohdg.presets").joinpath(f"{name}.cfg").read_text()


def scenario(name):
    """Fully populated configuration of a named preset."""
    return parse_config(preset_text(name))
