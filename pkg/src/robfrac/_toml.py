"""TOML reading for configuration and problem files."""

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib


def read_toml(text):
    return tomllib.loads(text)
