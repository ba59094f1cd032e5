"""Flat key-value run configuration files.

One ``key = value`` pair per line; blank lines and ``#`` comments are
ignored. Values stay strings here; consumers coerce. The full key list
is documented in the README.
"""
from __future__ import annotations


class RunConfigError(ValueError):
    pass


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise RunConfigError(
                "%s:%d: expected 'key = value', got %r" % (source, lineno, stripped)
            )
        key = key.strip()
        value = value.split("#", 1)[0].strip()
        if not key or not value:
            raise RunConfigError(
                "%s:%d: empty key or value in %r" % (source, lineno, stripped)
            )
        if key in out:
            raise RunConfigError("%s:%d: duplicate key %r" % (source, lineno, key))
        out[key] = value
    return out


def read_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), source=path)


def write_config(path, values):
    with open(path, "w") as fh:
        for key in sorted(values):
            fh.write("%s = %s\n" % (key, values[key]))


def get_bool(cfg, key, default=False):
    raw = cfg.get(key)
    if raw is None:
        return default
    lowered = str(raw).lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise RunConfigError("config key %r must be boolean, got %r" % (key, raw))
