"""Line-based `key = value` config files with [section] headers.

UTF-8, `#` comments, blank lines ignored. Unknown keys are errors at the
schema layer (fail loud), not silently dropped.
"""


class ConfigError(ValueError):
    pass


def parse_config(text, source="<config>"):
    """Parse config text into {section: {key: value}} (strings, ordered)."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"{source}:{lineno}: empty section name")
            if name in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def read_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read(), source=str(path))


def format_config(sections):
    lines = []
    for name, kv in sections.items():
        lines.append(f"[{name}]")
        for k, v in kv.items():
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)


def write_config(path, sections):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(format_config(sections))


# value parsers for schema entries
def as_int(s):
    return int(s)


def as_float(s):
    return float(s)


def as_bool(s):
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def as_str(s):
    return s


def as_int_tuple(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(int(x.strip()) for x in s.split(","))


def as_float_tuple(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(float(x.strip()) for x in s.split(","))


def apply_schema(section_name, mapping, schema, defaults=None):
    """Parse a raw section through {key: parser}; unknown keys are errors."""
    out = dict(defaults or {})
    for key, value in mapping.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} in section [{section_name}] "
                              f"(known: {', '.join(sorted(schema))})")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} in [{section_name}]: {exc}") from exc
    return out
