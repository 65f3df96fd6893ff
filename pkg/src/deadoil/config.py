"""INI-style run configuration.

Values are kept as the raw strings found in the file; numbers are parsed on
access with ``float`` so scientific notation survives at full precision and
the manifest can echo the original text verbatim.
"""
import configparser
import re

from .errors import ConfigError

SCHEMA = {
    "domain": {"Lx", "Ly", "T", "nx", "ny", "nt"},
    "coefficients": {"phi", "g", "d", "c1", "c2", "c3", "delta_phi", "range",
                     "averaging", "n_samples", "tol"},
    "initial": {"u0", "p0"},
    "targets": {"source", "U", "U_time", "P", "P_time", "control", "control_time"},
    "cost": {"beta1", "beta2", "q0"},
    "solver": {"newton_tol", "newton_max", "linear_tol", "snapshot_every"},
    "optimize": {"max_outer", "grad_tol", "step0", "armijo_c", "history_len",
                 "f0", "f0_amp", "starts"},
    "wells": {"boxes", "control", "control_time"},
    "audit": {"base_n", "base_nt", "drift", "n_pairs", "n_fields"},
    "verify": {"probes", "steps"},
}

TEMPLATE = """\
[domain]
Lx = 1.0
Ly = 1.0
T = 0.1

[coefficients]
phi = identity
g = constant c=0
d = constant c=1
c1 = 1
c2 = 10
c3 = 1
delta_phi = 1

[initial]
u0 = zero
p0 = zero

[cost]
beta1 = 1
beta2 = 1
q0 = 1.5
"""

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


class ParsedConfig:
    """Sections of raw string values plus the line number of every key."""

    def __init__(self, sections, lines, text="", path=None):
        self.sections = sections
        self.lines = lines
        self.text = text
        self.path = path

    def has(self, section, key):
        return key in self.sections.get(section, {})

    def line(self, section, key):
        return self.lines.get((section, key))

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def get_float(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing mandatory key [{section}] {key}", key=key)
            return float(default)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"malformed number '{raw}'", key=key,
                              line=self.line(section, key)) from None

    def get_int(self, section, key, default=None):
        raw = self.get(section, key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing mandatory key [{section}] {key}", key=key)
            return int(default)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"malformed integer '{raw}'", key=key,
                              line=self.line(section, key)) from None

    def get_floats(self, section, key, default=()):
        raw = self.get(section, key)
        if raw is None:
            return tuple(default)
        try:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"malformed number list '{raw}'", key=key,
                              line=self.line(section, key)) from None

    def get_spec(self, section, key, default=None):
        """Parse ``name k=v k=v`` into (name, {k: float(v)})."""
        raw = self.get(section, key, default)
        if raw is None:
            raise ConfigError(f"missing mandatory key [{section}] {key}", key=key)
        return parse_spec(raw, key=key, line=self.line(section, key))

    def as_dict(self):
        return {s: dict(v) for s, v in self.sections.items()}


def parse_spec(raw, key=None, line=None):
    tokens = raw.split()
    if not tokens:
        raise ConfigError("empty specification", key=key, line=line)
    name, params = tokens[0], {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise ConfigError(f"expected k=v, got '{tok}'", key=key, line=line)
        k, v = tok.split("=", 1)
        try:
            params[k] = float(v)
        except ValueError:
            raise ConfigError(f"malformed number '{v}'", key=key, line=line) from None
    return name, params


def parse_text(text, path=None):
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        m = _SECTION.match(raw)
        if m:
            section = m.group(1).strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", line=lineno)
            continue
        m = _KEY.match(raw)
        if m and section is not None:
            key = m.group(1).strip()
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]", key=key, line=lineno)
            if (section, key) in lines:
                raise ConfigError(f"duplicate key '{key}' in [{section}]", key=key, line=lineno)
            lines[(section, key)] = lineno

    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key '{exc.option}'", key=exc.option, line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return ParsedConfig(sections, lines, text=text, path=path)


def parse_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file '{path}': {exc.strerror}") from None
    return parse_text(text, path=path)
