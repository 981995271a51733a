"""Run configuration: loading, validation and defaults.

A config is a TOML or JSON document with sections ``model``, ``sampler``,
``output`` and, for the auxiliary subcommands, ``suitability`` and
``verify``. Every key is checked before any simulation runs; unknown keys
and bad values raise :class:`~mfabc.errors.ConfigError` naming the field
and, when it can be located, the line.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from mfabc.errors import ConfigError

MODELS = ("toy", "ou", "kuramoto", "grid")
METHODS = ("asmc", "maps", "is", "mcmc-reference")
MANIFEST_VERSION = 1


def _positive_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _nonneg_int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _positive(v):
    return _number(v) and v > 0


def _unit_open(v):
    return _number(v) and 0 < v < 1


def _unit_half_open(v):
    return _number(v) and 0 < v <= 1


def _pair_of_numbers(v):
    return isinstance(v, list) and len(v) == 2 and all(_number(x) for x in v) and v[0] < v[1]


def _number_list(v):
    return isinstance(v, list) and len(v) > 0 and all(_positive(x) for x in v)


# key -> (check, description)
SCHEMA = {
    "model": {
        "name": (lambda v: v in MODELS, f"one of {MODELS}"),
        "y_obs": (_number, "a number"),
        "observed_seed": (_nonneg_int, "a non-negative integer"),
        "observed_file": (lambda v: isinstance(v, str) and v, "a file path"),
        "s1_divisor": (lambda v: v in (150, 151), "150 or 151"),
        "window": (_pair_of_numbers, "two increasing numbers"),
    },
    "sampler": {
        "method": (lambda v: v in METHODS, f"one of {METHODS}"),
        "n_particles": (_positive_int, "a positive integer"),
        "n_hf": (_positive_int, "a positive integer"),
        "n_lf": (_positive_int, "a positive integer"),
        "alpha": (_unit_open, "in (0, 1)"),
        "alpha_lf": (_unit_half_open, "in (0, 1]"),
        "a_lf": (_unit_open, "in (0, 1)"),
        "eps_target": (_positive, "a positive number"),
        "eps_lf": (_positive, "a positive number"),
        "ess_fraction": (_unit_half_open, "in (0, 1]"),
        "mcmc_moves": (lambda v: _positive_int(v) and v <= 64, "an integer in [1, 64]"),
        "kernel_scale": (_positive, "a positive number"),
        "resampling": (lambda v: v in ("systematic", "multinomial"), "'systematic' or 'multinomial'"),
        "max_iterations": (_positive_int, "a positive integer"),
        "defer_hf": (lambda v: isinstance(v, bool), "true or false"),
        "n_iter": (_positive_int, "a positive integer"),
        "n_chains": (_positive_int, "a positive integer"),
        "burn_in": (lambda v: _number(v) and 0 <= v < 1, "in [0, 1)"),
    },
    "output": {
        "dir": (lambda v: isinstance(v, str) and v, "a directory path"),
        "replicates": (_positive_int, "a positive integer"),
        "seed": (lambda v: _nonneg_int(v) and v < 2**63, "a non-negative 63-bit integer"),
        "threads": (_positive_int, "a positive integer"),
        "figures": (lambda v: isinstance(v, bool), "true or false"),
        "reference": (lambda v: isinstance(v, str) and v, "'analytic', 'none' or a CSV path"),
    },
    "suitability": {
        "n0": (_positive_int, "a positive integer"),
        "kappa": (_unit_open, "in (0, 1)"),
        "eps": (_positive, "a positive number"),
        "n_lf": (_positive_int, "a positive integer"),
        "n_hf": (_positive_int, "a positive integer"),
    },
    "verify": {
        "y_obs": (_number, "a number"),
        "eps": (_number_list, "a list of positive numbers"),
        "eps_lf": (_number_list, "a list of positive numbers"),
        "n_lf": (_positive_int, "a positive integer"),
        "a_lf_target": (_unit_open, "in (0, 1)"),
        "n_draws": (_positive_int, "a positive integer"),
    },
}

# Experiment defaults per model; the tolerance target has no default.
MODEL_DEFAULTS = {
    "toy": {"n_particles": 5120, "n_hf": 10, "n_lf": 20, "alpha": 0.7},
    "grid": {"n_particles": 10000, "n_hf": 10, "n_lf": 5, "alpha": 0.7},
    "ou": {"n_particles": 5120, "n_hf": 10, "n_lf": 20, "alpha": 0.7},
    "kuramoto": {"n_particles": 2048, "n_hf": 5, "n_lf": 1, "alpha": 0.9},
}
# baseline ASMC uses n = 10 for the Kuramoto network too
ASMC_OVERRIDES = {"kuramoto": {"n_hf": 10}}

SAMPLER_DEFAULTS = {
    "a_lf": 0.001,
    "ess_fraction": 0.5,
    "mcmc_moves": 1,
    "kernel_scale": 2.0,
    "resampling": "systematic",
    "max_iterations": 200,
    "defer_hf": True,
    "n_iter": 50_000,
    "n_chains": 10,
    "burn_in": 0.2,
}
OUTPUT_DEFAULTS = {"dir": "mfabc-out", "replicates": 1, "seed": 0, "threads": 1, "figures": True}
SUITABILITY_DEFAULTS = {"n0": 5000, "kappa": 0.1, "n_lf": 20, "n_hf": 10}
VERIFY_DEFAULTS = {
    "y_obs": 0.5,
    "eps": [0.1, 0.5],
    "eps_lf": [0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 2.0],
    "n_lf": 20,
    "a_lf_target": 0.001,
    "n_draws": 100_000,
}


def _locate(text: str, key: str):
    """1-based line of the first ``key =`` / ``"key":`` occurrence, if any."""
    pattern = re.compile(rf'^\s*(?:"{re.escape(key)}"\s*:|{re.escape(key)}\s*=)|"{re.escape(key)}"\s*:')
    for no, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return no
    return None


def parse_text(text: str, fmt: str) -> dict:
    try:
        if fmt == "json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", line=int(m.group(1)) if m else None) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a table of sections")
    return data


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load(path, method: str | None = None) -> dict:
    """Read, unwrap (if a manifest) and validate a config file.

    ``method`` overrides ``sampler.method`` before defaults are filled.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    data = parse_text(text, fmt)
    if "manifest_version" in data:
        cfg = data.get("config")
        if not isinstance(cfg, dict):
            raise ConfigError("manifest has no config section", field="config")
        if config_hash(cfg) != data.get("config_hash"):
            raise ConfigError("manifest config does not match its hash", field="config_hash")
        if method is not None and cfg["sampler"].get("method") != method:
            raise ConfigError("a manifest fixes its sampler method", field="sampler.method")
        return validate(cfg)
    if method is not None:
        data.setdefault("sampler", {})
        if isinstance(data["sampler"], dict):
            data["sampler"]["method"] = method
    return validate(data, text)


def validate(data: dict, text: str = "") -> dict:
    """Check every section and key, then fill defaults. Returns a new dict."""
    data = copy.deepcopy(data)
    for section, body in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section '{section}'", field=section, line=_locate(text, section))
        if not isinstance(body, dict):
            raise ConfigError("section must be a table", field=section, line=_locate(text, section))
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]", field=f"{section}.{key}",
                                  line=_locate(text, key))
            check, what = SCHEMA[section][key]
            if not check(value):
                raise ConfigError(f"must be {what}, got {value!r}", field=f"{section}.{key}",
                                  line=_locate(text, key))

    model = data.setdefault("model", {})
    if "name" not in model:
        raise ConfigError("missing required key", field="model.name")
    name = model["name"]
    if name == "toy":
        model.setdefault("y_obs", None)
    if name in ("ou", "kuramoto") and "observed_file" not in model:
        model.setdefault("observed_seed", 1)
    if name == "ou":
        model.setdefault("s1_divisor", 150)
    if name == "kuramoto":
        model.setdefault("window", [10.0, 20.0])
    if name == "grid":
        model.setdefault("y_obs", 14)

    sampler = data.setdefault("sampler", {})
    method = sampler.setdefault("method", "maps")
    defaults = dict(MODEL_DEFAULTS[name])
    if method in ("asmc", "mcmc-reference"):
        defaults.update(ASMC_OVERRIDES.get(name, {}))
    for key, value in {**SAMPLER_DEFAULTS, **defaults}.items():
        sampler.setdefault(key, value)
    sampler.setdefault("alpha_lf", sampler["alpha"])

    output = data.setdefault("output", {})
    for key, value in OUTPUT_DEFAULTS.items():
        output.setdefault(key, value)
    output.setdefault("reference", "analytic" if name == "toy" else "none")
    if "suitability" in data:
        for key, value in SUITABILITY_DEFAULTS.items():
            data["suitability"].setdefault(key, value)
    if "verify" in data:
        for key, value in VERIFY_DEFAULTS.items():
            data["verify"].setdefault(key, value)
    return data


def require(config: dict, *fields: str):
    """Raise ConfigError for the first dotted field that is missing or null."""
    for dotted in fields:
        section, key = dotted.split(".")
        if config.get(section, {}).get(key) is None:
            raise ConfigError("missing required key", field=dotted)


def check_run(config: dict):
    """Cross-field checks for a sampling run."""
    name = config["model"]["name"]
    method = config["sampler"]["method"]
    require(config, "sampler.eps_target")
    if name in ("toy", "grid"):
        require(config, "model.y_obs")
    if method == "is":
        require(config, "sampler.eps_lf")
    if config["output"]["reference"] == "analytic" and name != "toy":
        raise ConfigError("an analytic reference exists only for the toy model", field="output.reference")
    if method == "mcmc-reference" and config["sampler"]["burn_in"] * config["sampler"]["n_iter"] >= \
            config["sampler"]["n_iter"] - 1:
        raise ConfigError("burn-in leaves no samples", field="sampler.burn_in")


def dumps_manifest(config: dict, files: list[str]) -> str:
    from mfabc import __version__

    body = {
        "manifest_version": MANIFEST_VERSION,
        "mfabc_version": __version__,
        "config_hash": config_hash(config),
        "seed": config["output"]["seed"],
        "replicates": config["output"]["replicates"],
        "config": config,
        "files": sorted(files),
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"
