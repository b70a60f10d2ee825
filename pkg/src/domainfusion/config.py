"""Experiment configuration: flat ``key = value`` sections in plain text.

Grammar (documented here and in the README):

* ``[section]`` lines open a section; ``key = value`` lines set keys.
* Blank lines and lines starting with ``#`` are ignored.
* Every key in the schema is mandatory; unknown sections or keys are
  errors, as are values that fail the key's type.
* Types: int, float, bool (``true``/``false``), str, and str lists
  (comma-separated).

The parsed form is a plain nested dict; ``render_config`` writes it back
in canonical order so configs embed verbatim in run manifests.
"""

from __future__ import annotations

from .errors import ConfigError

# (type, default) per section/key; parse order is canonical render order
SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "data": {
        "side": ("int", 16),
        "classes_per_domain": ("int", 4),
        "noise_sigma": ("float", 12.0),
        "fixed_phase": ("bool", True),
        "target_kind": ("str", "solid-shapes"),
        "outer_kinds": ("strlist", ["outline-shapes", "striped-noise"]),
        "n_target": ("int", 500),
        "n_outer": ("int", 2000),
        "n_test_per_class": ("int", 100),
        "n_full_per_class": ("int", 400),
    },
    "gan": {
        "mode": ("str", "df"),
        "alpha": ("float", 0.5),
        "batch": ("int", 64),
        "disc_steps": ("int", 1),
        "lr_g": ("float", 1e-4),
        "lr_d": ("float", 4e-4),
        "beta1": ("float", 0.0),
        "beta2": ("float", 0.9),
        "iters": ("int", 2000),
        "tgan_pretrain_iters": ("int", 2000),
        "eval_interval": ("int", 250),
        "patience": ("int", 5),
        "is_samples": ("int", 1024),
        "spectral_norm": ("bool", True),
        "fresh_noise": ("bool", True),
        "z_dim": ("int", 32),
        "embed_dim": ("int", 16),
        "hidden": ("int", 256),
    },
    "metrics": {
        "msssim_scales": ("int", 3),
        "pair_budget": ("int", 100000),
        "feature_dim": ("int", 64),
        "extractor_hidden": ("int", 128),
        "extractor_steps": ("int", 3000),
        "extractor_batch": ("int", 128),
        "extractor_lr": ("float", 1e-3),
    },
    "drs": {
        "use_drs": ("bool", True),
        "tau": ("int", 500),
        "eps": ("float", 1e-14),
        "gamma_mode": ("str", "percentile"),
        "gamma": ("float", 0.0),
        "gamma_percentile": ("float", 80.0),
        "head_steps": ("int", 600),
        "head_lr": ("float", 1e-2),
        "head_batch": ("int", 32),
        "max_attempt_factor": ("int", 200),
    },
    "augment": {
        "gen_per_class": ("int", 200),
        "n_real_train": ("int", 400),
        "n_real_val": ("int", 100),
        "use_cda": ("bool", False),
        "cda_flip": ("bool", True),
        "cda_expand": ("bool", True),
        "cda_rotate": ("bool", True),
    },
    "classifier": {
        "hidden1": ("int", 128),
        "hidden2": ("int", 64),
        "steps": ("int", 1500),
        "batch": ("int", 64),
        "lr": ("float", 2e-4),
        "eval_every": ("int", 100),
        "topk": ("int", 2),
    },
    "pipeline": {
        "seeds": ("int", 5),
        "base_seed": ("int", 0),
    },
    "paths": {
        "out_dir": ("str", "runs/exp"),
    },
}

_VALID_GAN_MODES = ("cgan", "tgan", "df")
_VALID_GAMMA_MODES = ("fixed", "percentile")


def default_config() -> dict:
    return {
        section: {key: _copy(default) for key, (_, default) in keys.items()}
        for section, keys in SCHEMA.items()
    }


def _copy(value):
    return list(value) if isinstance(value, list) else value


def _coerce(section: str, key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError(raw)
        if kind == "strlist":
            items = [part.strip() for part in raw.split(",")]
            return [p for p in items if p]
        return raw
    except ValueError:
        raise ConfigError(
            f"bad value for [{section}] {key}: {raw!r} is not a {kind}"
        ) from None


def parse_config(text: str) -> dict:
    """Parse and validate; every schema key must be present exactly."""
    out: dict[str, dict] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}] at line {lineno}")
            if section in out:
                raise ConfigError(f"duplicate section [{section}] at line {lineno}")
            out[section] = {}
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' at line {lineno}: {stripped!r}")
        if section is None:
            raise ConfigError(f"key outside any section at line {lineno}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        if key in out[section]:
            raise ConfigError(f"duplicate key {key!r} in section [{section}]")
        kind, _ = SCHEMA[section][key]
        out[section][key] = _coerce(section, key, kind, raw)
    for section_name, keys in SCHEMA.items():
        if section_name not in out:
            raise ConfigError(f"missing section [{section_name}]")
        for key in keys:
            if key not in out[section_name]:
                raise ConfigError(f"missing key {key!r} in section [{section_name}]")
    _validate_semantics(out)
    return out


def _validate_semantics(cfg: dict) -> None:
    if cfg["gan"]["mode"] not in _VALID_GAN_MODES:
        raise ConfigError(f"gan.mode must be one of {_VALID_GAN_MODES}")
    if cfg["drs"]["gamma_mode"] not in _VALID_GAMMA_MODES:
        raise ConfigError(f"drs.gamma_mode must be one of {_VALID_GAMMA_MODES}")
    if not 0.0 <= cfg["gan"]["alpha"] <= 1.0:
        raise ConfigError("gan.alpha must be in [0, 1]")
    if cfg["pipeline"]["seeds"] < 1:
        raise ConfigError("pipeline.seeds must be >= 1")
    k = cfg["data"]["classes_per_domain"]
    for key in ("n_target", "n_outer"):
        if cfg["data"][key] % k:
            raise ConfigError(f"data.{key} must be divisible by classes_per_domain")
    n_target = cfg["data"]["n_target"]
    want = cfg["augment"]["n_real_train"] + cfg["augment"]["n_real_val"]
    if want > n_target:
        raise ConfigError(
            f"augment splits need {want} reals but data.n_target is {n_target}"
        )


def _format_value(kind: str, value) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind == "strlist":
        return ",".join(value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def render_config(cfg: dict) -> str:
    """Canonical text form; parse(render(c)) == c."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (kind, _) in keys.items():
            lines.append(f"{key} = {_format_value(kind, cfg[section][key])}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
