"""Pipeline configuration: defaults < key=value file < command-line flags."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .cut import CutParams


@dataclass
class PipelineConfig:
    manifest: str = ""
    out: str = "out"
    mode: str = "attentioncut"      # or "decoder"
    workers: int = 0                # 0 = logical cores
    save_soft: bool = True
    # aggregation
    k: int = 2
    r: int = 64
    r_s: int = 32
    # cut parameters
    tau_mode: str = "otsu"
    tau: float = 0.5
    n_seeds: int = 32
    rng_seed: int = 0
    lambda_phi: float = 0.16
    lambda_psi: float = 2.5
    lam: float = 0.1
    long_range_k: int = 8
    # decoder
    checkpoint: str = ""
    decoder_r: int = 64

    def cut_params(self) -> CutParams:
        return CutParams(
            tau_mode=self.tau_mode,
            tau=self.tau,
            n_seeds=self.n_seeds,
            rng_seed=self.rng_seed,
            lambda_phi=self.lambda_phi,
            lambda_psi=self.lambda_psi,
            lam=self.lam,
            long_range_k=self.long_range_k,
            r_s=self.r_s,
        )


# config-file/flag key for each field; "lambda" is a keyword, hence "lam"
KEY_TO_FIELD = {f.name: f.name for f in fields(PipelineConfig)} | {"lambda": "lam"}


def _coerce(value: str, target_type: type):
    if target_type is bool:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return target_type(value)


def load_config_file(path: str) -> dict:
    """Parse a flat key=value file into a field -> value dict."""
    types = {f.name: f.type for f in fields(PipelineConfig)}
    concrete = {"str": str, "int": int, "float": float, "bool": bool}
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in KEY_TO_FIELD:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            field = KEY_TO_FIELD[key]
            out[field] = _coerce(value, concrete[str(types[field])])
    return out


def merge_config(file_values: dict | None, flag_values: dict) -> PipelineConfig:
    """Apply file values over defaults, then non-None flag values over both."""
    config = PipelineConfig()
    for source in (file_values or {}, {k: v for k, v in flag_values.items() if v is not None}):
        for field, value in source.items():
            setattr(config, field, value)
    return config
