"""Experiment configuration: sectioned ``key = value`` files plus overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from . import dsp
from .dataprep import Extractor, PrepConfig
from .ensemble import MERGES, WhaleNetConfig
from .errors import ParameterError
from .nn import TrainConfig
from .scattering import ScatteringConfig

# section -> key -> (type, default)
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {"seed": (int, 0), "workdir": (str, "scatterwave_run"), "workers": (int, 1)},
    "corpus": {
        "manifest": (str, ""),
        "synthetic": (bool, True),
        "classes": (int, 8),
        "per_class": (int, 120),
        "length": (int, 8000),
        "rate": (float, 47600.0),
        "imbalance": (float, 1.0),
    },
    "prep": {
        "target_len": (int, 8000),
        "target_rate": (float, 47600.0),
        "min_class_count": (int, 50),
        "train_fraction": (float, 0.75),
    },
    "mel": {"n_fft": (int, 1024), "hop": (int, 200), "n_mels": (int, 64),
            "f_min": (float, 0.0), "f_max": (float, 0.0)},
    "wst": {"J": (int, 6), "Q": (int, 16)},
    "train": {
        "epochs": (int, 100),
        "mlp_epochs": (int, 500),
        "batch_size": (int, 128),
        "mlp_batch_size": (int, 128),
        "lr": (float, 1e-2),
        "weight_decay": (float, 1e-3),
        "patience": (int, 10),
        "factor": (float, 0.5),
        "blocks_per_stage": (int, 2),
    },
    "merge": {"kind": (str, "hard")},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(section: str, key: str, raw: str):
    kind, _ = SCHEMA[section][key]
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise ValueError(raw)
            return low in _TRUE
        return kind(raw)
    except ValueError:
        raise ParameterError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def _canonical_key(section: str, key: str) -> str:
    for k in SCHEMA[section]:
        if k.lower() == key.lower():
            return k
    raise ParameterError(f"unknown key {key!r} in section [{section}]; valid keys: {sorted(SCHEMA[section])}")


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, object]] = field(default_factory=lambda: {
        s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw) -> None:
        if section not in SCHEMA:
            raise ParameterError(f"unknown section [{section}]; valid sections: {sorted(SCHEMA)}")
        key = _canonical_key(section, key)
        self.values[section][key] = _convert(section, key, raw) if isinstance(raw, str) else raw

    # typed views ----------------------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.get("run", "seed"))

    @property
    def workdir(self) -> Path:
        return Path(self.get("run", "workdir"))

    def prep(self) -> PrepConfig:
        p = self.values["prep"]
        return PrepConfig(p["target_len"], p["target_rate"], p["min_class_count"], p["train_fraction"], self.seed)

    def mel(self) -> dsp.MelConfig:
        m = self.values["mel"]
        return dsp.MelConfig(m["n_fft"], m["hop"], m["n_mels"], m["f_min"], m["f_max"] or None)

    def extractor(self, kind: str) -> Extractor:
        w = self.values["wst"]
        return Extractor(kind, w["J"], w["Q"], self.mel())

    def whalenet(self) -> WhaleNetConfig:
        t = self.values["train"]
        common = dict(lr=t["lr"], weight_decay=t["weight_decay"], patience=t["patience"], factor=t["factor"])
        return WhaleNetConfig(
            branch=TrainConfig(batch_size=t["batch_size"], epochs=t["epochs"], **common),
            mlp=TrainConfig(batch_size=t["mlp_batch_size"], epochs=t["mlp_epochs"], **common),
            blocks_per_stage=t["blocks_per_stage"],
            merge=self.get("merge", "kind"),
            seed=self.seed,
        )

    def validate(self) -> "ExperimentConfig":
        """Build every typed view once so bad values fail before any work starts."""
        c = self.values["corpus"]
        if not c["synthetic"] and not c["manifest"]:
            raise ParameterError("[corpus] needs either synthetic = yes or a manifest path")
        if c["classes"] < 2 or c["per_class"] < 2 or c["length"] < 2 or c["rate"] <= 0:
            raise ParameterError("[corpus] synthetic spec needs classes >= 2, per_class >= 2, length >= 2, rate > 0")
        if self.get("run", "workers") < 1:
            raise ParameterError("[run] workers must be >= 1")
        if self.get("merge", "kind") not in MERGES:
            raise ParameterError(f"[merge] kind must be one of {MERGES}")
        if self.values["train"]["blocks_per_stage"] < 1:
            raise ParameterError("[train] blocks_per_stage must be >= 1")
        prep = self.prep()
        ScatteringConfig(self.values["wst"]["J"], self.values["wst"]["Q"], prep.target_len)
        mel = self.mel()
        dsp.build_mel_filter_bank(mel.n_mels, mel.n_fft, prep.target_rate, mel.f_min, mel.f_max)
        self.whalenet()
        return self

    def to_text(self, skip=()) -> str:
        """Config file text; ``skip`` lists ``(section, key)`` pairs to leave out."""
        lines = []
        for s in SCHEMA:
            lines.append(f"[{s}]")
            lines += [f"{k} = {_format_value(v)}" for k, v in self.values[s].items() if (s, k) not in skip]
            lines.append("")
        return "\n".join(lines)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source)
    except configparser.Error as exc:
        raise ParameterError(f"{source}: {exc}") from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        for key, raw in parser[section].items():
            cfg.set(section, key, raw)
    return cfg


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read ``path`` (if given), apply ``section.key=value`` overrides, validate."""
    if path is None:
        cfg = ExperimentConfig()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParameterError(f"cannot read config {path}: {exc}") from None
        cfg = parse_config(text, str(path))
    for item in overrides:
        name, sep, raw = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ParameterError(f"override {item!r} must look like section.key=value")
        cfg.set(section, key, raw)
    return cfg.validate()
