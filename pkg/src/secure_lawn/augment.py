"""LLM-driven state/reward augmentation: prompt construction, provider access, reply parsing."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import httpx
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from secure_lawn import dsl

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "1"
MAX_FEATURES = 8
DEFAULT_MODEL = "gpt-4-1106-preview"
API_KEY_ENV = "LLM_API_KEY"
OBJECTIVE = "maximize the sum secrecy channel capacity while reaching the destination"


class AugmentationError(ValueError):
    """Reply could not be turned into a usable augmentation."""


class ProviderError(RuntimeError):
    def __init__(self, message: str, attempts: int = 0):
        super().__init__(f"{message} (after {attempts} attempt(s))" if attempts else message)
        self.attempts = attempts


@dataclass
class AugmentationSpec:
    features: tuple[tuple[str, str], ...]
    intrinsic_expr: str
    weight: float
    diagnostics: dsl.Diagnostics = field(default_factory=dsl.Diagnostics, compare=False, repr=False)

    def __post_init__(self):
        self.features = tuple((str(n), str(t)) for n, t in self.features)
        self.weight = float(self.weight)
        if len(self.features) > MAX_FEATURES:
            raise AugmentationError(f"at most {MAX_FEATURES} features allowed")
        if abs(self.weight) > 1.0 or not math.isfinite(self.weight):
            raise AugmentationError(f"|weight| must be <= 1, got {self.weight}")
        names = [n for n, _ in self.features]
        if len(set(names)) != len(names):
            raise AugmentationError("duplicate feature names")
        for name in names:
            if not dsl.NAME_RE.match(name):
                raise AugmentationError(f"invalid feature name {name!r}")
        self.compiled_features = tuple((n, dsl.parse(t)) for n, t in self.features)
        self.compiled_intrinsic = dsl.parse(self.intrinsic_expr)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.features)

    def check(self, schema: dsl.VarSchema) -> None:
        """Raise unless every expression validates against ``schema``."""
        clash = set(self.feature_names) & schema.names
        if clash:
            raise AugmentationError(f"feature names clash with base variables: {sorted(clash)}")
        for name, expr in self.compiled_features:
            errors = dsl.validate(expr, schema)
            if errors:
                raise AugmentationError(f"feature {name!r}: {'; '.join(errors)}")
        errors = dsl.validate(self.compiled_intrinsic, schema)
        if errors:
            raise AugmentationError(f"intrinsic: {'; '.join(errors)}")

    def to_dict(self) -> dict:
        return {
            "features": [{"name": n, "expr": t} for n, t in self.features],
            "intrinsic": {"expr": self.intrinsic_expr, "weight": self.weight},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentationSpec":
        return cls(
            tuple((f["name"], f["expr"]) for f in data.get("features", [])),
            data["intrinsic"]["expr"],
            data["intrinsic"]["weight"],
        )


@dataclass(frozen=True)
class ProviderConfig:
    mode: str = "mock"
    endpoint: str | None = None
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_retries: int = 3
    cache_dir: str | None = None
    fixture_path: str | None = None
    timeout: float = 60.0
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.mode not in ("remote", "mock"):
            raise ValueError(f"provider mode must be 'remote' or 'mock', got {self.mode!r}")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str


# ------------------------------------------------------------------ prompt

_SYSTEM_TEMPLATE = """\
You are an expert in wireless physical-layer security and reinforcement learning reward design.
You augment the state and reward of a reinforcement learning environment.
Reply with a single JSON object and nothing else, with exactly these keys:
  "features": a list of at most {max_features} objects {{"name": <identifier>, "expr": <expression>}}
  "intrinsic": an object {{"expr": <expression>, "weight": <number in [-1, 1]>}}
Identifiers match [a-z][a-z0-9_]* and must not reuse a variable name.
Every expression must be written in the expression language described by the user.
Template version {version}.
"""


def _describe_geometry(config) -> list[str]:
    def fmt(p):
        return f"({p.x:g}, {p.y:g}, {p.z:g}) m"

    r = config.radio
    return [
        f"- Area: {config.width:g} m x {config.height:g} m; the AAV flies at a fixed altitude of {config.aav_altitude:g} m.",
        f"- AAV start {fmt(config.start)}, destination {fmt(config.destination)}, arrival radius {config.arrival_radius:g} m.",
        f"- Base station {fmt(config.bs)} with a {r.num_antennas}-antenna uniform linear array along the x axis, "
        f"maximum transmit power {r.p_max:g} W.",
        f"- Ground jammer {fmt(config.jammer)} transmitting {r.jammer_power:g} W; it interferes with both receivers.",
        f"- Aerial eavesdropper {fmt(config.eve)}.",
        "- Channels follow the free-space path loss model (line of sight).",
        f"- Each step lasts {config.dt:g} s; the AAV speed is at most {config.v_max:g} m/s; "
        f"an episode lasts at most {config.horizon} steps.",
        f"- Base reward per step: {config.w_sec:g} * c_sec + {config.w_prog:g} * progress "
        f"+ {config.arrival_bonus:g} on arrival.",
    ]


def _describe_schema(schema: dsl.VarSchema) -> list[str]:
    lines = ["| name | kind |", "| --- | --- |"]
    for name in schema.scalars:
        lines.append(f"| {name} | scalar |")
    for name, dim in schema.vectors.items():
        lines.append(f"| {name} | vector[{dim}] |")
    return lines


def _describe_grammar() -> list[str]:
    scalar = sorted(n for n, k in dsl.BUILTINS.items() if dsl.VECTOR not in k)
    vector = sorted(n for n, k in dsl.BUILTINS.items() if dsl.VECTOR in k)
    return [
        "Expressions use prefix function calls only: name(arg, ...). No infix operators.",
        "Arguments are decimal numbers, variable names, or nested calls.",
        f"Scalar functions: {', '.join(f'{n}/{len(dsl.BUILTINS[n])}' for n in scalar)}.",
        f"Vector functions (arguments must be vector variables): {', '.join(f'{n}/{len(dsl.BUILTINS[n])}' for n in vector)}.",
        "clip(x, lo, hi) bounds x; div by ~0, log of x <= 0 and sqrt of x < 0 are errors and evaluate to 0.",
        f"Limits: depth <= {dsl.MAX_DEPTH}, at most {dsl.MAX_NODES} nodes. Every expression must return a scalar.",
        "Features may reference only the variables in the table, not other new features.",
    ]


def build_prompt(config, schema: dsl.VarSchema) -> PromptBundle:
    system = _SYSTEM_TEMPLATE.format(max_features=MAX_FEATURES, version=TEMPLATE_VERSION)
    user = "\n".join(
        [
            "## Scenario",
            "An aerial autonomous vehicle (AAV) flies from a start point to a destination while a ground base "
            "station sends it confidential control signals by beamforming. An aerial eavesdropper tries to "
            "intercept the signals and a ground jammer disrupts them. The agent jointly controls the AAV velocity "
            "and the base-station beamforming vector.",
            *_describe_geometry(config),
            "",
            "## Objective",
            f"The objective is to {OBJECTIVE}.",
            "",
            "## Variables",
            "Variables describe the state after the current step. Distances in pos_*, dest_d*, dist_* are "
            "normalized by the area diagonal; *_x, *_y, *_z and *_pos are in meters. c_legit, c_eve and c_sec "
            "are the legitimate, eavesdropper and secrecy capacities (bits/s/Hz) of the current step; progress "
            "is the normalized reduction of distance to the destination in the current step.",
            *_describe_schema(schema),
            "",
            "## Expression language",
            *_describe_grammar(),
            "",
            "## Task",
            "Propose semantically meaningful state features that help the agent reason about the objective, "
            "and one intrinsic reward expression with a weight that supplements the base reward.",
        ]
    )
    return PromptBundle(system, user + "\n")


# ---------------------------------------------------------------- provider


def cache_key(prompt: PromptBundle, model: str, temperature: float) -> str:
    payload = json.dumps(
        {"system": prompt.system, "user": prompt.user, "model": model, "temperature": temperature},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _cache_read(cache_dir: str | None, key: str) -> str | None:
    if not cache_dir:
        return None
    path = Path(cache_dir) / f"{key}.txt"
    if path.is_file():
        return path.read_bytes().decode("utf-8")
    return None


def _cache_write(cache_dir: str | None, key: str, text: str) -> None:
    if not cache_dir:
        return
    directory = Path(cache_dir)
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{key}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(text.encode("utf-8"))
        os.replace(tmp, directory / f"{key}.txt")
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def default_fixture_text() -> str:
    return resources.files("secure_lawn.data").joinpath("mock_augmentation.txt").read_text("utf-8")


def request_augmentation(
    prompt: PromptBundle,
    provider: ProviderConfig,
    transport: httpx.BaseTransport | None = None,
) -> str:
    """Return the raw LLM reply text for ``prompt``."""
    if provider.mode == "mock":
        if provider.fixture_path:
            return Path(provider.fixture_path).read_bytes().decode("utf-8")
        return default_fixture_text()

    key = cache_key(prompt, provider.model, provider.temperature)
    cached = _cache_read(provider.cache_dir, key)
    if cached is not None:
        logger.info("augmentation reply served from cache %s", key[:12])
        return cached

    api_key = os.environ.get(API_KEY_ENV, "").strip()
    if not api_key:
        raise ProviderError(f"remote mode needs the {API_KEY_ENV} environment variable")
    if not provider.endpoint:
        raise ProviderError("remote mode needs an endpoint URL")
    body = {
        "model": provider.model,
        "messages": [
            {"role": "system", "content": prompt.system},
            {"role": "user", "content": prompt.user},
        ],
        "temperature": provider.temperature,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    last_error = "no attempt made"
    with httpx.Client(transport=transport, timeout=provider.timeout) as client:
        for attempt in range(1, provider.max_retries + 1):
            try:
                response = client.post(provider.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"network error: {exc}"
            else:
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"HTTP {response.status_code}"
                elif response.status_code >= 300:
                    raise ProviderError(f"HTTP {response.status_code}: {response.text[:200]}", attempt)
                else:
                    text = _content_from_envelope(response, attempt)
                    _cache_write(provider.cache_dir, key, text)
                    return text
            logger.warning("provider attempt %d/%d failed: %s", attempt, provider.max_retries, last_error)
            if attempt < provider.max_retries:
                time.sleep(provider.backoff_base * 2 ** (attempt - 1))
    raise ProviderError(last_error, provider.max_retries)


def _content_from_envelope(response: httpx.Response, attempt: int) -> str:
    try:
        content = response.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderError(f"malformed provider envelope: {exc!r}", attempt) from exc
    if not isinstance(content, str):
        raise ProviderError("malformed provider envelope: content is not text", attempt)
    return content


# ------------------------------------------------------------------ parsing

_FENCE_RE = re.compile(r"```[a-zA-Z]*")


def extract_json_object(reply: str) -> dict:
    text = _FENCE_RE.sub("", reply)
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, i)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    raise AugmentationError("no JSON object found in reply")


def parse_augmentation(
    reply: str, schema: dsl.VarSchema, diagnostics: list[str] | None = None
) -> AugmentationSpec:
    """Turn an LLM reply into a validated :class:`AugmentationSpec`.

    Invalid features are dropped (and noted in ``diagnostics``); an invalid or
    missing intrinsic reward is fatal. The weight is clamped to [-1, 1].
    """
    notes = diagnostics if diagnostics is not None else []
    data = extract_json_object(reply)

    features: list[tuple[str, str]] = []
    raw_features = data.get("features", [])
    if not isinstance(raw_features, list):
        notes.append("'features' is not a list; ignored")
        raw_features = []
    seen: set[str] = set()
    for item in raw_features:
        if len(features) == MAX_FEATURES:
            notes.append(f"more than {MAX_FEATURES} features; extras dropped")
            break
        if not isinstance(item, dict) or not isinstance(item.get("name"), str) or not isinstance(item.get("expr"), str):
            notes.append(f"malformed feature entry dropped: {item!r}")
            continue
        name, text = item["name"], item["expr"]
        if not dsl.NAME_RE.match(name):
            notes.append(f"feature {name!r} dropped: invalid name")
            continue
        if name in schema.names or name in seen:
            notes.append(f"feature {name!r} dropped: name already in use")
            continue
        try:
            expr = dsl.parse(text)
        except dsl.DslError as exc:
            notes.append(f"feature {name!r} dropped: {exc}")
            continue
        errors = dsl.validate(expr, schema)
        if errors:
            notes.append(f"feature {name!r} dropped: {'; '.join(errors)}")
            continue
        seen.add(name)
        features.append((name, dsl.to_text(expr)))

    intrinsic = data.get("intrinsic")
    intrinsic_text = None
    weight = 0.0
    problem = None
    if not isinstance(intrinsic, dict) or not isinstance(intrinsic.get("expr"), str):
        problem = "missing intrinsic expression"
    else:
        try:
            expr = dsl.parse(intrinsic["expr"])
            errors = dsl.validate(expr, schema)
            if errors:
                problem = "; ".join(errors)
            else:
                intrinsic_text = dsl.to_text(expr)
        except dsl.DslError as exc:
            problem = str(exc)
        try:
            weight = float(intrinsic.get("weight", 0.0))
        except (TypeError, ValueError):
            problem = problem or f"weight {intrinsic.get('weight')!r} is not a number"
        if not math.isfinite(weight):
            problem = problem or "weight is not finite"

    if problem is not None:
        if not features:
            raise AugmentationError(f"no valid features and invalid intrinsic reward: {problem}")
        raise AugmentationError(f"invalid intrinsic reward: {problem}")
    if abs(weight) > 1.0:
        clamped = max(-1.0, min(1.0, weight))
        notes.append(f"intrinsic weight {weight} clamped to {clamped}")
        weight = clamped
    for note in notes:
        logger.warning("augmentation: %s", note)
    return AugmentationSpec(tuple(features), intrinsic_text, weight)


# ------------------------------------------------------------- transformer


class SemanticFeatureTransformer(TransformerMixin, BaseEstimator):
    """Evaluate an augmentation's feature expressions over a batch of bindings.

    ``fit`` validates the expressions against the base schema; ``transform``
    maps a sequence of binding dicts to an ``(n_samples, n_features)`` array.
    Domain errors evaluate to ``fallback``.
    """

    def __init__(self, spec: AugmentationSpec | None = None, schema: dsl.VarSchema | None = None, fallback: float = 0.0):
        self.spec = spec
        self.schema = schema
        self.fallback = fallback

    def fit(self, X=None, y=None):
        if self.spec is None:
            raise AugmentationError("SemanticFeatureTransformer needs an AugmentationSpec")
        if self.schema is not None:
            self.spec.check(self.schema)
        self.feature_names_ = np.array(self.spec.feature_names, dtype=object)
        self.n_features_out_ = len(self.spec.features)
        self.diagnostics_ = dsl.Diagnostics()
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_names_")
        rows = [
            [dsl.guarded_eval(expr, binding, self.fallback, self.diagnostics_) for _, expr in self.spec.compiled_features]
            for binding in X
        ]
        return np.asarray(rows, dtype=np.float64).reshape(len(rows), self.n_features_out_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_names_")
        return self.feature_names_

    def intrinsic_reward(self, X) -> np.ndarray:
        check_is_fitted(self, "feature_names_")
        return np.array(
            [self.spec.weight * dsl.guarded_eval(self.spec.compiled_intrinsic, b, self.fallback, self.diagnostics_) for b in X]
        )
