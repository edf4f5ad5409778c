import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from core.errors import ConfigParseError, ScenarioError
from models.agent import GroupSpec, NoiseKind, OpinionDist
from models.scenario import ScenarioConfig
from services.population_builder import discretize_q_range

logger = logging.getLogger(__name__)

INT_KEYS = ("n_agents", "seed", "quantile_points", "flexible_q_bins")
FLOAT_KEYS = ("alpha0", "gamma", "sigma", "tau_end", "record_every", "dt_meanfield", "eps0")
TOP_LEVEL_KEYS = INT_KEYS + FLOAT_KEYS + ("noise",)
REQUIRED_KEYS = ("n_agents", "alpha0", "gamma", "tau_end", "seed")
SECTION_KEYS = ("weight", "p", "q", "w_dist")
SECTIONS = ("stubborn", "flexible")

_NUMBER = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
_POINT_RE = re.compile(rf"^point\(\s*{_NUMBER}\s*\)$")
_UNIFORM_RE = re.compile(rf"^uniform\(\s*{_NUMBER}\s*,\s*{_NUMBER}\s*\)$")
_SECTION_RE = re.compile(r"^\[\s*(\w+)\s*\]$")
_COMPLEMENT = "1-q"


@dataclass
class _Block:
    kind: str
    line: int
    values: Dict[str, str] = field(default_factory=dict)
    lines: Dict[str, int] = field(default_factory=dict)


def _parse_float(raw: str, key: str, line: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigParseError(f"invalid number for {key}: {raw!r}", line=line, field=key)


def _parse_int(raw: str, key: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigParseError(f"invalid integer for {key}: {raw!r}", line=line, field=key)


def parse_opinion_dist(raw: str, line: Optional[int] = None) -> OpinionDist:
    """Parse `point(a)` or `uniform(a, b)`."""
    text = raw.strip().lower()
    try:
        match = _POINT_RE.match(text)
        if match:
            return OpinionDist.point(float(match.group(1)))
        match = _UNIFORM_RE.match(text)
        if match:
            return OpinionDist.uniform(float(match.group(1)), float(match.group(2)))
    except ScenarioError as exc:
        raise ConfigParseError(exc.message, line=line, field="w_dist")
    raise ConfigParseError(f"w_dist must be point(a) or uniform(a,b), got {raw!r}", line=line, field="w_dist")


def _tokenize(text: str) -> Tuple[Dict[str, str], Dict[str, int], List[_Block]]:
    top: Dict[str, str] = {}
    top_lines: Dict[str, int] = {}
    blocks: List[_Block] = []
    current: Optional[_Block] = None

    for number, raw_line in enumerate(text.splitlines(), start=1):
        content = raw_line.split("#", 1)[0].strip()
        if not content:
            continue

        section = _SECTION_RE.match(content)
        if section:
            kind = section.group(1).lower()
            if kind not in SECTIONS:
                raise ConfigParseError(f"unknown section [{kind}]", line=number)
            current = _Block(kind=kind, line=number)
            blocks.append(current)
            continue

        if "=" not in content:
            raise ConfigParseError(f"expected 'key = value', got {content!r}", line=number)
        key, value = (part.strip() for part in content.split("=", 1))
        key = key.lower()

        if current is None:
            if key not in TOP_LEVEL_KEYS:
                raise ConfigParseError(f"unknown key {key!r}", line=number, field=key)
            if key in top:
                raise ConfigParseError(f"duplicate key {key!r}", line=number, field=key)
            top[key] = value
            top_lines[key] = number
        else:
            if key not in SECTION_KEYS:
                raise ConfigParseError(f"unknown key {key!r} in [{current.kind}]", line=number, field=key)
            if key in current.values:
                raise ConfigParseError(f"duplicate key {key!r} in [{current.kind}]", line=number, field=key)
            current.values[key] = value
            current.lines[key] = number

    return top, top_lines, blocks


def _stubborn_group(block: _Block) -> GroupSpec:
    for key in ("weight", "p", "w_dist"):
        if key not in block.values:
            raise ConfigParseError(f"missing required key in [stubborn]: {key}", line=block.line, field=key)
    q_raw = block.values.get("q", "0")
    q = _parse_float(q_raw, "q", block.lines.get("q", block.line))
    if q != 0.0:
        raise ConfigParseError(f"stubborn group has q={q}, expected 0", line=block.lines["q"], field="q")
    return GroupSpec(
        weight=_parse_float(block.values["weight"], "weight", block.lines["weight"]),
        p=_parse_float(block.values["p"], "p", block.lines["p"]),
        q=0.0,
        w0=parse_opinion_dist(block.values["w_dist"], block.lines["w_dist"]),
    )


def _flexible_groups(block: _Block, q_bins: int) -> Tuple[List[GroupSpec], Optional[float]]:
    """Groups of one [flexible] block and the q lower bound it declares, if any."""
    for key in ("weight", "p", "q", "w_dist"):
        if key not in block.values:
            raise ConfigParseError(f"missing required key in [flexible]: {key}", line=block.line, field=key)
    weight = _parse_float(block.values["weight"], "weight", block.lines["weight"])
    w0 = parse_opinion_dist(block.values["w_dist"], block.lines["w_dist"])
    p_raw = block.values["p"].replace(" ", "").lower()
    complement = p_raw == _COMPLEMENT
    p = None if complement else _parse_float(block.values["p"], "p", block.lines["p"])

    q_text = block.values["q"].strip().lower()
    q_range = _UNIFORM_RE.match(q_text)
    if q_range:
        q_low, q_high = float(q_range.group(1)), float(q_range.group(2))
        return discretize_q_range(weight, q_low, q_high, q_bins, w0, p=p), q_low

    q = _parse_float(block.values["q"], "q", block.lines["q"])
    return [GroupSpec(weight=weight, p=1.0 - q if complement else p, q=q, w0=w0)], None


def _locate(field_name: Optional[str], top_lines: Dict[str, int], blocks: List[_Block]) -> Optional[int]:
    if field_name in top_lines:
        return top_lines[field_name]
    if field_name == "sigma":
        return top_lines.get("noise", top_lines.get("gamma"))
    for block in blocks:
        if field_name in block.lines:
            return block.lines[field_name]
    return blocks[0].line if blocks else None


def parse_config(text: str) -> ScenarioConfig:
    """
    Parse a line-oriented scenario file into a validated ScenarioConfig.

    Errors carry the offending line number where one exists.
    """
    top, top_lines, blocks = _tokenize(text)
    for key in REQUIRED_KEYS:
        if key not in top:
            raise ConfigParseError(f"missing required key: {key}", field=key)

    values: Dict[str, Union[int, float, NoiseKind]] = {}
    for key in INT_KEYS:
        if key in top:
            values[key] = _parse_int(top[key], key, top_lines[key])
    for key in FLOAT_KEYS:
        if key in top:
            values[key] = _parse_float(top[key], key, top_lines[key])
    if "noise" in top:
        try:
            values["noise"] = NoiseKind(top["noise"].strip().lower())
        except ValueError:
            raise ConfigParseError(
                f"noise must be one of quadratic|linear|sqrtquad, got {top['noise']!r}",
                line=top_lines["noise"],
                field="noise",
            )

    q_bins = int(values.get("flexible_q_bins", ScenarioConfig.flexible_q_bins))
    try:
        stubborn: List[GroupSpec] = []
        flexible: List[GroupSpec] = []
        declared_bounds: List[float] = []
        for block in blocks:
            if block.kind == "stubborn":
                stubborn.append(_stubborn_group(block))
            else:
                groups, bound = _flexible_groups(block, q_bins)
                flexible.extend(groups)
                if bound is not None:
                    declared_bounds.append(bound)

        if "eps0" not in values and declared_bounds:
            values["eps0"] = min(declared_bounds)

        return ScenarioConfig(
            stubborn_groups=tuple(stubborn),
            flexible_groups=tuple(flexible),
            alpha0=values["alpha0"],
            gamma=values["gamma"],
            sigma=values.get("sigma", 0.0),
            noise=values.get("noise", NoiseKind.QUADRATIC),
            n_agents=values["n_agents"],
            tau_end=values["tau_end"],
            seed=values["seed"],
            **{key: values[key] for key in ("record_every", "quantile_points", "dt_meanfield", "flexible_q_bins", "eps0") if key in values},
        )
    except ConfigParseError:
        raise
    except ScenarioError as exc:
        raise ConfigParseError(exc.message, line=_locate(exc.field, top_lines, blocks), field=exc.field)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    logger.info(f"Loaded scenario from {path}")
    return parse_config(text)


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def emit_config(cfg: ScenarioConfig) -> str:
    """Render a config in the scenario format; parse_config(emit_config(cfg)) == cfg."""
    lines = [
        f"n_agents = {cfg.n_agents}",
        f"alpha0 = {_fmt(cfg.alpha0)}",
        f"gamma = {_fmt(cfg.gamma)}",
        f"sigma = {_fmt(cfg.sigma)}",
        f"noise = {cfg.noise.value}",
        f"tau_end = {_fmt(cfg.tau_end)}",
        f"record_every = {_fmt(cfg.record_every)}",
        f"seed = {cfg.seed}",
        f"quantile_points = {cfg.quantile_points}",
        f"dt_meanfield = {_fmt(cfg.dt_meanfield)}",
        f"flexible_q_bins = {cfg.flexible_q_bins}",
    ]
    if cfg.eps0 is not None:
        lines.append(f"eps0 = {_fmt(cfg.eps0)}")

    for group in cfg.stubborn_groups:
        lines += ["", "[stubborn]", f"weight = {_fmt(group.weight)}", f"p = {_fmt(group.p)}", f"w_dist = {group.w0}"]
    for group in cfg.flexible_groups:
        lines += [
            "",
            "[flexible]",
            f"weight = {_fmt(group.weight)}",
            f"p = {_fmt(group.p)}",
            f"q = {_fmt(group.q)}",
            f"w_dist = {group.w0}",
        ]
    return "\n".join(lines) + "\n"
