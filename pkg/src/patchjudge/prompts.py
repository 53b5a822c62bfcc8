"""Render assessment prompts for buggy/fixed code pairs."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .corpus import PatchSample
from .parsing import is_wellformed, parse

DEFAULT_TEMPLATE_ID = "template_v1"

# Section headings, in render order.
SECTION_TASK = "## Task"
SECTION_REQUIREMENTS = "## Analysis requirements"
SECTION_FORMAT = "## Output format"
SECTION_EXAMPLE = "## Solved example"
SECTION_PATCH = "## Patch to assess"
SECTION_BEGIN = "## Begin"
SECTIONS = (SECTION_TASK, SECTION_REQUIREMENTS, SECTION_FORMAT, SECTION_EXAMPLE, SECTION_PATCH, SECTION_BEGIN)

CODE_LANGUAGE = "java"

_BACKTICK_RUN = re.compile(r"`+")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class ExemplarShot:
    buggy_code: str
    fixed_code: str
    ideal_response: str


@dataclass(frozen=True)
class PromptTemplate:
    task_framing: str
    analysis_requirements: Sequence[str]
    output_format_spec: str
    exemplar: ExemplarShot
    reasoning_trigger: str
    id: str = DEFAULT_TEMPLATE_ID

    def __post_init__(self):
        object.__setattr__(self, "analysis_requirements", tuple(self.analysis_requirements))
        validate_template(self)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task_framing": self.task_framing,
            "analysis_requirements": list(self.analysis_requirements),
            "output_format_spec": self.output_format_spec,
            "exemplar": {
                "buggy_code": self.exemplar.buggy_code,
                "fixed_code": self.exemplar.fixed_code,
                "ideal_response": self.exemplar.ideal_response,
            },
            "reasoning_trigger": self.reasoning_trigger,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptTemplate":
        try:
            ex = d["exemplar"]
            return cls(
                id=d.get("id", DEFAULT_TEMPLATE_ID),
                task_framing=d["task_framing"],
                analysis_requirements=d["analysis_requirements"],
                output_format_spec=d["output_format_spec"],
                exemplar=ExemplarShot(ex["buggy_code"], ex["fixed_code"], ex["ideal_response"]),
                reasoning_trigger=d["reasoning_trigger"],
            )
        except (KeyError, TypeError) as exc:
            raise TemplateError(f"template is missing field {exc}") from None


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    sample_id: str
    template_id: str = field(default=DEFAULT_TEMPLATE_ID)


def validate_template(t: PromptTemplate) -> None:
    for tag in ("<think>", "</think>", "<answer>", "</answer>"):
        if tag not in t.output_format_spec:
            raise TemplateError(f"output_format_spec must mention the literal tag {tag}")
    if not t.analysis_requirements:
        raise TemplateError("analysis_requirements must not be empty")
    if not is_wellformed(parse(t.exemplar.ideal_response)):
        raise TemplateError("exemplar ideal_response is not a well-formed response")


def load_template(path: str | Path) -> PromptTemplate:
    return PromptTemplate.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_template() -> PromptTemplate:
    text = resources.files("patchjudge").joinpath("templates", f"{DEFAULT_TEMPLATE_ID}.json").read_text("utf-8")
    return PromptTemplate.from_dict(json.loads(text))


def fence(code: str, language: str = CODE_LANGUAGE) -> str:
    """Wrap code in a backtick fence longer than any backtick run inside it."""
    longest = max((len(m) for m in _BACKTICK_RUN.findall(code)), default=0)
    marker = "`" * max(3, longest + 1)
    return f"{marker}{language}\n{code}\n{marker}"


def _code_pair(buggy: str, fixed: str) -> str:
    return f"### Buggy code\n{fence(buggy)}\n\n### Fixed code\n{fence(fixed)}"


def build_prompt(sample: PatchSample, template: PromptTemplate) -> RenderedPrompt:
    requirements = "\n".join(f"{i}. {r}" for i, r in enumerate(template.analysis_requirements, start=1))
    ex = template.exemplar
    parts = [
        f"{SECTION_TASK}\n{template.task_framing}",
        f"{SECTION_REQUIREMENTS}\n{requirements}",
        f"{SECTION_FORMAT}\n{template.output_format_spec}",
        f"{SECTION_EXAMPLE}\n{_code_pair(ex.buggy_code, ex.fixed_code)}\n\n### Response\n{ex.ideal_response}",
        f"{SECTION_PATCH}\n{_code_pair(sample.buggy_code, sample.fixed_code)}",
        f"{SECTION_BEGIN}\n{template.reasoning_trigger}",
    ]
    return RenderedPrompt(text="\n\n".join(parts) + "\n", sample_id=sample.id, template_id=template.id)
