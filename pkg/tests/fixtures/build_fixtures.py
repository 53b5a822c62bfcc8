"""Regenerate the static test fixtures in this directory.

    python tests/fixtures/build_fixtures.py

The 118-sample set keeps the small-corpus class ratio at one tenth scale
(53 correct, 65 overfitting). Its mock script gives every sample a known
response sequence so the resulting report can be computed by hand:

    overfitting o001-o050  answers overfitting          -> tp
    overfitting o051-o060  answers correct              -> fn
    overfitting o061-o065  three malformed replies      -> unresolved
    correct     c001-c040  answers correct              -> tn
    correct     c041-c050  answers overfitting          -> fp
    correct     c051-c053  malformed, then correct      -> tn after a resample
"""

import json
from pathlib import Path

HERE = Path(__file__).parent

SAY_CORRECT = "<think>The change guards the root cause for every input.</think>\n<answer>correct</answer>"
SAY_OVERFITTING = "<think>The new condition only matches the failing test.</think>\n<answer>overfitting</answer>"
MALFORMED = [
    "The patch looks fine to me.",
    "<think>Reasoning without a closing answer block.</think>",
    "<think>Both readings fit.</think><answer>correct fix but buggy</answer>",
]

CODE1_BUGGY = """ratio = y0[j] / scale[j];
yonscale2 += ratio * ratio;
ratio = ydot0[j] / scale[j];
ydotonscale2 += ratio * ratio;
}
double h = ((yonscale2 < 1.0e-10) || (ydotonscale2 < 1.0e-10)) ?
    1.0e-6 : (0.01 * FastMath.sqrt(yonscale2 / ydotonscale2));"""

CODE1_FIXED = """ratio = y0[j] / scale[j];
yonscale2 += ratio * ratio;
ratio = ydot0[j] / scale[j];
if ((scale.length) !=
    (org.apache.commons.math.ode.nonstiff.AdaptiveStepsizeIntegrator.this.maxstep)) {
    ydotonscale2 += ratio * ratio;}
}
double h = ((yonscale2 < 1.0e-10) || (ydotonscale2 < 1.0e-10)) ?
    1.0e-6 : (0.01 * FastMath.sqrt(yonscale2 / ydotonscale2));"""

CODE2_BUGGY = """public Complex add(Complex rhs) throws NullPointerException {
    MathUtils.checkNotNull(rhs);
    return createComplex(real + rhs.getReal(), imaginary +
    rhs.getImaginary());
}"""

CODE2_FIXED = """public Complex add(Complex rhs) throws NullPointerException {
    MathUtils.checkNotNull(rhs);
    if ((isNaN() || rhs.isNaN()) == true) {
        return NaN;
    }
    return createComplex(real + rhs.getReal(), imaginary +
    rhs.getImaginary());
}"""

CODE3_BUGGY = """case '/':
out.write('\\\\');
out.write('\\\\');"""

CODE3_FIXED = """case '/':
if (escapesinglequote) {
out.write('\\\\');
}
out.write('\\\\');"""


def snippet(i: int, fixed: bool) -> str:
    body = f"int v{i} = compute({i});\n"
    if fixed:
        body += f"if (v{i} < 0) {{\n    v{i} = 0;\n}}\n"
    return f"public int method{i}() {{\n{body}return v{i};\n}}"


def record(sid, label, i, tag="fixture", origin="synthetic"):
    return {"id": sid, "buggy": snippet(i, False), "fixed": snippet(i, True), "label": label, "origin": origin, "dataset_tag": tag}


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")


def small_118():
    rows, script = [], {}
    for n in range(1, 66):
        sid = f"o{n:03d}"
        rows.append(record(sid, "overfitting", n, tag="small"))
        if n <= 50:
            script[sid] = [SAY_OVERFITTING]
        elif n <= 60:
            script[sid] = [SAY_CORRECT]
        else:
            script[sid] = list(MALFORMED)
    for n in range(1, 54):
        sid = f"c{n:03d}"
        rows.append(record(sid, "correct", 100 + n, tag="small"))
        if n <= 40:
            script[sid] = [SAY_CORRECT]
        elif n <= 50:
            script[sid] = [SAY_OVERFITTING]
        else:
            script[sid] = [MALFORMED[n % 3], SAY_CORRECT]
    return rows, script


def main():
    six = [record(f"s{i}", "correct" if i % 2 else "overfitting", i) for i in range(6)]
    write_jsonl(HERE / "six.jsonl", six)
    ten = [record(f"t{i:02d}", "overfitting" if i < 6 else "correct", 20 + i) for i in range(10)]
    write_jsonl(HERE / "ten.jsonl", ten)
    rows, script = small_118()
    write_jsonl(HERE / "small_118.jsonl", rows)
    (HERE / "small_118_script.json").write_text(json.dumps(script, indent=2) + "\n", encoding="utf-8")
    examples = [
        {"id": "code1", "buggy": CODE1_BUGGY, "fixed": CODE1_FIXED, "label": "overfitting", "origin": "example", "dataset_tag": "examples"},
        {"id": "code2", "buggy": CODE2_BUGGY, "fixed": CODE2_FIXED, "label": "correct", "origin": "example", "dataset_tag": "examples"},
        {"id": "code3", "buggy": CODE3_BUGGY, "fixed": CODE3_FIXED, "label": "overfitting", "origin": "example", "dataset_tag": "examples"},
    ]
    write_jsonl(HERE / "example_patches.jsonl", examples)
    (HERE / "empty.jsonl").write_text("", encoding="utf-8")


if __name__ == "__main__":
    main()
