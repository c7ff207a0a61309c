#!/usr/bin/env python3
"""Regenerates fixtures/kb131: 131 documented changes over four version steps
(57/26/22/26), labelled so that 93 are error-inducing (13 Parser,
14 Declaration, 11 Syntax, 55 Type) and 38 benign (12 JSON, 2 IO, 24 no error).

The paragraph texts are synthetic; only the counts and markup shape matter.
"""

import hashlib
import json
import os

ROOT = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
OUT = os.path.join(ROOT, "fixtures", "kb131")

STEPS = [("0.4", "0.5", 57), ("0.5", "0.6", 26), ("0.6", "0.7", 22), ("0.7", "0.8", 26)]
LABELS = (
    [("error_inducing", "Parser")] * 13
    + [("error_inducing", "Declaration")] * 14
    + [("error_inducing", "Syntax")] * 11
    + [("error_inducing", "Type")] * 55
    + [("benign", "JsonError")] * 12
    + [("benign", "IoError")] * 2
    + [("benign", None)] * 24
)
SUBJECT = {
    "Parser": "the grammar no longer accepts",
    "Declaration": "name resolution now rejects",
    "Syntax": "the syntax checker disallows",
    "Type": "the type checker refuses",
    "JsonError": "the standard JSON interface rejects inputs using",
    "IoError": "import resolution fails for",
    None: "documentation wording was clarified for",
}


def entry_id(src, tgt, text):
    return hashlib.sha256(f"{src}\0{tgt}\0{text}".encode()).hexdigest()[:12]


def main():
    assert len(LABELS) == sum(n for _, _, n in STEPS) == 131
    # Interleave categories across files so every step sees a mix.
    order = sorted(range(131), key=lambda i: (i * 37) % 131)
    labels = [LABELS[i] for i in order]
    os.makedirs(os.path.join(OUT, "html"), exist_ok=True)
    out_labels = {}
    k = 0
    for src, tgt, n in STEPS:
        paras = []
        for _ in range(n):
            kind, cat = labels[k]
            k += 1
            ident = f"change{k:03d}"
            if (src, tgt) == ("0.5", "0.6") and cat == "Type" and "payable" not in "".join(paras):
                text = "Conversions from address to address payable are now possible via payable(x), where x must be of type address."
                html = "Conversions from address to address payable are now possible via <code>payable(x)</code>, where x must be of type address."
            else:
                text = f"Change {k} from {src} to {tgt}: {SUBJECT[cat]} code such as {ident}(value) in contract members."
                html = f"Change {k} from {src} to {tgt}: {SUBJECT[cat]} code such as <code>{ident}(value)</code> in contract members."
            paras.append(f"<p>{html}</p>")
            out_labels[entry_id(src, tgt, text)] = {"label": kind, "category": cat}
        body = "\n".join(paras)
        doc = (
            "<!DOCTYPE html>\n<html>\n<head><title>Solidity v"
            f"{tgt}.0 Breaking Changes</title></head>\n<body>\n<section>\n<h2>Changes</h2>\n{body}\n</section>\n</body>\n</html>\n"
        )
        with open(os.path.join(OUT, "html", f"{src}-{tgt}.html"), "w") as f:
            f.write(doc)
    assert len(out_labels) == 131
    with open(os.path.join(OUT, "labels.json"), "w") as f:
        json.dump(out_labels, f, indent=1, sort_keys=True)
        f.write("\n")
    print(sum(1 for v in out_labels.values() if v["label"] == "error_inducing"), "error-inducing")


if __name__ == "__main__":
    main()
