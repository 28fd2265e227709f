"""Dictionary-backed stand-in for an NER bridge process.

Speaks the tagforge-bridge line protocol on stdin/stdout. Entities come from
a JSON lexicon {LABEL: [phrases]}; offsets are UTF-8 byte offsets. Flags make
it misbehave for tests.
"""

import argparse
import json
import re
import sys

LABELS = ["PERSON", "NORP", "FAC", "ORG", "GPE", "LOC", "PRODUCT", "EVENT", "WORK_OF_ART", "LAW",
          "LANGUAGE", "DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL"]


def find_entities(text, lexicon):
    found = []
    for label, phrases in lexicon.items():
        for phrase in phrases:
            for m in re.finditer(r"(?<!\w)" + re.escape(phrase) + r"(?!\w)", text):
                found.append((m.start(), m.end(), label))
    # Longest match wins at each start; no overlaps, like a span-producing model.
    found.sort(key=lambda e: (e[0], -(e[1] - e[0]), e[2]))
    out, last = [], 0
    for start, end, label in found:
        if start >= last:
            out.append((start, end, label))
            last = end
    return out


def byte_offset(text, char_index):
    return len(text[:char_index].encode("utf-8"))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lexicon", required=True)
    ap.add_argument("--protocol", default="tagforge-bridge")
    ap.add_argument("--version", type=int, default=1)
    ap.add_argument("--exit-after", type=int, default=-1, help="exit after this many replies")
    ap.add_argument("--wrong-id", action="store_true")
    ap.add_argument("--char-offsets", action="store_true", help="report code point offsets (a bridge bug)")
    ap.add_argument("--extra-label", default="", help="also tag every 'the' with this label")
    args = ap.parse_args()

    with open(args.lexicon, encoding="utf-8") as f:
        lexicon = json.load(f)
    if args.extra_label:
        lexicon.setdefault(args.extra_label, []).append("the")

    out = sys.stdout
    out.write(json.dumps({"protocol": args.protocol, "version": args.version, "labels": LABELS}) + "\n")
    out.flush()
    served = 0
    for line in sys.stdin:
        if served == args.exit_after:
            return 0
        try:
            req = json.loads(line)
            text = req["text"]
            ents = []
            for start, end, label in find_entities(text, lexicon):
                if args.char_offsets:
                    ents.append({"label": label, "start": start, "end": end})
                else:
                    ents.append({"label": label, "start": byte_offset(text, start), "end": byte_offset(text, end)})
            rid = req["id"] + "x" if args.wrong_id else req["id"]
            reply = {"id": rid, "entities": ents}
        except (ValueError, KeyError, TypeError) as e:
            reply = {"id": None, "error": str(e)}
        out.write(json.dumps(reply, ensure_ascii=False) + "\n")
        out.flush()
        served += 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
