#!/usr/bin/env python3
"""Regenerate the bundled 40-question mock fixture.

Writes tests/fixtures/mock40/questions.jsonl and scripted.jsonl. The scripted
behavior matrix is fully deterministic; rerunning this script reproduces the
fixture byte-identically. Run from the repository root:

    python tools/gen_mock_fixture.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from hintkit.core import Hint, QuestionRecord, check_leakage  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
OUT_DIR = ROOT / "tests" / "fixtures" / "mock40"

TARGETS = ["alpha-vlm", "beta-vlm", "gamma-vlm"]

# question text, options, gold index, rationale
QUESTIONS = [
    ("What animal is lying on the sofa?", ["a tabby cat", "a small dog", "a rabbit", "a raccoon"], 0,
     "The striped fur and pointed ears identify a tabby cat."),
    ("How many mugs are on the kitchen counter?", ["two", "three", "four", "five"], 1,
     "Three mugs sit beside the coffee maker."),
    ("What color is the front door of the house?", ["red", "blue", "green", "black"], 2,
     "The door is painted a dark green."),
    ("What does the street sign say?", ["STOP", "YIELD", "ONE WAY", "NO PARKING"], 3,
     "The rectangular white sign reads NO PARKING."),
    ("What sport are the children playing?", ["soccer", "baseball", "basketball", "tennis"], 0,
     "A round ball and goal posts indicate soccer."),
    ("Which fruit fills the wooden bowl?", ["apples", "oranges", "pears", "peaches"], 1,
     "The fruit is round with dimpled orange peel."),
    ("Where is the bicycle parked?", ["by the fence", "on the porch", "in the garage", "near the fountain"], 0,
     "The bicycle leans against the wooden fence."),
    ("What is the man at the counter holding?", ["a newspaper", "a coffee cup", "a phone", "a sandwich"], 1,
     "He grips a steaming cup with both hands."),
    ("How many people are waiting at the bus stop?", ["one", "two", "three", "four"], 2,
     "Three commuters stand under the shelter."),
    ("What time does the station clock show?", ["6:15", "9:40", "12:05", "3:30"], 1,
     "The hands point to twenty to ten."),
    ("What is parked next to the fire hydrant?", ["a scooter", "a delivery van", "a taxi", "a pickup truck"], 1,
     "A white delivery van stands beside the hydrant."),
    ("Which room is shown in the photo?", ["a kitchen", "a bathroom", "a bedroom", "an office"], 3,
     "A desk, monitor, and bookshelves fill the room."),
    ("What is the weather like in the scene?", ["sunny", "rainy", "snowy", "foggy"], 1,
     "Umbrellas and wet pavement show rain."),
    ("What pattern is on the tablecloth?", ["stripes", "polka dots", "checkered", "plain"], 2,
     "The cloth has a red and white checkered pattern."),
    ("What instrument is the busker playing?", ["a guitar", "a violin", "an accordion", "a trumpet"], 0,
     "He strums a six-string acoustic guitar."),
    ("What is written on the chalkboard menu?", ["soup of the day", "fresh lemonade", "half price books", "live music tonight"], 1,
     "The board advertises fresh lemonade."),
    ("How many windows are on the barn's front wall?", ["one", "two", "three", "four"], 1,
     "Two square windows flank the barn door."),
    ("What is the woman in the park doing?", ["jogging", "reading", "painting", "stretching"], 2,
     "She holds a brush before an easel."),
    ("Which vehicle is closest to the camera?", ["a motorcycle", "a bus", "a car", "a tractor"], 0,
     "A motorcycle occupies the foreground."),
    ("What covers the mountain peak?", ["snow", "trees", "clouds", "rocks"], 0,
     "The summit is white with snow."),
    ("What is on the plate beside the fork?", ["pancakes", "a salad", "spaghetti", "toast"], 0,
     "A stack of pancakes with syrup sits on the plate."),
    ("What shape is the swimming pool?", ["rectangular", "oval", "kidney-shaped", "circular"], 2,
     "The pool curves in a kidney shape."),
    ("Who is wearing a helmet?", ["the cyclist", "the pedestrian", "the driver", "the vendor"], 0,
     "Only the cyclist wears a helmet."),
    ("What hangs above the fireplace?", ["a mirror", "a painting", "a clock", "antlers"], 1,
     "A framed landscape painting hangs there."),
    ("How many boats are on the lake?", ["one", "two", "three", "four"], 1,
     "Two sailboats drift near the shore."),
    ("What is the dog chasing?", ["a ball", "a frisbee", "a squirrel", "its tail"], 1,
     "A yellow frisbee flies ahead of the dog."),
    ("Which direction does the arrow on the sign point?", ["left", "right", "up", "down"], 0,
     "The black arrow points to the left."),
    ("What is stacked beside the cash register?", ["receipts", "coupons", "gift cards", "napkins"], 2,
     "A rack of gift cards stands next to the register."),
    ("What kind of tree shades the bench?", ["an oak", "a palm", "a pine", "a willow"], 3,
     "Long drooping branches identify a willow."),
    ("What is the child drawing with?", ["crayons", "markers", "chalk", "pencils"], 2,
     "Colored chalk marks cover the sidewalk."),
    ("What is the cashier handing to the customer?", ["change", "a receipt", "a bag", "a sample"], 1,
     "A thin slip of paper passes between them."),
    ("How many candles are on the cake?", ["five", "six", "seven", "eight"], 2,
     "Seven lit candles circle the frosting."),
    ("What is reflected in the shop window?", ["a streetlamp", "a passing bus", "the photographer", "a bicycle"], 1,
     "The red side of a bus crosses the glass."),
    ("Which kitchen appliance is open?", ["the oven", "the fridge", "the microwave", "the dishwasher"], 1,
     "The fridge door stands ajar."),
    ("What is the team's jersey color?", ["maroon", "navy", "teal", "gold"], 3,
     "Players wear bright gold jerseys."),
    ("What blocks the sidewalk?", ["a fallen branch", "a moving box", "a sandwich board", "a parked scooter"], 2,
     "A sandwich board advertising lunch blocks the path."),
    ("What fills the glass jar on the shelf?", ["buttons", "marbles", "coins", "seashells"], 1,
     "The jar glints with colored glass marbles."),
    ("What is the farmer loading onto the cart?", ["hay bales", "crates of corn", "milk cans", "firewood"], 0,
     "Rectangular hay bales stack the flatbed."),
    ("Which hand does the statue raise?", ["the left hand", "the right hand", "both hands", "neither hand"], 1,
     "The bronze figure lifts its right arm."),
    ("What number is painted on the race car?", ["7", "12", "23", "48"], 2,
     "A large 23 covers the door panel."),
]

assert len(QUESTIONS) == 40

QIDS = [f"q{i + 1:03d}" for i in range(40)]

# label-level base-incorrect sets (all three trials wrong)
WRONG = {
    "alpha-vlm": set(QIDS[0:10]),   # q001..q010
    "beta-vlm": set(QIDS[4:12]),    # q005..q012
    "gamma-vlm": set(QIDS[8:14]),   # q009..q014
}
MIXED = {("alpha-vlm", "q015"), ("beta-vlm", "q016")}

# repair success rounds (None = never -> unsuccessful repair)
REPAIR_ROUNDS = {
    "alpha-vlm": {"q001": 1, "q002": 2, "q003": 1, "q004": 3, "q005": None,
                  "q006": 1, "q007": 2, "q008": None, "q009": 1, "q010": 3},
    "beta-vlm": {"q005": 1, "q006": 2, "q007": 1, "q008": 3, "q009": None,
                 "q010": 1, "q011": 2, "q012": 1},
    "gamma-vlm": {"q009": 1, "q010": 2, "q011": None, "q012": 1, "q013": 1, "q014": 2},
}
# reinforcement success rounds; None = never -> discard
REINFORCEMENT_SPECIALS = {
    ("alpha-vlm", "q020"): 2,
    ("beta-vlm", "q021"): None,
    ("gamma-vlm", "q022"): 3,
}

# evaluation-time outcomes: which base-wrong questions each strategy repairs,
# and which base-correct questions it harms
EVAL_PLAN = {
    "alpha-vlm": {
        "cot": ({"q001", "q002"}, {"q030"}),
        "self_refine": ({"q001", "q003"}, set()),
        "external_judge": ({"q001", "q002", "q003", "q004"}, {"q031"}),
        "hinted": ({"q001", "q002", "q003", "q004", "q006", "q007", "q009", "q010"}, {"q032"}),
        "categorical": ({"q001"}, {"q030"}),
        "taxonomy": (set(), {"q031"}),
    },
    "beta-vlm": {
        "cot": ({"q005"}, {"q033", "q034"}),
        "self_refine": ({"q005", "q006", "q007"}, {"q033"}),
        "external_judge": ({"q005", "q006", "q007", "q008"}, set()),
        "hinted": ({"q005", "q006", "q007", "q008", "q010", "q011", "q012"}, set()),
        "categorical": ({"q005"}, set()),
        "taxonomy": (set(), {"q031"}),
    },
    "gamma-vlm": {
        "cot": (set(), {"q035"}),
        "self_refine": ({"q009"}, {"q036", "q037"}),
        "external_judge": ({"q009", "q010", "q012"}, {"q035"}),
        "hinted": ({"q009", "q010", "q012", "q013", "q014"}, set()),
        "categorical": ({"q009"}, set()),
        "taxonomy": (set(), set()),
    },
}

# annotator failure modes per question (applies to every wrong target unless
# overridden per target below)
ANNOTATION_MODES = {
    "q001": "recognition", "q002": "counting", "q003": "attribute_binding",
    "q004": "ocr", "q005": "recognition", "q006": "attribute_binding",
    "q007": "spatial_relation", "q008": "knowledge", "q009": "counting",
    "q010": "chart_table", "q011": "hallucination", "q012": "recognition",
    "q013": "logic_negation", "q014": "attribute_binding",
}
ANNOTATION_OVERRIDES = {
    ("beta-vlm", "q009"): "spatial relation",
    ("gamma-vlm", "q011"): "hallucinated object that is not there",
}

# base-correct pairs whose score behavior is distracted by foreign hints
SCORE_HARM_PRONE = {
    ("alpha-vlm", "q017"), ("beta-vlm", "q018"), ("gamma-vlm", "q019"),
    ("alpha-vlm", "q023"), ("beta-vlm", "q024"), ("gamma-vlm", "q025"),
}

GENERIC_ITEMS = {
    1: ["Most likely vs runner-up: recheck the single detail that separates them",
        "Name what you actually see before committing"],
    2: ["First impression vs closer look: scan the scene edges again",
        "State the key evidence in one phrase"],
    3: ["Option you favor vs the alternative: find one visible feature that rules one out"],
}


def record_for(qid: str) -> QuestionRecord:
    question, options, gold, rationale = QUESTIONS[QIDS.index(qid)]
    return QuestionRecord(
        id=qid, image_ref=f"images/{qid}.png", question=question,
        options=tuple(options), gold_index=gold, rationale=rationale,
    )


def gold(qid: str) -> int:
    return QUESTIONS[QIDS.index(qid)][2]


def wrong_answer(qid: str) -> int:
    q = QUESTIONS[QIDS.index(qid)]
    return (q[2] + 1) % len(q[1])


def themed_items(qid: str, round_no: int) -> list[str]:
    n = QIDS.index(qid) + 1
    flavors = {
        1: f"Likely reading vs the overlooked one: recheck before answering (focus-{qid})",
        2: f"Second angle: compare the two closest options again (focus-{qid})",
        3: f"Final pass: eliminate one option with visible evidence (focus-{qid})",
    }
    extras = {
        0: "Check the foreground before the background",
        1: "Look once more at the most distinctive region",
        2: "Do not rush the final choice",
    }
    return [flavors[round_no], extras[n % 3]]


def hint_for(qid: str, round_no: int) -> list[str]:
    # all-base-correct questions share generic reinforcement hints so the
    # candidate pool stays compact
    if qid not in WRONG["alpha-vlm"] | WRONG["beta-vlm"] | WRONG["gamma-vlm"]:
        return GENERIC_ITEMS[round_no]
    return themed_items(qid, round_no)


def reply(question_id, behavior, *, model=None, answer_index=None, reasoning=None,
          raw=None, when=None, then=None, otherwise=None) -> dict:
    entry: dict = {"question_id": question_id, "behavior": behavior}
    if model is not None:
        entry["model"] = model
    if when is not None:
        entry["when_prompt_contains"] = when
        entry["then_index"] = then
        entry["else_index"] = otherwise
    elif raw is not None:
        entry["raw"] = raw
    else:
        entry["answer_index"] = answer_index
        if reasoning:
            entry["reasoning"] = reasoning
    return entry


def success_round(model: str, qid: str) -> int | None:
    """Verifier success round for the (question, model) optimization, if any runs."""
    if (model, qid) in MIXED:
        return None
    if qid in WRONG[model]:
        return REPAIR_ROUNDS[model][qid]
    return REINFORCEMENT_SPECIALS.get((model, qid), 1)


def selected_round(model: str, qid: str) -> int | None:
    """Round whose hint ends up selected (success round, or 3 for failed repairs)."""
    r = success_round(model, qid)
    if r is not None:
        return r
    if qid in WRONG[model]:
        return 3  # last approved hint of an unsuccessful repair
    return None  # discarded reinforcement


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    records = [record_for(qid) for qid in QIDS]

    with open(OUT_DIR / "questions.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")

    entries: list[dict] = []

    # --- base trials ---
    for qid in QIDS:
        for model in TARGETS:
            base = wrong_answer(qid) if qid in WRONG[model] or (model, qid) in MIXED else gold(qid)
            entries.append(reply(qid, "base", model=model, answer_index=base,
                                 reasoning=f"baseline read of {qid}"))
    # mixed pairs: alpha flips on trial 2; beta q016 is wrong + unparseable
    entries.append(reply("q015", "base", model="alpha-vlm", answer_index=gold("q015")))
    entries.append(reply("q015", "base:2", model="alpha-vlm", answer_index=wrong_answer("q015")))
    entries.append(reply("q016", "base:2", model="beta-vlm", raw="I cannot make out this image clearly."))

    # --- proposer and editor ---
    for qid in QIDS:
        rounds_needed = {1}
        for model in TARGETS:
            r = success_round(model, qid)
            if (model, qid) in MIXED:
                continue
            rounds_needed.update(range(1, (r or 3) + 1))
        for r in sorted(rounds_needed):
            entries.append(reply(qid, f"propose:{r}", raw=json.dumps({"hint": hint_for(qid, r)})))
    entries.append(reply("*", "edit", raw=json.dumps({"verdict": "approve", "hint": [], "feedback": ""})))
    # one exercised revision path: q003 round 1
    revised_q003 = ["Door panel vs trim: compare their shades directly (focus-q003)",
                    "Mind the lighting before judging color"]
    entries.append(reply("q003", "edit:1", raw=json.dumps(
        {"verdict": "revise", "hint": revised_q003, "feedback": "tightened the contrastive item"})))

    # --- verifier rounds ---
    for qid in QIDS:
        for model in TARGETS:
            if (model, qid) in MIXED:
                continue
            r = success_round(model, qid)
            if r is None:
                entries.append(reply(qid, "hinted", model=model, answer_index=wrong_answer(qid)))
            elif r == 1:
                entries.append(reply(qid, "hinted", model=model, answer_index=gold(qid)))
            else:
                for t in range(1, r):
                    entries.append(reply(qid, f"hinted:{t}", model=model, answer_index=wrong_answer(qid)))
                entries.append(reply(qid, "hinted", model=model, answer_index=gold(qid)))

    # --- evaluation strategies ---
    # evaluation-time base correctness is trial 1: the alpha q015 mixed pair
    # opens correct, the beta q016 one opens wrong
    for qid in QIDS:
        for model in TARGETS:
            base_wrong = qid in WRONG[model] or (model, qid) == ("beta-vlm", "q016")
            plan = EVAL_PLAN[model]
            for strategy, behavior in (("cot", "cot"), ("self_refine", "self_refine:2"),
                                       ("external_judge", "external_judge:2"),
                                       ("hinted", "hinted:eval"), ("categorical", "categorical"),
                                       ("taxonomy", "taxonomy")):
                repairs, harms = plan[strategy]
                if base_wrong:
                    answer = gold(qid) if qid in repairs else wrong_answer(qid)
                else:
                    answer = wrong_answer(qid) if qid in harms else gold(qid)
                entries.append(reply(qid, behavior, model=model, answer_index=answer))
    entries.append(reply("*", "external_judge:judge",
                         raw="Re-examine the deciding detail; the favored option may not survive a second look."))

    # --- reward scoring: a hint repairs/keeps iff it carries the question's token ---
    for qid in QIDS:
        for model in TARGETS:
            token = f"focus-{qid}"
            if qid in WRONG[model] or (model, qid) in MIXED:
                entries.append(reply(qid, "score", model=model, when=token,
                                     then=gold(qid), otherwise=wrong_answer(qid)))
            elif (model, qid) in SCORE_HARM_PRONE:
                entries.append(reply(qid, "score", model=model, when=token,
                                     then=gold(qid), otherwise=wrong_answer(qid)))
            else:
                entries.append(reply(qid, "score", model=model, answer_index=gold(qid)))

    # --- annotator ---
    for qid, mode in ANNOTATION_MODES.items():
        entries.append(reply(qid, "annotate", raw=mode))
    for (model, qid), text in ANNOTATION_OVERRIDES.items():
        entries.append(reply(qid, f"annotate:{model}", raw=text))

    with open(OUT_DIR / "scripted.jsonl", "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    # sanity: no fixture hint leaks its question's gold option
    for qid in QIDS:
        record = record_for(qid)
        for r in (1, 2, 3):
            hint = Hint(tuple(hint_for(qid, r)))
            assert not check_leakage(hint, record).leak, (qid, r)

    print(f"wrote {OUT_DIR / 'questions.jsonl'} ({len(records)} questions)")
    print(f"wrote {OUT_DIR / 'scripted.jsonl'} ({len(entries)} entries)")


if __name__ == "__main__":
    main()
