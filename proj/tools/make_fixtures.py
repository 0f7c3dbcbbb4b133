#!/usr/bin/env python3
"""Author the shipped replay fixtures for the four Sean vignettes.

Each vignette gets a scripted LM (one translation, one sketch, twenty code
completions, a canonicalization answer and score rules). The medmsa binary
then runs in record mode against that script, which writes data/fixtures.
Afterwards `medmsa run --backend replay` reproduces the same runs offline.

Usage: tools/make_fixtures.py --medmsa build/medmsa [--out data/fixtures]
"""

import argparse
import json
import random
import re
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
K = 20
SEED = 7

# label -> base prior and symptom likelihoods (chest pain, lightheaded, chest noise)
CATALOG = {
    "heart_attack": (0.03, 0.9, 0.6, 0.02),
    "myocardial_infarction": (0.03, 0.9, 0.6, 0.02),
    "angina": (0.05, 0.85, 0.35, 0.02),
    "panic_attack": (0.08, 0.6, 0.55, 0.06),
    "anxiety_attack": (0.07, 0.55, 0.5, 0.06),
    "anxiety_disorder": (0.06, 0.4, 0.45, 0.02),
    "muscle_strain": (0.12, 0.7, 0.15, 0.2),
    "acid_reflux": (0.12, 0.5, 0.05, 0.02),
    "gerd": (0.1, 0.5, 0.05, 0.02),
    "costochondritis": (0.06, 0.8, 0.15, 0.3),
    "dehydration": (0.1, 0.15, 0.6, 0.01),
    "arrhythmia": (0.04, 0.35, 0.7, 0.03),
    "pericarditis": (0.02, 0.8, 0.3, 0.3),
    "pulmonary_embolism": (0.01, 0.7, 0.5, 0.02),
    "aortic_dissection": (0.005, 0.9, 0.5, 0.01),
    "heart_failure": (0.03, 0.4, 0.5, 0.03),
    "exercise_induced_asthma": (0.06, 0.5, 0.3, 0.08),
    "hypertrophic_cardiomyopathy": (0.005, 0.6, 0.7, 0.02),
    "rib_injury": (0.05, 0.8, 0.2, 0.5),
    "precordial_catch": (0.06, 0.85, 0.15, 0.3),
    "slipping_rib_syndrome": (0.01, 0.7, 0.15, 0.7),
    "pneumothorax": (0.002, 0.85, 0.55, 0.6),
    "collapsed_lung": (0.002, 0.85, 0.55, 0.6),
    "other": (0.1, 0.1, 0.1, 0.05),
}

# Multipliers on the base prior when a risk factor holds.
OLDER = {"heart_attack": 6, "myocardial_infarction": 6, "angina": 4, "heart_failure": 6, "aortic_dissection": 5,
         "arrhythmia": 3, "pulmonary_embolism": 2, "panic_attack": 0.6, "anxiety_attack": 0.6,
         "exercise_induced_asthma": 0.3}
SEDENTARY = {"heart_attack": 2.5, "myocardial_infarction": 2.5, "angina": 2, "heart_failure": 2,
             "muscle_strain": 0.5}
TEEN = {"heart_attack": 0.05, "myocardial_infarction": 0.05, "angina": 0.1, "heart_failure": 0.1,
        "aortic_dissection": 0.1, "panic_attack": 2, "anxiety_attack": 2, "anxiety_disorder": 1.5,
        "precordial_catch": 4, "pneumothorax": 3, "collapsed_lung": 3, "exercise_induced_asthma": 2}
ATHLETE = {"muscle_strain": 2.5, "rib_injury": 3, "costochondritis": 1.5, "dehydration": 2,
           "exercise_induced_asthma": 2, "hypertrophic_cardiomyopathy": 3, "heart_attack": 0.5,
           "myocardial_infarction": 0.5, "slipping_rib_syndrome": 2}

BASE_SENTENCES = ["Sean has chest pain.", "He also feels lightheaded."]
VIGNETTES = {
    1: BASE_SENTENCES,
    2: BASE_SENTENCES + ["Sean is over 60 years old.", "Sean does not exercise."],
    3: BASE_SENTENCES + ["Sean is a teenager.", "Sean is an athlete."],
    4: BASE_SENTENCES + ["Sean is a teenager.", "Sean is an athlete.",
                         "Sean has a loud clicking or crunching noise coming from his chest."],
}
CONDITIONS = {
    1: ["has_chest_pain('sean') && feels_lightheaded('sean')"],
    2: ["has_chest_pain('sean') && feels_lightheaded('sean')", "!does_exercise('sean')", "is_over_60('sean')"],
    3: ["has_chest_pain('sean') && feels_lightheaded('sean')", "is_teenager('sean')", "is_athlete('sean')"],
    4: ["has_chest_pain('sean') && feels_lightheaded('sean')", "is_teenager('sean')", "is_athlete('sean')",
        "has_clicking_noise_in_chest('sean')"],
}
FACTORS = {1: [], 2: ["is_over_60", "does_exercise"], 3: ["is_teenager", "is_athlete"],
           4: ["is_teenager", "is_athlete"]}

COMMON = ["angina", "panic_attack", "anxiety_attack", "anxiety_disorder", "muscle_strain", "acid_reflux", "gerd",
          "costochondritis", "dehydration", "arrhythmia", "pericarditis", "pulmonary_embolism"]
POOLS = {
    1: COMMON,
    2: COMMON + ["aortic_dissection", "heart_failure"],
    3: COMMON + ["exercise_induced_asthma", "hypertrophic_cardiomyopathy", "rib_injury", "precordial_catch"],
    4: COMMON + ["exercise_induced_asthma", "rib_injury", "precordial_catch", "slipping_rib_syndrome"],
}

# Compiled-model count and failure mix per vignette; failures sum to K - compiled.
PLAN = {
    1: dict(compiled=9, semantic=2, parse=4, validate=3, budget=1, delimiters=1),
    2: dict(compiled=15, semantic=1, parse=2, validate=1, budget=1, delimiters=0),
    3: dict(compiled=8, semantic=2, parse=4, validate=3, budget=2, delimiters=1),
    4: dict(compiled=10, semantic=2, parse=3, validate=2, budget=2, delimiters=1),
}
PNEUMOTHORAX_MODELS = 4  # of the compiled vignette-4 models

SKETCH_PROSE = {
    1: "The patient reports chest pain and lightheadedness and nothing else is known about him. Both symptoms "
       "are shared by cardiac, anxiety related, musculoskeletal and digestive problems, so the model keeps "
       "several candidates and lets the symptom likelihoods sort them. A heart attack is possible but rare "
       "without any known risk factor.",
    2: "The patient is older and sedentary, and he has chest pain with lightheadedness. Age and lack of "
       "exercise both raise the chance of coronary disease, so heart attack and angina gain prior weight "
       "compared with a younger active patient. Musculoskeletal, digestive and anxiety related causes remain "
       "in the running because they also produce these symptoms.",
    3: "The patient is a teenage athlete with chest pain and lightheadedness. Coronary events are very rare at "
       "this age, while strain from training, dehydration and anxiety are common. Rare cardiac conditions of "
       "young athletes deserve a small prior because they matter clinically.",
    4: "The patient is a teenage athlete with chest pain, lightheadedness and an unusual clicking or crunching "
       "sound from the chest. The sound points toward air or structural problems in the chest wall or lung, "
       "so a collapsed lung and rib problems should be considered despite being uncommon. Heart attack stays "
       "unlikely at this age.",
}


def fmt(x):
    s = f"{x:.4f}".rstrip("0").rstrip(".")
    return s if s else "0"


def translation(v):
    conds = "\n".join(f"condition({c})" for c in CONDITIONS[v])
    return ("<START_LANGUAGE_TO_WEBPPL_CODE>\n// CONDITIONS\n" + conds +
            "\n\n// QUERIES\nis_having_heart_attack('sean')\nhas_ailment('sean')\n<END_LANGUAGE_TO_WEBPPL_CODE>")


def sketch(v):
    factors = FACTORS[v]
    lines = []
    for f in factors:
        lines.append(f"- {f}")
        if f == "does_exercise":
            lines.append("  - depends on: is_over_60")
        if f == "is_athlete":
            lines.append("  - depends on: is_teenager")
    lines.append("- has_ailment")
    if factors:
        lines.append("  - depends on: " + ", ".join(factors))
    symptoms = ["has_chest_pain", "feels_lightheaded"] + (["has_clicking_noise_in_chest"] if v == 4 else [])
    for s in symptoms:
        lines.append(f"- {s}\n  - depends on: has_ailment")
    lines.append("- is_having_heart_attack\n  - depends on: has_ailment")
    return SKETCH_PROSE[v] + "\n<START_CONCEPT_TRACE>\n" + "\n".join(lines) + "\n<END_CONCEPT_TRACE>"


class ModelWriter:
    """Builds one plausible MedPPL model for a vignette from randomized choices."""

    def __init__(self, v, rng, labels, heart_label="heart_attack", dead_column=None):
        self.v, self.rng, self.labels, self.heart = v, rng, labels, heart_label
        self.dead_column = dead_column
        self.age_style = rng.random() < 0.4  # latent age via gaussian instead of a flip
        self.symptom_style = rng.choice(["or", "if"])

    def jitter(self, x, spread=0.35):
        return x * (1 + self.rng.uniform(-spread, spread))

    def factor_defs(self):
        r, out = self.rng, []
        if self.v == 2:
            if self.age_style:
                out.append("  var age = mem(function(patient){\n"
                           f"    return gaussian({fmt(round(r.uniform(48, 56)))}, {fmt(round(r.uniform(14, 18)))})\n  }})\n")
                out.append("  var is_over_60 = mem(function(patient){\n    return age(patient) > 60\n  })\n")
            else:
                out.append(f"  var is_over_60 = mem(function(patient){{\n    return flip({fmt(round(r.uniform(0.2, 0.35), 2))})\n  }})\n")
            out.append("  var does_exercise = mem(function(patient){\n"
                       f"    return is_over_60(patient) ? flip({fmt(round(r.uniform(0.25, 0.4), 2))}) : "
                       f"flip({fmt(round(r.uniform(0.45, 0.6), 2))})\n  }})\n")
        elif self.v in (3, 4):
            if self.age_style:
                out.append("  var age = mem(function(patient){\n"
                           f"    return gaussian({fmt(round(r.uniform(18, 22)))}, {fmt(round(r.uniform(6, 8)))})\n  }})\n")
                out.append("  var is_teenager = mem(function(patient){\n"
                           "    return age(patient) >= 13 && age(patient) < 20\n  })\n")
            else:
                out.append(f"  var is_teenager = mem(function(patient){{\n    return flip({fmt(round(r.uniform(0.45, 0.6), 2))})\n  }})\n")
            out.append("  var is_athlete = mem(function(patient){\n"
                       f"    return is_teenager(patient) ? flip({fmt(round(r.uniform(0.5, 0.65), 2))}) : "
                       f"flip({fmt(round(r.uniform(0.15, 0.3), 2))})\n  }})\n")
        return "".join(out)

    def prior_expr(self, label):
        base = CATALOG[label][0]
        expr = fmt(round(self.jitter(base), 4))
        parts = [expr]
        key = "heart_attack" if label == self.heart else label
        if self.v == 2:
            if key in OLDER:
                parts.append(f"(is_over_60(patient) ? {fmt(round(self.jitter(OLDER[key], 0.2), 2))} : 1)")
            if key in SEDENTARY:
                parts.append(f"(does_exercise(patient) ? 1 : {fmt(round(self.jitter(SEDENTARY[key], 0.2), 2))})")
        if self.v in (3, 4):
            if key in TEEN:
                parts.append(f"(is_teenager(patient) ? {fmt(round(self.jitter(TEEN[key], 0.2), 3))} : 1)")
            if key in ATHLETE:
                parts.append(f"(is_athlete(patient) ? {fmt(round(self.jitter(ATHLETE[key], 0.2), 2))} : 1)")
        return " * ".join(parts)

    def ailment_def(self):
        labels = ", ".join(f"'{l}'" for l in self.labels)
        lines = [f"    var labels = [{labels}];"]
        names = []
        for l in self.labels:
            name = f"{l}_prior"
            names.append(name)
            lines.append(f"    var {name} = {self.prior_expr(l)};")
        lines.append(f"    return categorical({{ps: [{', '.join(names)}], vs: labels}});")
        return "  var has_ailment = mem(function(patient){\n" + "\n".join(lines) + "\n  })\n"

    def likelihood(self, label, column):
        if column == self.dead_column:
            return 0
        p = CATALOG["heart_attack" if label == self.heart else label][column]
        return min(0.97, max(0.01, round(self.jitter(p, 0.25), 2)))

    def symptom_def(self, name, column, leak):
        if self.symptom_style == "or":
            terms = [f"((ailment == '{l}') && flip({fmt(self.likelihood(l, column))}))" for l in self.labels]
            body = "    var ailment = has_ailment(patient);\n    return " + " ||\n           ".join(terms)
            if leak:
                body += f" ||\n           flip({fmt(leak)})"
            return f"  var {name} = mem(function(patient){{\n{body};\n  }})\n"
        # if/else chain grouped by rounded likelihood
        groups = {}
        for l in self.labels:
            groups.setdefault(self.likelihood(l, column), []).append(l)
        items = sorted(groups.items(), reverse=True)
        lines = ["    var ailment = has_ailment(patient);"]
        for i, (p, ls) in enumerate(items):
            test = f"ailment == '{ls[0]}'" if len(ls) == 1 else "[" + ", ".join(f"'{l}'" for l in ls) + "].includes(ailment)"
            kw = "if" if i == 0 else "} else if"
            lines.append(f"    {kw} ({test}) {{\n      return flip({fmt(p)})")
        lines.append(f"    }} else {{\n      return flip({fmt(0.02 if leak is None else leak)})\n    }}")
        return f"  var {name} = mem(function(patient){{\n" + "\n".join(lines) + "\n  })\n"

    def write(self, conditions=None, comment_condition=None):
        parts = ["var model = function(){\n  // BACKGROUND KNOWLEDGE\n", self.factor_defs(), "\n", self.ailment_def(), "\n"]
        leak = round(self.rng.uniform(0.0, 0.03), 2)
        parts.append(self.symptom_def("has_chest_pain", 1, leak))
        parts.append("\n" + self.symptom_def("feels_lightheaded", 2, 0 if self.dead_column == 2 else leak))
        if self.v == 4:
            parts.append("\n" + self.symptom_def("has_clicking_noise_in_chest", 3, 0.08))
        parts.append(f"\n  var is_having_heart_attack = function(patient){{\n"
                     f"    return has_ailment(patient) == '{self.heart}'\n  }}\n\n")
        for i, c in enumerate(conditions or CONDITIONS[self.v]):
            prefix = "// " if i == comment_condition else ""
            parts.append(f"  {prefix}condition({c})\n")
        parts.append("\n  return {\n    query1: is_having_heart_attack('sean'),\n    query2: has_ailment('sean')\n  }\n}\n")
        parts.append('\nvar posterior = Infer({model: model, method: "rejection", samples: 5000});\nviz(posterior);\n')
        return "".join(parts)


def pick_labels(v, rng, must=()):
    pool = [l for l in POOLS[v] if l not in must]
    n = rng.randint(4, 7) - len(must)
    chosen = list(must) + rng.sample(pool, max(n, 1))
    # drop exact synonyms chosen together in the same model
    if "gerd" in chosen and "acid_reflux" in chosen:
        chosen.remove("gerd")
    heart = "myocardial_infarction" if rng.random() < 0.15 else "heart_attack"
    labels = [heart] + chosen
    if rng.random() < 0.6:
        labels.append("other")
    return labels, heart


def good_model(v, rng, must=(), comment_condition=None, dead_column=None):
    labels, heart = pick_labels(v, rng, must)
    return ModelWriter(v, rng, labels, heart, dead_column).write(comment_condition=comment_condition)


# Failure makers take a valid model source and break it in a realistic way.
def parse_breakers():
    return [
        lambda s: s.replace("var is_having_heart_attack = function(patient){",
                            "var is_having_heart_attack = (patient) => {"),
        lambda s: s.replace("    var ailment = has_ailment(patient);", "    let ailment = has_ailment(patient);", 1),
        lambda s: s.replace("var posterior", "var best = Math.max(0.2, 0.3)\nvar posterior"),
        lambda s: s[: s.index("  var is_having_heart_attack")],  # cut off mid-program
    ]


def validate_breakers():
    return [
        lambda s: s.replace("categorical({ps: [", "categorical([").replace("], vs: labels})", "], labels)"),
        lambda s: s.replace(",\n    query2: has_ailment('sean')", ""),
        lambda s: s.replace("return categorical({ps:", "return categorical({probs:"),
    ]


def semantic_breakers():
    return [
        lambda s: s.replace("    return categorical({ps:", "    return 'healthy'\n    return categorical({ps:"),
        lambda s: s.replace("var labels = ['", "var labels = ['broken_arm', '").replace("categorical({ps: [", "categorical({ps: [0.5, "),
    ]


def build_script(v):
    rng = random.Random(1000 + v)
    plan = PLAN[v]
    slots = []
    must_pneumo = [("pneumothorax",), ("pneumothorax",), ("pneumothorax",), ("collapsed_lung", "pneumothorax")] if v == 4 else []
    for i in range(plan["compiled"]):
        must = must_pneumo[i] if i < len(must_pneumo) else ()
        comment = 1 if (i == 2 and len(CONDITIONS[v]) > 1) or (i == 5 and v == 1) else None
        if v == 1 and comment is not None:
            # Single condition vignette: split the joint observation so one part can be commented out.
            labels, heart = pick_labels(v, rng)
            src = ModelWriter(v, rng, labels, heart).write(
                conditions=["has_chest_pain('sean')", "feels_lightheaded('sean')"], comment_condition=1)
            slots.append(src)
            continue
        slots.append(good_model(v, rng, must, comment))
    if v == 2:
        slots[0] = (ROOT / "tests/data/programs/sean_v2_discrete.medppl").read_text()

    failures = []
    for b in rng.sample(semantic_breakers() * 2, plan["semantic"]):
        failures.append(b(good_model(v, rng)))
    pb = parse_breakers()
    for i in range(plan["parse"]):
        failures.append(pb[i % len(pb)](good_model(v, rng)))
    vb = validate_breakers()
    for i in range(plan["validate"]):
        failures.append(vb[i % len(vb)](good_model(v, rng)))
    for _ in range(plan["budget"]):
        # lightheadedness made impossible, so the observations never hold
        failures.append(good_model(v, rng, dead_column=2))
    raw_failures = []
    for _ in range(plan["delimiters"]):
        raw_failures.append("Here is the model.\n\n```\n" + good_model(v, rng) + "```\n")

    code = ["<START_WEBPPL_MODEL>\n" + s + "<END_WEBPPL_MODEL>" for s in slots + failures] + raw_failures
    assert len(code) == K, (v, len(code))
    rng.shuffle(code)

    synonyms = {"myocardial infarction": "heart attack", "gerd": "acid reflux", "collapsed lung": "pneumothorax"}
    labels = set()
    for c in code:
        for l in re.findall(r"'([a-z_]+)'", c):
            labels.add(l.replace("_", " "))
    canon = {l: synonyms.get(l, l) for l in sorted(labels)}

    return {
        "id": f"sean-{v}",
        "responses": {"translate": [translation(v)], "sketch": [sketch(v)], "code": code,
                      "canonicalize": [json.dumps(canon, indent=1)]},
        "score": {"rules": [{"match": "return 'healthy'", "text": "The model ignores the evidence.\nSCORE: 0.05"},
                            {"match": "'broken_arm'", "text": "An arm fracture does not explain these symptoms.\nSCORE: 0.1"}],
                  "default": "The model is a reasonable account of the case.\nSCORE: 0.8"},
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--medmsa", default=str(ROOT / "build/medmsa"))
    ap.add_argument("--out", default=str(ROOT / "data/fixtures"))
    ap.add_argument("--scripts", default=str(ROOT / "data/fixture_scripts"))
    args = ap.parse_args()

    out = Path(args.out)
    if out.exists():
        shutil.rmtree(out)
    scripts = Path(args.scripts)
    scripts.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as runs:
        for v in VIGNETTES:
            script = scripts / f"sean-{v}.json"
            script.write_text(json.dumps(build_script(v), indent=2) + "\n")
            cmd = [args.medmsa, "run", "--vignette", str(ROOT / f"data/vignettes/sean-{v}.json"), "--k", str(K),
                   "--seed", str(SEED), "--backend", "record", "--script", str(script), "--fixtures", str(out),
                   "--out", runs, "--quiet"]
            print("+", " ".join(cmd), file=sys.stderr)
            subprocess.run(cmd, check=True, stdout=subprocess.DEVNULL)
            check_counts(v, Path(runs))


def check_counts(v, runs):
    manifests = sorted(runs.glob("*/manifest.json"), key=lambda p: p.stat().st_mtime)
    m = json.loads(manifests[-1].read_text())
    counts = {}
    for c in m["candidates"]:
        key = {"Compiled": "compiled", "SemanticRejected": "semantic", "ValidateFailed": "validate",
               "BudgetFailed": "budget"}.get(c["status"], "parse")
        if c["status"] == "ParseFailed" and c["failed_stage"] == "code":
            key = "delimiters"
        counts[key] = counts.get(key, 0) + 1
    want = {k: n for k, n in PLAN[v].items() if n}
    status = "ok" if counts == want else "MISMATCH"
    print(f"sean-{v}: {status} {counts}", file=sys.stderr)
    if counts != want:
        sys.exit(1)


if __name__ == "__main__":
    main()
