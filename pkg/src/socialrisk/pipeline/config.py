"""Pipeline configuration: strict YAML schema, hashing, seed derivation.

Unknown keys anywhere in the file are rejected with their dotted path, so
a misspelled hyperparameter fails the run instead of silently acquiring a
default. Every stage draws its randomness from a seed derived as the
first 8 bytes of sha256("<global-seed>:<stage-name>"), so any stage can be
re-run in isolation and see the same stream the full pipeline would.
"""

import hashlib
import json

import yaml

from ..cohort import GeneratorSpec, calibrate_intercept, default_generator_spec
from ..cohort.types import ContextualFieldSpec
from ..errors import ConfigError

STAGES = (
    "generate",
    "link",
    "preprocess",
    "sample",
    "train",
    "evaluate",
    "explain",
    "causal",
    "fairness",
    "mitigate",
    "report",
)

# link consumes only the generate section; report has presentation knobs
# that never feed back into numbers.
_SECTION_OF_STAGE = {
    "generate": "generate",
    "preprocess": "preprocess",
    "sample": "sample",
    "train": "train",
    "evaluate": "evaluate",
    "explain": "explain",
    "causal": "causal",
    "fairness": "fairness",
    "mitigate": "mitigate",
}

FEATURE_SETS = ("individual", "contextual", "combined")


def _fail(path, message):
    raise ConfigError(f"config field {path}: {message}")


def _check_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    return value


def _check_float(value, path, minimum=None, open_unit=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    value = float(value)
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}, got {value}")
    if open_unit and not 0.0 < value < 1.0:
        _fail(path, f"must lie strictly between 0 and 1, got {value}")
    return value


def _check_str(value, path, choices=None):
    if not isinstance(value, str):
        _fail(path, f"expected a string, got {value!r}")
    if choices is not None and value not in choices:
        _fail(path, f"expected one of {choices}, got {value!r}")
    return value


def _check_bool(value, path):
    if not isinstance(value, bool):
        _fail(path, f"expected true/false, got {value!r}")
    return value


def _check_list(value, path, item, length=None):
    if not isinstance(value, list):
        _fail(path, f"expected a list, got {value!r}")
    if length is not None and len(value) != length:
        _fail(path, f"expected exactly {length} entries, got {len(value)}")
    return [item(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _check_map(value, path, item):
    if not isinstance(value, dict):
        _fail(path, f"expected a mapping, got {value!r}")
    out = {}
    for key, v in value.items():
        if not isinstance(key, str):
            _fail(path, f"mapping keys must be strings, got {key!r}")
        out[key] = item(v, f"{path}.{key}")
    return out


def _section(raw, name, known):
    section = raw.get(name, {})
    if section is None:
        section = {}
    if not isinstance(section, dict):
        _fail(name, "expected a mapping of settings")
    unknown = sorted(set(section) - set(known))
    if unknown:
        _fail(f"{name}.{unknown[0]}", "unknown key")
    return section


def _float_or_none(section, key, path, default, **kw):
    value = section.get(key, default)
    return None if value is None else _check_float(value, path, **kw)


class PipelineConfig:
    """Validated pipeline settings with stable hashing helpers."""

    def __init__(self, sections):
        self.sections = sections

    def __getitem__(self, key):
        return self.sections[key]

    @property
    def seed(self):
        return self.sections["seed"]

    @property
    def out_dir(self):
        return self.sections.get("out_dir")

    def stage_seed(self, stage):
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        digest = hashlib.sha256(f"{self.seed}:{stage}".encode()).digest()
        return int.from_bytes(digest[:8], "big")

    def _scientific_sections(self):
        # Paths and runtime knobs must not change any computed number, so
        # they stay out of every hash.
        return {
            k: v for k, v in self.sections.items() if k not in ("out_dir", "runtime")
        }

    def content_hash(self):
        canon = json.dumps(self._scientific_sections(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    def chain_hash(self, stage):
        """Hash of the config visible to a stage and everything upstream."""
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        visible = {"seed": self.seed}
        for name in STAGES:
            section = _SECTION_OF_STAGE.get(name)
            if section is not None:
                visible[section] = self.sections[section]
            if name == stage:
                break
        canon = json.dumps(visible, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    def generator_spec(self):
        """Materialize the generate section as a generator spec."""
        g = self.sections["generate"]
        spec = default_generator_spec(
            n_patients=g["n_patients"], seed=self.stage_seed("generate")
        )
        spec.grid_size = g["grid_size"]
        spec.buffer_radius = g["buffer_radius"]
        spec.index_years = tuple(g["index_years"])
        spec.missingness_rates = dict(g["missingness"])
        spec.group_label_shift = dict(g["group_label_shift"])
        spec.group_location_shift = {
            k: tuple(v) for k, v in g["group_location_shift"].items()
        }
        if g["planted"] is not None:
            spec.planted_coefficients = dict(g["planted"])
        if g["contextual_fields"] is not None:
            spec.contextual_fields = {
                name: ContextualFieldSpec(
                    mean=fs["mean"], sd=fs["sd"], x_gradient=fs.get("x_gradient", 0.0)
                )
                for name, fs in g["contextual_fields"].items()
            }
        if g["intercept"] is not None:
            spec.intercept = g["intercept"]
        spec.validate()
        if g["intercept"] is None and g["target_prevalence"] is not None:
            spec.intercept = calibrate_intercept(spec, g["target_prevalence"])
        return spec


def load_config(path, seed_override=None):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config is not valid YAML{where}: {exc}")
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    cfg = parse_config(raw)
    if seed_override is not None:
        cfg.sections["seed"] = int(seed_override)
    return cfg


def parse_config(raw):
    known_top = (
        "seed",
        "out_dir",
        "runtime",
        "generate",
        "preprocess",
        "sample",
        "train",
        "evaluate",
        "explain",
        "causal",
        "fairness",
        "mitigate",
        "report",
    )
    unknown = sorted(set(raw) - set(known_top))
    if unknown:
        _fail(unknown[0], "unknown key")

    sections = {}
    sections["seed"] = _check_int(raw.get("seed", 0), "seed", minimum=0)
    out_dir = raw.get("out_dir")
    if out_dir is not None:
        out_dir = _check_str(out_dir, "out_dir")
    sections["out_dir"] = out_dir

    rt = _section(raw, "runtime", ("workers",))
    sections["runtime"] = {
        "workers": _check_int(rt.get("workers", 1), "runtime.workers", minimum=1)
    }

    g = _section(
        raw,
        "generate",
        (
            "n_patients",
            "grid_size",
            "buffer_radius",
            "index_years",
            "target_prevalence",
            "intercept",
            "planted",
            "group_label_shift",
            "group_location_shift",
            "missingness",
            "contextual_fields",
        ),
    )
    planted = g.get("planted")
    if planted is not None:
        planted = _check_map(
            planted, "generate.planted", lambda v, p: _check_float(v, p)
        )
    fields = g.get("contextual_fields")
    if fields is not None:
        def _field_spec(v, p):
            if not isinstance(v, dict):
                _fail(p, "expected {mean, sd, x_gradient}")
            extra = sorted(set(v) - {"mean", "sd", "x_gradient"})
            if extra:
                _fail(f"{p}.{extra[0]}", "unknown key")
            if "mean" not in v or "sd" not in v:
                _fail(p, "needs both mean and sd")
            return {
                "mean": _check_float(v["mean"], f"{p}.mean"),
                "sd": _check_float(v["sd"], f"{p}.sd", minimum=0.0),
                "x_gradient": _check_float(
                    v.get("x_gradient", 0.0), f"{p}.x_gradient"
                ),
            }

        fields = _check_map(fields, "generate.contextual_fields", _field_spec)
    sections["generate"] = {
        "n_patients": _check_int(g.get("n_patients", 2000), "generate.n_patients", 1),
        "grid_size": _check_int(g.get("grid_size", 16), "generate.grid_size", 2),
        "buffer_radius": _check_float(
            g.get("buffer_radius", 0.35), "generate.buffer_radius", minimum=1e-9
        ),
        "index_years": _check_list(
            g.get("index_years", list(range(2015, 2022))),
            "generate.index_years",
            _check_int,
        ),
        "target_prevalence": _float_or_none(
            g, "target_prevalence", "generate.target_prevalence", 0.10, open_unit=True
        ),
        "intercept": _float_or_none(g, "intercept", "generate.intercept", None),
        "planted": planted,
        "group_label_shift": _check_map(
            g.get("group_label_shift", {}),
            "generate.group_label_shift",
            lambda v, p: _check_float(v, p),
        ),
        "group_location_shift": _check_map(
            g.get("group_location_shift", {}),
            "generate.group_location_shift",
            lambda v, p: _check_list(v, p, _check_float, length=2),
        ),
        "missingness": _check_map(
            g.get("missingness", {}),
            "generate.missingness",
            lambda v, p: _check_float(v, p, minimum=0.0),
        ),
        "contextual_fields": fields,
    }

    pp = _section(raw, "preprocess", ("cutoff_year", "ratios"))
    sections["preprocess"] = {
        "cutoff_year": _check_int(pp.get("cutoff_year", 2020), "preprocess.cutoff_year"),
        "ratios": _check_list(
            pp.get("ratios", [0.7, 0.1, 0.2]),
            "preprocess.ratios",
            lambda v, p: _check_float(v, p, minimum=1e-9),
            length=3,
        ),
    }

    sp = _section(raw, "sample", ("method", "match_ratio"))
    sections["sample"] = {
        "method": _check_str(
            sp.get("method", "none"),
            "sample.method",
            choices=("none", "ros", "rus", "cci_match"),
        ),
        "match_ratio": _check_int(sp.get("match_ratio", 1), "sample.match_ratio", 1),
    }

    tr = _section(raw, "train", ("feature_set", "cv_folds", "linear", "gbdt"))
    lin = tr.get("linear", {}) or {}
    if not isinstance(lin, dict):
        _fail("train.linear", "expected a mapping")
    extra = sorted(set(lin) - {"l1", "l2"})
    if extra:
        _fail(f"train.linear.{extra[0]}", "unknown key")
    gb = tr.get("gbdt", {}) or {}
    if not isinstance(gb, dict):
        _fail("train.gbdt", "expected a mapping")
    gb_known = {
        "max_depth",
        "learning_rate",
        "reg_lambda",
        "gamma",
        "min_child_weight",
        "subsample",
        "colsample",
        "max_rounds",
        "early_stopping_patience",
    }
    extra = sorted(set(gb) - gb_known)
    if extra:
        _fail(f"train.gbdt.{extra[0]}", "unknown key")

    def _float_list(section, key, path, default):
        value = section.get(key, default)
        if not isinstance(value, list):
            value = [value]
        return _check_list(value, path, lambda v, p: _check_float(v, p, minimum=0.0))

    def _int_list(section, key, path, default):
        value = section.get(key, default)
        if not isinstance(value, list):
            value = [value]
        return _check_list(value, path, lambda v, p: _check_int(v, p, minimum=1))

    sections["train"] = {
        "feature_set": _check_str(
            tr.get("feature_set", "combined"), "train.feature_set", FEATURE_SETS
        ),
        "cv_folds": _check_int(tr.get("cv_folds", 5), "train.cv_folds", 2),
        "linear": {
            "l1": _float_list(lin, "l1", "train.linear.l1", [0.0]),
            "l2": _float_list(lin, "l2", "train.linear.l2", [0.0, 1e-2]),
        },
        "gbdt": {
            "max_depth": _int_list(gb, "max_depth", "train.gbdt.max_depth", [3]),
            "learning_rate": _float_list(
                gb, "learning_rate", "train.gbdt.learning_rate", [0.3]
            ),
            "reg_lambda": _float_list(gb, "reg_lambda", "train.gbdt.reg_lambda", [1.0]),
            "gamma": _check_float(gb.get("gamma", 0.0), "train.gbdt.gamma", 0.0),
            "min_child_weight": _check_float(
                gb.get("min_child_weight", 1.0), "train.gbdt.min_child_weight", 0.0
            ),
            "subsample": _check_float(gb.get("subsample", 1.0), "train.gbdt.subsample"),
            "colsample": _check_float(gb.get("colsample", 1.0), "train.gbdt.colsample"),
            "max_rounds": _check_int(gb.get("max_rounds", 60), "train.gbdt.max_rounds", 0),
            "early_stopping_patience": _check_int(
                gb.get("early_stopping_patience", 10),
                "train.gbdt.early_stopping_patience",
                1,
            ),
        },
    }

    ev = _section(raw, "evaluate", ("threshold",))
    sections["evaluate"] = {
        "threshold": _float_or_none(ev, "threshold", "evaluate.threshold", None)
    }

    ex = _section(
        raw, "explain", ("model", "background_size", "top_k", "max_rows", "combinations")
    )
    combos = ex.get("combinations")
    if combos is not None:
        combos = _check_list(
            combos,
            "explain.combinations",
            lambda v, p: _check_list(v, p, _check_str),
        )
    sections["explain"] = {
        "model": _check_str(ex.get("model", "gbdt"), "explain.model", ("linear", "gbdt")),
        "background_size": _check_int(
            ex.get("background_size", 128), "explain.background_size", 1
        ),
        "top_k": _check_int(ex.get("top_k", 15), "explain.top_k", 1),
        "max_rows": _check_int(ex.get("max_rows", 400), "explain.max_rows", 1),
        "combinations": combos,
    }

    ca = _section(
        raw, "causal", ("alpha", "top_k", "prefilter_penalty", "max_cond", "outcome_sink")
    )
    max_cond = ca.get("max_cond", 3)
    sections["causal"] = {
        "alpha": _check_float(ca.get("alpha", 0.05), "causal.alpha", open_unit=True),
        "top_k": _check_int(ca.get("top_k", 15), "causal.top_k", 1),
        # The prefilter keeps an edge roughly when the partial correlation
        # clears the penalty, independent of n; binary outcomes near 10%
        # prevalence damp correlations enough that 0.1 is far too strict.
        "prefilter_penalty": _check_float(
            ca.get("prefilter_penalty", 0.02), "causal.prefilter_penalty", minimum=0.0
        ),
        "max_cond": None if max_cond is None else _check_int(max_cond, "causal.max_cond", 0),
        # Off by default: the outcome may emit edges during the search, and
        # the flag exists for runs that want outcome-as-sink semantics.
        "outcome_sink": _check_bool(ca.get("outcome_sink", False), "causal.outcome_sink"),
    }

    fa = _section(raw, "fairness", ("privileged_group", "protected_groups"))
    sections["fairness"] = {
        "privileged_group": _check_str(
            fa.get("privileged_group", "NHW"), "fairness.privileged_group"
        ),
        "protected_groups": _check_list(
            fa.get("protected_groups", ["NHB", "Hispanic", "Other"]),
            "fairness.protected_groups",
            _check_str,
        ),
    }

    mi = _section(
        raw,
        "mitigate",
        (
            "model",
            "method",
            "repair_level",
            "adversary_weight",
            "steps",
            "adversary_sees_label",
            "protected_group",
        ),
    )
    protected_group = mi.get("protected_group")
    if protected_group is not None:
        protected_group = _check_str(protected_group, "mitigate.protected_group")
    sections["mitigate"] = {
        "model": _check_str(mi.get("model", "linear"), "mitigate.model", ("linear", "gbdt")),
        "method": _check_str(
            mi.get("method", "dir"),
            "mitigate.method",
            ("dir", "adversarial", "calibrated_eo"),
        ),
        "repair_level": _check_float(
            mi.get("repair_level", 1.0), "mitigate.repair_level", minimum=0.0
        ),
        "adversary_weight": _check_float(
            mi.get("adversary_weight", 1.0), "mitigate.adversary_weight", minimum=0.0
        ),
        "steps": _check_int(mi.get("steps", 300), "mitigate.steps", 1),
        "adversary_sees_label": _check_bool(
            mi.get("adversary_sees_label", False), "mitigate.adversary_sees_label"
        ),
        "protected_group": protected_group,
    }

    rp = _section(raw, "report", ("figures",))
    sections["report"] = {
        "figures": _check_bool(rp.get("figures", True), "report.figures")
    }

    if sections["mitigate"]["repair_level"] > 1.0:
        _fail("mitigate.repair_level", "must lie in [0, 1]")
    if sections["fairness"]["privileged_group"] in sections["fairness"]["protected_groups"]:
        _fail("fairness.privileged_group", "cannot also appear in protected_groups")

    return PipelineConfig(sections)
