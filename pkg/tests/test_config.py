"""Config file format, overrides, aliases, hashing and variant files."""

from pathlib import Path

import pytest

from sslcal.lib.config import (
    RunConfig,
    apply_overrides,
    config_hash,
    dump_config,
    load_config,
    load_variants,
    parse_config,
    parse_override,
    parse_variants,
    resolve_key,
    save_config,
    to_flat,
)
from sslcal.lib.errors import ConfigError, ReportError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class TestParse:

    def test_sections_and_comments(self):
        cfg = parse_config(
            "# top\n"
            "[threshold]\n"
            "strategy = class_adaptive   \n"
            "; other comment\n"
            "tau = 0.9\n"
            "\n"
            "[model]\n"
            "hidden = 32, 16\n"
        )
        assert cfg.threshold.strategy == "class_adaptive"
        assert cfg.threshold.tau == 0.9
        assert cfg.model.hidden == (32, 16)
        assert cfg.penalty == RunConfig().penalty

    def test_dotted_key_ignores_header(self):
        cfg = parse_config("[model]\npenalty.margin = 8\n")
        assert cfg.penalty.margin == 8.0

    def test_aliases(self):
        cfg = parse_config("[penalty]\nlambda = 0.25\n[dataset]\nn1 = 200\nm = 400\n")
        assert cfg.penalty.weight == 0.25
        assert cfg.dataset.head_labeled == 200
        assert cfg.dataset.head_unlabeled == 400
        assert resolve_key("PENALTY.LAMBDA") == ("penalty", "weight")

    def test_bool_values(self):
        assert parse_config("[dataset]\nlongtail = yes\n").dataset.longtail is True
        assert parse_config("[dataset]\nlongtail = off\n").dataset.longtail is False

    @pytest.mark.parametrize("text", [
        "[penalty]\nmargin_size = 3\n",
        "[bogus]\nx = 1\n",
        "tau = 0.9\n",
        "[threshold]\ntau\n",
        "[train]\niterations = many\n",
        "[dataset]\nlongtail = maybe\n",
        "[threshold]\nstrategy = dash\n",
        "[penalty]\nmargin = 0\n",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)


class TestOverrides:

    def test_later_wins(self):
        cfg = apply_overrides(RunConfig(), [("threshold.tau", "0.8"), ("threshold.tau", "0.7")])
        assert cfg.threshold.tau == 0.7

    def test_mapping_and_tuples(self):
        cfg = apply_overrides(RunConfig(), {"train.seeds": "3,4",
                                           "augment.strong_scale_range": "0.9,1.1"})
        assert cfg.train.seeds == (3, 4)
        assert cfg.augment.strong_scale_range == (0.9, 1.1)

    def test_parse_override(self):
        assert parse_override(" penalty.lambda = 0 ") == ("penalty.lambda", "0")
        with pytest.raises(ConfigError):
            parse_override("penalty.lambda")

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("[threshold]\ntau = 0.9\n", encoding="utf-8")
        cfg = load_config(path, ["threshold.tau=0.8", "train.iterations=10"])
        assert cfg.threshold.tau == 0.8
        assert cfg.train.iterations == 10

    def test_defaults_without_file(self):
        assert load_config(None) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ReportError):
            load_config(tmp_path / "nope.cfg")

    def test_negative_seed(self):
        with pytest.raises(ConfigError) as exc:
            apply_overrides(RunConfig(), {"train.seeds": "0,-1"})
        assert exc.value.context["seeds"] == [0, -1]


class TestCanonical:

    def test_canonical_matches_defaults(self):
        assert load_config(CONFIGS / "canonical.cfg") == RunConfig()

    def test_longtail(self):
        cfg = load_config(CONFIGS / "longtail.cfg")
        assert cfg.dataset.longtail is True
        assert (cfg.dataset.head_labeled, cfg.dataset.head_unlabeled) == (150, 300)
        assert (cfg.dataset.gamma_l, cfg.dataset.gamma_u) == (10, -10)

    def test_derived(self):
        cfg = RunConfig()
        assert cfg.widths() == (2, 64, 64, 4)
        assert cfg.train.unlabeled_batch == 64
        assert cfg.penalty_active
        assert not apply_overrides(cfg, {"penalty.lambda": "0"}).penalty_active


class TestHash:

    def test_stable_and_short(self):
        h = config_hash(RunConfig())
        assert h == config_hash(RunConfig())
        assert len(h) == 12
        int(h, 16)

    def test_semantic_change(self):
        assert config_hash(apply_overrides(RunConfig(), {"penalty.margin": "8"})) != \
            config_hash(RunConfig())

    def test_ignores_out_dir_and_seeds(self):
        moved = apply_overrides(RunConfig(), {"train.out_dir": "/tmp/x", "train.seeds": "9"})
        assert config_hash(moved) == config_hash(RunConfig())

    def test_flat_keys_sorted(self):
        keys = list(to_flat(RunConfig()))
        assert keys == sorted(keys)
        assert "penalty.weight" in keys


class TestDump:

    def test_round_trip(self):
        cfg = apply_overrides(RunConfig(), {
            "model.hidden": "32", "dataset.longtail": "true", "threshold.strategy": "self_adaptive",
            "baseline.kind": "fl", "optim.weight_decay": "0.0001",
        })
        assert parse_config(dump_config(cfg)) == cfg

    def test_save(self, tmp_path):
        path = save_config(RunConfig(), tmp_path / "sub" / "config.cfg")
        assert load_config(path) == RunConfig()


class TestVariants:

    def test_ablation_file(self):
        variants = load_variants(CONFIGS / "ablation_variants.cfg")
        assert list(variants) == ["no_penalty", "penalty_u2", "penalty_u1_u2"]
        cfg = apply_overrides(RunConfig(), variants["penalty_u1_u2"])
        assert cfg.penalty.apply_set == "U1_and_U2"
        assert not apply_overrides(RunConfig(), variants["no_penalty"]).penalty_active

    @pytest.mark.parametrize("text", [
        "penalty.lambda = 0\n",
        "[v]\nlambda = 0\n",
        "[v]\npenalty.nope = 1\n",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_variants(text)

    def test_duplicate_variant(self):
        text = ("[on]\npenalty.lambda = 0.1\n\n[off]\npenalty.lambda = 0\n\n"
                "[on]\npenalty.margin = 4\n")
        with pytest.raises(ConfigError) as exc:
            parse_variants(text)
        assert exc.value.context["line"] == 7

    def test_header_only_variant_is_base(self):
        variants = parse_variants("[base]\n\n[off]\npenalty.lambda = 0\n")
        assert variants == {"base": [], "off": [("penalty.lambda", "0")]}
