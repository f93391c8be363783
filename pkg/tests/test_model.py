"""Model assembly, parameter accounting, checkpoints, and training behaviour."""

import numpy as np
import pytest

from slotlab.charlstm import CharVocab
from slotlab.crf import TagSet
from slotlab.data import DataError, SlotSpan, utterance_from_words
from slotlab.evaluate import span_f1
from slotlab.model import Checkpoint, ModelConfig, SlotModel, count_parameters, parameter_reduction, predict
from slotlab.params import grad_check
from slotlab.synthetic import desk_config, make_from_to_corpus
from slotlab.tensor import ConfigError, NumericError
from slotlab.training import build_model, train, _check_finite

VOCAB = CharVocab([chr(97 + i) for i in range(10)])  # size 12
TAGSET = TagSet.from_slot_types(["x", "y"])  # size 5


def tiny_config(**overrides):
    base = dict(
        char_embed_dim=8,
        lstm_units=8,
        d_model=16,
        num_heads=2,
        head_size=8,
        num_blocks=4,
        max_relative_distance=2,
        dropout=0.0,
        attention_dropout=0.0,
        seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def utt(words, *spans):
    return utterance_from_words(words.split(), [SlotSpan(*s) for s in spans])


# ---------------------------------------------------------------------------
# parameter accounting


def test_count_matches_hand_sum_toy():
    cfg = tiny_config()
    counts = count_parameters(cfg, VOCAB.size, TAGSET.size)
    assert counts["char_embed"] == 12 * 8
    assert counts["char_lstm"] == 8 * 32 + 8 * 32 + 32
    assert counts["word_proj"] == 8 * 16 + 16
    # q(2*8) + key (16*16) + value (16*16) + out (16*16) + rel ((2*2+1)*8)
    assert counts["attention"] == 16 + 256 * 3 + 40
    assert counts["gate"] == 32 * 16 + 16
    assert counts["crf"] == 16 * 5 + 5 + 25 + 10
    assert counts["total"] == sum(v for k, v in counts.items() if k != "total")


@pytest.mark.parametrize("variant", ["abstract_rel", "self_rel", "self_abs", "none"])
@pytest.mark.parametrize("blocked", [False, True])
def test_count_matches_built_store(variant, blocked):
    cfg = tiny_config(variant=variant, use_block_dense=blocked)
    model = SlotModel(cfg, VOCAB, TAGSET)
    assert count_parameters(cfg, VOCAB.size, TAGSET.size)["total"] == model.store.total_count()


def test_atis_scale_totals_and_reduction():
    cfg = ModelConfig()
    full, blocked, factor = parameter_reduction(cfg, 47, 159)
    assert 0.9e6 <= full <= 1.15e6
    assert 3.8 <= factor <= 4.7
    assert blocked == count_parameters(
        ModelConfig(use_block_dense=True), 47, 159
    )["total"]


def test_blocked_kernels_store_exactly_one_kth():
    cfg_full = tiny_config(use_block_dense=False)
    cfg_blk = tiny_config(use_block_dense=True)
    full = count_parameters(cfg_full, VOCAB.size, TAGSET.size)
    blk = count_parameters(cfg_blk, VOCAB.size, TAGSET.size)
    # each blocked kernel shrinks by exactly 1/num_blocks; biases, embeddings,
    # the word projection and the CRF stay identical
    k = cfg_blk.num_blocks
    lstm_kernels = 8 * 32 + 8 * 32
    assert full["char_lstm"] - blk["char_lstm"] == lstm_kernels - lstm_kernels // k
    assert full["word_proj"] == blk["word_proj"]
    assert full["crf"] == blk["crf"]


def test_count_rejects_indivisible_blocking():
    cfg = tiny_config(use_block_dense=True, num_blocks=3)
    with pytest.raises(ConfigError):
        count_parameters(cfg, VOCAB.size, TAGSET.size)


def test_block_dense_model_shrinks_at_default_config():
    full, blocked, factor = parameter_reduction(ModelConfig(), 47, 159)
    assert factor >= 3.5


# ---------------------------------------------------------------------------
# forward behaviour


def test_variant_none_features_are_word_embeddings():
    cfg = tiny_config(variant="none")
    model = SlotModel(cfg, VOCAB, TAGSET)
    u = utt("abc de fgh")
    E = model.encoder.encode_words(model.word_ids(u))
    H = model.features(u)
    assert np.array_equal(E.data, H.data)


def test_saturated_gate_equals_crf_only_construction():
    cfg_none = tiny_config(variant="none")
    ref = SlotModel(cfg_none, VOCAB, TAGSET)
    cfg_attn = tiny_config(variant="abstract_rel")
    model = SlotModel(cfg_attn, VOCAB, TAGSET)
    for p in ref.store:  # shared submodules have identical names
        model.store[p.name].data[...] = p.data
    model.gate.layer.bias.data[...] = 30.0
    u = utt("abc de fgh abc")
    assert model.predict(u) == ref.predict(u)
    em_a = model.crf.emission(model.features(u)).data
    em_b = ref.crf.emission(ref.features(u)).data
    assert np.max(np.abs(em_a - em_b)) < 1e-9


def test_fixed_seed_rebuild_is_bit_identical():
    cfg = tiny_config()
    a = SlotModel(cfg, VOCAB, TAGSET)
    b = SlotModel(cfg, VOCAB, TAGSET)
    u = utt("abc de")
    assert np.array_equal(a.features(u).data, b.features(u).data)
    for pa, pb in zip(a.store, b.store):
        assert pa.name == pb.name and np.array_equal(pa.data, pb.data)


def test_f32_and_f64_forward_agree():
    cfg64 = tiny_config(dtype="f64")
    cfg32 = tiny_config(dtype="f32")
    m64 = SlotModel(cfg64, VOCAB, TAGSET)
    m32 = SlotModel(cfg32, VOCAB, TAGSET)
    u = utt("abc de fgh")
    em64 = m64.crf.emission(m64.features(u)).data
    em32 = m32.crf.emission(m32.features(u)).data
    assert em32.dtype == np.float32
    rel = np.abs(em64 - em32) / np.maximum(1e-6, np.abs(em64))
    assert rel.max() < 1e-3


def test_unknown_characters_never_fail():
    cfg = tiny_config()
    model = SlotModel(cfg, VOCAB, TAGSET)
    spans = model.predict(utt("zzz 0101 abc"))
    assert isinstance(spans, list)


def test_untrained_model_saturated_towards_outside_predicts_nothing():
    cfg = tiny_config()
    model = SlotModel(cfg, VOCAB, TAGSET)
    model.crf.emission.bias.data[...] = -20.0
    model.crf.emission.bias.data[0] = 20.0  # "O"
    assert model.predict(utt("abc de fgh")) == []


def test_two_process_runs_produce_identical_logits(tmp_path):
    import hashlib
    import subprocess
    import sys

    script = tmp_path / "emit.py"
    script.write_text(
        "import hashlib\n"
        "from slotlab.charlstm import CharVocab\n"
        "from slotlab.crf import TagSet\n"
        "from slotlab.data import utterance_from_words\n"
        "from slotlab.model import ModelConfig, SlotModel\n"
        "cfg = ModelConfig(char_embed_dim=8, lstm_units=8, d_model=16, num_heads=2,\n"
        "                  head_size=8, num_blocks=4, max_relative_distance=2, seed=5)\n"
        "model = SlotModel(cfg, CharVocab(list('abcdefghij')), TagSet.from_slot_types(['x', 'y']))\n"
        "u = utterance_from_words('abc de fgh'.split(), [])\n"
        "em = model.crf.emission(model.features(u)).data\n"
        "print(hashlib.sha256(em.tobytes()).hexdigest())\n"
    )
    runs = {subprocess.run([sys.executable, str(script)], capture_output=True, text=True, check=True).stdout for _ in range(2)}
    assert len(runs) == 1


def test_batched_features_match_single():
    cfg = tiny_config()
    model = SlotModel(cfg, VOCAB, TAGSET)
    utts = [utt("abc de"), utt("fgh abc de i"), utt("a")]
    H3, lengths = model.features_batch(utts)
    for b, u in enumerate(utts):
        single = model.features(u).data
        assert np.max(np.abs(H3.data[b, : len(u.tokens)] - single)) < 1e-12


def test_full_model_gradient_check():
    cfg = tiny_config()
    model = SlotModel(cfg, VOCAB, TAGSET)
    u = utt("abc de fgh", (0, 0, "x"), (2, 2, "y"))

    def f(store):
        return model.nll(u)

    # wider step than the per-layer checks: the deep graph leaves coordinates
    # with ~1e-8 gradients where 1e-5 steps are dominated by cancellation
    assert grad_check(f, model.store, eps=3e-4) < 1e-4


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg = tiny_config(variant="self_rel", use_block_dense=True)
    model = SlotModel(cfg, VOCAB, TAGSET)
    ck = Checkpoint.from_model(model)
    ck.save(tmp_path / "ck")
    again = Checkpoint.load(tmp_path / "ck")
    assert again.config == cfg
    assert again.vocab == VOCAB and again.tagset == TAGSET
    assert set(again.arrays) == set(ck.arrays)
    for name, arr in ck.arrays.items():
        assert np.array_equal(arr, again.arrays[name])
    u = utt("abc de fgh")
    assert again.build_model().predict(u) == model.predict(u)
    assert predict(u, again) == model.predict(u)


def test_checkpoint_round_trip_f32(tmp_path):
    cfg = tiny_config(dtype="f32")
    model = SlotModel(cfg, VOCAB, TAGSET)
    ck = Checkpoint.from_model(model)
    ck.save(tmp_path / "ck32")
    again = Checkpoint.load(tmp_path / "ck32")
    for name, arr in ck.arrays.items():
        assert arr.dtype == np.float32 and np.array_equal(arr, again.arrays[name])


def test_checkpoint_manifest_is_versioned_and_explicit(tmp_path):
    import json

    cfg = tiny_config()
    Checkpoint.from_model(SlotModel(cfg, VOCAB, TAGSET)).save(tmp_path / "ck")
    manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
    assert manifest["format_version"] == 1
    assert manifest["endianness"] == "little"
    assert manifest["params"][0].keys() == {"name", "shape", "offset", "dtype"}
    blob = (tmp_path / "ck" / "params.bin").read_bytes()
    total = sum(int(np.prod(p["shape"]) if p["shape"] else 1) for p in manifest["params"])
    assert len(blob) == total * 8


def test_checkpoint_rejects_unknown_version(tmp_path):
    import json

    cfg = tiny_config()
    Checkpoint.from_model(SlotModel(cfg, VOCAB, TAGSET)).save(tmp_path / "ck")
    path = tmp_path / "ck" / "manifest.json"
    manifest = json.loads(path.read_text())
    manifest["format_version"] = 99
    path.write_text(json.dumps(manifest))
    with pytest.raises(ConfigError):
        Checkpoint.load(tmp_path / "ck")


# ---------------------------------------------------------------------------
# training loop


def _small_corpus(n=50, seed=5):
    train_set, _ = make_from_to_corpus(seed=seed, n_train=n, n_test=10, n_train_cities=20, n_test_cities=5)
    return train_set


def train_config(**overrides):
    cfg = desk_config().to_dict()
    cfg.update(
        dict(char_embed_dim=12, lstm_units=16, d_model=24, num_heads=2, head_size=12, max_relative_distance=4)
    )
    cfg.update(overrides)
    return ModelConfig.from_dict(cfg)


def test_training_reaches_perfect_fit_on_small_synthetic():
    corpus = _small_corpus()
    # patience large enough to survive the first epochs where dev F1 sits at 0
    cfg = train_config(max_epochs=200, patience=40, dropout=0.1)
    checkpoint, log = train(corpus, corpus, cfg)
    model = checkpoint.build_model()
    report = span_f1([list(u.spans) for u in corpus], model.predict_batch(corpus))
    assert report.micro_f1 == 1.0
    assert len(log) <= 200


def test_loss_decreases_over_first_five_epochs():
    corpus = _small_corpus(n=32)
    cfg = train_config(max_epochs=5, batch_size=32, dropout=0.0, attention_dropout=0.0)
    _, log = train(corpus, None, cfg)
    losses = [r["train_loss"] for r in log]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_zero_learning_rate_changes_nothing():
    corpus = _small_corpus(n=8)
    cfg = train_config(max_epochs=1, learning_rate=0.0, dropout=0.0, attention_dropout=0.0)
    model = build_model(corpus, cfg)
    before = model.store.snapshot()
    checkpoint, _ = train(corpus, None, cfg)
    for name, arr in checkpoint.arrays.items():
        assert np.array_equal(arr, before[name])


def test_same_seed_same_epoch_one_loss_to_the_bit():
    corpus = _small_corpus(n=24)
    cfg = train_config(max_epochs=2)
    _, log_a = train(corpus, None, cfg)
    _, log_b = train(corpus, None, cfg)
    assert log_a[0]["train_loss"] == log_b[0]["train_loss"]
    assert log_a[1]["train_loss"] == log_b[1]["train_loss"]


def test_early_stopping_returns_best_dev_checkpoint():
    corpus = _small_corpus(n=40)
    cfg = train_config(max_epochs=60, patience=3)
    checkpoint, log = train(corpus, corpus, cfg)
    best = max(r["dev_f1"] for r in log)
    model = checkpoint.build_model()
    report = span_f1([list(u.spans) for u in corpus], model.predict_batch(corpus))
    assert report.micro_f1 == pytest.approx(best)
    # stopped within patience+1 epochs of the last improvement
    best_epoch = max((r["epoch"] for r in log if r["dev_f1"] == best))
    assert log[-1]["epoch"] <= best_epoch + cfg.patience + 1


def test_train_rejects_empty_dataset():
    cfg = train_config()
    with pytest.raises(DataError):
        train([], None, cfg)


def test_nan_diagnostic_names_parameter():
    corpus = _small_corpus(n=4)
    cfg = train_config()
    model = build_model(corpus, cfg)
    model.store["encoder.char_embed"].data[...] = np.inf
    with pytest.raises(NumericError) as err:
        _check_finite(float("nan"), model)
    assert "encoder.char_embed" in str(err.value)


def test_training_log_record_shape():
    corpus = _small_corpus(n=8)
    cfg = train_config(max_epochs=1)
    _, log = train(corpus, corpus[:4], cfg)
    record = log[0]
    assert set(record) == {"epoch", "train_loss", "dev_f1", "seconds"}
    assert record["epoch"] == 1 and record["seconds"] >= 0
