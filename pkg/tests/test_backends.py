import pytest
import torch

from stancedistill.backends import BackendFailure, HFSeq2Seq, ModelBackend, TinySeq2Seq, make_backend


def test_tiny_tokenize_round_trip():
    b = TinySeq2Seq(0)
    text = "Atheism</s>god is dead!"
    assert b.detokenize(b.tokenize(text)) == text
    assert isinstance(b, ModelBackend)


def test_tiny_deterministic_loss_and_generation():
    a, b = TinySeq2Seq(3), TinySeq2Seq(3)
    src = [a.tokenize("abc"), a.tokenize("hello there")]
    tgt = [a.tokenize("favor"), a.tokenize("against")]
    la, lb = a.teacher_forced_loss(src, tgt), b.teacher_forced_loss(src, tgt)
    assert la.shape == (2,) and torch.equal(la, lb)
    assert a.generate(src, 8) == b.generate(src, 8) == a.generate(src, 8)
    assert a.generate([], 8) == []


def test_tiny_state_and_files(tmp_path):
    a, b = TinySeq2Seq(1), TinySeq2Seq(2)
    a.save(tmp_path / "w.pt")
    b.load(tmp_path / "w.pt")
    src = [a.tokenize("x y z")]
    assert a.generate(src, 6) == b.generate(src, 6)
    assert 10_000 < a.n_parameters < 200_000


def test_step_requires_optimizer():
    b = TinySeq2Seq(0)
    loss = b.teacher_forced_loss([b.tokenize("a")], [b.tokenize("b")]).mean()
    with pytest.raises(BackendFailure):
        b.step(loss)


def test_make_backend():
    assert isinstance(make_backend("tiny", seed=2), TinySeq2Seq)
    with pytest.raises(ValueError):
        make_backend("bogus")


@pytest.fixture(scope="module")
def hf_backend():
    transformers = pytest.importorskip("transformers")
    torch.manual_seed(0)
    cfg = transformers.T5Config(vocab_size=384, d_model=16, d_ff=32, num_layers=1, num_heads=2, d_kv=8,
                                decoder_start_token_id=0, pad_token_id=0, eos_token_id=1)
    model = transformers.T5ForConditionalGeneration(cfg)
    return HFSeq2Seq(model, transformers.ByT5Tokenizer())


def test_hf_adapter_contract(hf_backend):
    b = hf_backend
    src = [b.tokenize("Atheism</s>god"), b.tokenize("Stance: x")]
    tgt = [b.tokenize("favor"), b.tokenize("against")]
    loss = b.teacher_forced_loss(src, tgt)
    assert loss.shape == (2,) and torch.isfinite(loss).all()
    outs = b.generate(src, 4)
    assert len(outs) == 2 and all(isinstance(o, str) for o in outs)
    before = b.get_state()
    b.configure_optimizer(1e-2)
    b.step(loss.mean())
    assert any(not torch.equal(before[k], v) for k, v in b.get_state().items())
    b.set_state(before)
    assert all(torch.equal(before[k], v) for k, v in b.get_state().items())
