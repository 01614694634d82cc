"""
Training a tiny model under each paradigm
=========================================

Fits the small character-level backend on 32 toy examples for 200 steps per
paradigm and reports training-set accuracy. For the two-task setup alpha
weights the stance loss against the rationale loss.
"""

from stancedistill import synthetic
from stancedistill.backends import TinySeq2Seq
from stancedistill.codec import Paradigm
from stancedistill.corpus import CorpusSplit
from stancedistill.elicitor import MockCompletionClient, elicit_rationale
from stancedistill.evaluator import score
from stancedistill.trainer import TrainConfig, mtl_combine_loss, predict, train

toy = synthetic.make_examples(32, seed=3)
rationales = {e.id: elicit_rationale(e, MockCompletionClient()) for e in toy}
split = CorpusSplit(toy, [], [], seed=0)

# The combined objective is a plain convex mix of the two task losses
print(mtl_combine_loss(2.0, 5.0, alpha=0.2))

for paradigm in Paradigm:
    cfg = TrainConfig(paradigm=paradigm, alpha=0.5, batch_size=64 if paradigm is Paradigm.MTL else 32,
                      learning_rate=5e-3, epochs=200, max_steps=200, max_generation_tokens=64,
                      eval_each_epoch=False)
    backend = TinySeq2Seq(seed=0)
    record = train(backend, split, rationales, cfg)
    outcomes = predict(backend, toy, paradigm, cfg)
    acc = sum(o.label is e.gold for o, e in zip(outcomes, toy)) / len(toy)
    report = score([e.gold for e in toy], outcomes, [e.topic for e in toy])
    print(f"{paradigm.value:6} loss {record.epochs[0].combined:.3f} -> {record.epochs[-1].combined:.3f}"
          f"  accuracy {acc:.2%}  F_avg {report.f_avg:.3f}")
