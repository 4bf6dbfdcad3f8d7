"""How the structure-aware multiplier scales cross-entropy over the two stages."""
from minsurf import beta_for_stage, s2ms_loss, s2ms_multiplier

ce = 2.0
print("accuracy  stage1  stage2")
for acc in (0.0, 0.25, 0.5, 0.75, 1.0):
    m1 = s2ms_multiplier(acc, beta_for_stage(1))
    m2 = s2ms_multiplier(acc, beta_for_stage(2))
    print(f"{acc:8.2f}  {m1:6.3f}  {m2:6.3f}")

# a perfect structure leaves the loss untouched, a failed parse is penalised the most
print(s2ms_loss(ce, 1.0, beta_for_stage(2)), s2ms_loss(ce, 0.0, beta_for_stage(2)))
