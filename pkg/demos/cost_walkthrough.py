"""
What does temporal modelling cost?
==================================

Counts multiply-accumulates for three ways of giving a 3x3 conv some temporal
reach, first for a single layer and then for a whole ResNet-50.
"""

from tadaconv.cost import OpCostSpec, cost_diff, load_catalog, network_cost, op_cost, round_pct

# One 64-channel layer on 8 frames of 56x56.
setting = dict(c_out=64, c_in=64, k=3, t=8, h=56, w=56, r=4)
plain = op_cost(OpCostSpec(**setting, variant="conv2d"))

for variant in ("conv2d", "conv21d", "tadaconv"):
    rep = op_cost(OpCostSpec(**setting, variant=variant))
    d = cost_diff(rep, plain)
    print(f"{variant:9s} {rep.flops:>14,} MACs  {rep.params:>7,} params  "
          f"(+{round_pct(d.flops_pct)} FLOPs, +{round_pct(d.params_pct)} params)")

# Where the TAdaConv extra work goes.  Almost all of it is rescaling the
# kernel once per frame; the generator itself is tiny.
rep = op_cost(OpCostSpec(**setting, variant="tadaconv"))
for layer in rep.layers[1:]:
    print(f"  {layer.name:22s} {layer.flops:>10,}")

# %%
# The same comparison over a full backbone.  Stem, head and projection
# shortcuts are not itemised in the reference totals, so the report carries
# its assumptions along.
nets = load_catalog()
base = network_cost(nets["r50-r2d"])
for name in ("r50-r2d", "r50-r21d", "r50-tadaconv", "r50-tada2d"):
    rep = network_cost(nets[name], t=8, hw=224)
    d = cost_diff(rep, base)
    print(f"{name:13s} {rep.gflops:7.3f} GFLOPs ({d.flops_pct:+5.2f}%)  {rep.mparams:6.2f} M params")

print("\nassumptions:")
for a in base.assumptions:
    print(" -", a)
