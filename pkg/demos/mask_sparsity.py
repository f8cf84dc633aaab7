"""
How sparse is the block attention mask?
=======================================

Every query in a segment of S frames sees L cached frames on the left, its
own segment, and R frames of right context.  The rest of the T x T score
matrix is masked out, and that fraction grows with the utterance length.
"""

import numpy as np

from streaming_ac import emformer as E
from streaming_ac import kernels as K

cfg = E.EmformerConfig(segment=4, left_context=30, right_context=8)
for t in (100, 200, 400, 800, 1600):
    mask = E.build_block_mask(t, cfg)
    print(f"T={t:5d}: {mask.num_blocks:4d} segments, sparsity {E.mask_sparsity(mask):.4f}")

# The left context sets the asymptote 1 - (L+S+R)/T.  A 70% average needs
# roughly L+S+R = 0.3 T, e.g. a much wider window at these lengths:
for left in (30, 60, 120):
    c = E.EmformerConfig(segment=4, left_context=left, right_context=8)
    print(f"L={left:3d}:", [round(E.mask_sparsity(E.build_block_mask(t, c)), 3) for t in (200, 400, 800)])

# Gathering only the allowed key blocks gives the same result as the dense
# masked softmax, and touches a fraction of the scores.
rng = np.random.default_rng(0)
mask = E.build_block_mask(200, cfg)
q, k, v = (rng.standard_normal((2, 200, 8)).astype(np.float32) for _ in range(3))
sparse = E.blocksparse_attention(q, k, v, mask)
dense = K.masked_softmax_attention(q, k, v, mask.dense())
print("block-sparse vs dense max diff:", float(np.abs(sparse - dense).max()))
print("scores computed:", mask.allowed_count(), "of", 200 * 200)
