"""
Warping a reference frame
=========================

The toy renderer moves the whole reference frame by the head's crop offset,
crop scale and in-plane rotation. Whatever the warp uncovers is filled with
the nearest border pixel.
"""

import numpy as np

from convhead.params import HeadParams
from convhead.render import grid_sample_border, identity_grid, toy_render

# %%
# A small test card: each pixel holds its own column index.
card = np.tile(np.arange(8.0), (8, 1))

# %%
# Shift right by two pixels. Grid units span [-1, 1] across the 7 pixel gaps.
p = HeadParams.identity()
p.crop = np.array([2 * 2 / 7, 0.0, 1.0])
print(toy_render(card, p)[0])

# %%
# Sampling far outside the frame just repeats the edge column.
grid = identity_grid(8, 8)
grid[..., 0] += 5.0
print(grid_sample_border(card, grid)[0])

# %%
# Half a pixel between 0 and 10 is 5.
print(grid_sample_border(np.array([[0.0, 10.0]]), np.array([[[0.0, 0.0]]])))
