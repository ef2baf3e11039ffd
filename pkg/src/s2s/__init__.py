"""Surface-to-structure translation toolkit.

Trains a contour-to-structure image translator against multiple patch
discriminators with differing receptive fields, and wraps it in a geometry
pipeline: slice a surface mesh into contour images, translate each slice,
assemble the results into a scalar volume, and extract threshold regions
as meshes. Includes a synthetic paired-phantom corpus, PSNR/SSIM metrics,
a CLI, and an HTTP job service.
"""

__version__ = "0.1.0"
