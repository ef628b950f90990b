import numpy as np

from ctcpipe.raster import GrayImage


def disc(shape, cx, cy, r):
    yy, xx = np.mgrid[: shape[0], : shape[1]]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def field_with(shape, masks_and_values, background=20):
    arr = np.full(shape, background, dtype=np.uint8)
    for m, v in masks_and_values:
        arr[m] = v
    return GrayImage(arr)
